#pragma once

// Model interface used for screening and verification, and the built-in
// interpolated cache n-gram backend.
//
// Built-in predictive distribution at position i of an input sequence x:
//
//   p(v | x[0..i)) = lambda * p_global(v | ctx) + (1 - lambda) * p_cache(v | x[0..i))
//
// where ctx is the last (order-1) tokens (BOS-padded at the start of the input),
// p_global is the Laplace(alpha)-smoothed count table, and p_cache is the
// empirical distribution of tokens that followed earlier occurrences of ctx in
// the same input. Without an earlier occurrence p_cache falls back to p_global.
// Entropies and losses are in nats.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lcsynth/corpus.hpp"

namespace lcsynth {

enum class ScorerBackend { builtin_cache_ngram, remote };

std::string_view backend_name(ScorerBackend backend);

struct ScorerSnapshot {
    std::string snapshot_id;
    int stage_index = 0;
    ScorerBackend backend = ScorerBackend::builtin_cache_ngram;
};

struct EntropyProfile {
    std::string doc_id;
    std::vector<double> entropies;
    std::string snapshot_id;
};

/// Read-only scoring against one immutable snapshot. Implementations must be
/// safe to call concurrently.
class Scorer {
public:
    virtual ~Scorer() = default;

    virtual const ScorerSnapshot& snapshot() const = 0;
    virtual std::size_t vocab_size() const = 0;

    /// Entropy at every position. With window > 0, position i is scored as the
    /// last token of the input tokens[max(0, i+1-window) .. i].
    virtual std::vector<double> entropies(std::span<const TokenId> tokens, std::size_t window) const = 0;

    /// Entropy at seq[p] for each p, scored on the input prepend ++ seq.
    virtual std::vector<double> conditional_entropy(std::span<const TokenId> prepend, std::span<const TokenId> seq,
                                                    std::span<const std::size_t> positions) const = 0;

    /// -ln p(seq[p]) for each p, scored on the input prepend ++ seq.
    virtual std::vector<double> loss_at(std::span<const TokenId> prepend, std::span<const TokenId> seq,
                                        std::span<const std::size_t> positions) const = 0;
};

EntropyProfile entropy_profile(const Scorer& scorer, const TokenSequence& seq, std::size_t window = 0);

std::vector<double> conditional_entropy(const Scorer& scorer, std::span<const TokenId> prepend,
                                        const TokenSequence& seq, std::span<const std::size_t> positions);

std::vector<double> loss_at(const Scorer& scorer, std::span<const TokenId> prepend, const TokenSequence& seq,
                            std::span<const std::size_t> positions);

// ---------------------------------------------------------------------------
// Built-in backend

struct NgramParams {
    std::size_t order = 3;
    std::size_t vocab = 256;
    /// Weight of the global table; 1 - lambda goes to the in-context cache.
    double lambda = 0.3;
    double alpha = 1.0;
};

struct CountRow {
    std::vector<std::pair<TokenId, std::uint64_t>> entries;  // sorted by token
    std::uint64_t total = 0;
};

/// Next-token counts observed in the current input for one context, sorted by token.
struct CacheCounts {
    std::vector<std::pair<TokenId, std::uint64_t>> entries;
    std::uint64_t total = 0;
};

class CacheNgramModel {
public:
    explicit CacheNgramModel(NgramParams params = {});

    const NgramParams& params() const noexcept { return params_; }

    /// Key of the context that predicts tokens[pos] (BOS-padded before 0).
    std::uint64_t context_key(std::span<const TokenId> tokens, std::size_t pos) const;
    /// Key of an explicit context of length order-1; use vocab as the BOS marker.
    std::uint64_t key_of(std::span<const TokenId> context) const;

    const CountRow* row(std::uint64_t key) const;
    std::uint64_t count(std::span<const TokenId> context, TokenId next) const;
    std::uint64_t context_total(std::span<const TokenId> context) const;
    std::size_t context_count() const noexcept { return rows_.size(); }
    std::uint64_t total_count() const noexcept { return total_; }

    /// Returns a new model whose counts are these counts plus the n-gram
    /// counts of every token of every sequence; *this is unchanged.
    CacheNgramModel trained(std::span<const std::vector<TokenId>> sequences) const;

    /// Content hash over parameters and counts.
    std::uint64_t fingerprint() const;

    /// Structural equality of parameters and counts.
    bool same_counts(const CacheNgramModel& other) const;

    void save(std::ostream& out) const;
    static CacheNgramModel load(std::istream& in);

    double entropy(const CountRow* global, const CacheCounts& cache) const;
    double probability(const CountRow* global, const CacheCounts& cache, TokenId token) const;

private:
    NgramParams params_;
    std::uint64_t base_ = 257;  // vocab + 1 (BOS)
    std::unordered_map<std::uint64_t, std::shared_ptr<const CountRow>> rows_;
    std::uint64_t total_ = 0;
};

class BuiltinScorer final : public Scorer {
public:
    BuiltinScorer(std::shared_ptr<const CacheNgramModel> model, ScorerSnapshot snapshot);

    const ScorerSnapshot& snapshot() const override { return snapshot_; }
    std::size_t vocab_size() const override { return model_->params().vocab; }

    std::vector<double> entropies(std::span<const TokenId> tokens, std::size_t window) const override;
    std::vector<double> conditional_entropy(std::span<const TokenId> prepend, std::span<const TokenId> seq,
                                            std::span<const std::size_t> positions) const override;
    std::vector<double> loss_at(std::span<const TokenId> prepend, std::span<const TokenId> seq,
                                std::span<const std::size_t> positions) const override;

    /// Loss at every position, windowed like entropies().
    std::vector<double> losses(std::span<const TokenId> tokens, std::size_t window) const;

    const CacheNgramModel& model() const noexcept { return *model_; }
    std::shared_ptr<const CacheNgramModel> model_ptr() const noexcept { return model_; }

private:
    enum class Quantity { entropy, loss };
    std::vector<double> profile(std::span<const TokenId> tokens, std::size_t window, Quantity what) const;
    std::vector<double> at_positions(std::span<const TokenId> prepend, std::span<const TokenId> seq,
                                     std::span<const std::size_t> positions, Quantity what) const;

    std::shared_ptr<const CacheNgramModel> model_;
    ScorerSnapshot snapshot_;
};

/// Identifier for a built-in snapshot: "M<stage>-<fingerprint hex>".
std::string builtin_snapshot_id(int stage, const CacheNgramModel& model);

/// A published model state. `model` is null for remote backends, where the
/// snapshot id names server-side weights.
struct ModelState {
    ScorerSnapshot snapshot;
    std::shared_ptr<const CacheNgramModel> model;
};

ModelState make_builtin_state(int stage, std::shared_ptr<const CacheNgramModel> model);

/// Desk-scale training step: count update over the token lists.
ModelState train_update(const ModelState& current, std::span<const std::vector<TokenId>> data);

void save_snapshot(const ModelState& state, const std::filesystem::path& file);
ModelState load_snapshot(const std::filesystem::path& file);

}  // namespace lcsynth
