#pragma once

// Training-sequence construction: fill planning, hard-negative mining, the
// shuffled-prefix assembly and the per-stage construction driver.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcsynth/corpus.hpp"
#include "lcsynth/retrieval.hpp"
#include "lcsynth/scorer.hpp"
#include "lcsynth/screening.hpp"
#include "lcsynth/verification.hpp"

namespace lcsynth {

struct HardNegative {
    std::uint32_t row = 0;
    Chunk chunk;
    std::uint32_t seed_positive_row = 0;
    double score = 0.0;
    int stage = 0;
};

struct FillPlan {
    std::size_t m = 0;
    std::size_t needed_tokens = 0;
    std::size_t depth_k = 0;
    /// Length after whole-chunk front truncation, assuming full-length negatives.
    std::size_t planned_tokens = 0;
    /// L <= root length: the root is emitted without a prefix.
    bool root_alone = false;
};

/// depth_k = ceil(needed / (m * chunk_len)) with needed = max(0, L - root_len - sum(positive_lens)).
/// Throws NoPositiveError when positive_lens is empty.
FillPlan plan_fill(std::size_t root_len, std::span<const std::size_t> positive_lens, std::size_t L,
                   std::size_t chunk_len);

enum class SegmentKind { positive, negative, root };

std::string_view segment_kind_name(SegmentKind kind);
std::optional<SegmentKind> parse_segment_kind(std::string_view name);

struct Segment {
    SegmentKind kind = SegmentKind::root;
    std::string doc_id;
    std::size_t start = 0;  // token index inside doc_id
    std::size_t len = 0;

    friend bool operator==(const Segment&, const Segment&) = default;
};

/// A verified position inside an assembled sequence.
struct Target {
    std::size_t root_index = 0;  // index of x_i in the root
    std::size_t offset = 0;      // index of x_i in the sequence tokens
    std::string positive_doc;
    std::size_t positive_start = 0;
    double delta_h = 0.0;

    friend bool operator==(const Target&, const Target&) = default;
};

struct TrainingSequence {
    int stage = 0;
    std::string root_id;
    std::uint64_t shuffle_seed = 0;
    std::vector<TokenId> tokens;
    std::vector<Segment> layout;     // tiles tokens; root last
    std::vector<Segment> truncated;  // prefix chunks dropped to fit L, in drop order
    std::vector<Target> targets;
    std::string snapshot_id;
    bool shortfall = false;
    bool root_alone = false;
};

/// Globally shuffled positives and negatives prepended to the root. Positives
/// naming the same chunk are merged (all their targets are kept). Throws
/// AssemblyError when a chunk appears as both positive and negative or twice
/// as a negative.
TrainingSequence assemble(const TokenSequence& root, std::span<const VerifiedPositive> positives,
                          std::span<const HardNegative> negatives, std::size_t L, std::uint64_t shuffle_seed);

struct NegativeGather {
    std::vector<HardNegative> negatives;
    std::size_t queries = 0;
    /// The index ran out of admissible chunks before token_target was met.
    bool shortfall = false;
};

/// Secondary retrieval for every positive row: depth_k neighbours each,
/// excluding the root document, every positive row and negatives already
/// taken; then one more per positive in turn until the negatives hold at
/// least token_target tokens or the index is exhausted.
NegativeGather gather_negatives(const RetrievalContext& ctx, std::span<const std::uint32_t> positive_rows,
                                std::optional<std::uint32_t> root_doc, std::size_t depth_k, std::size_t token_target,
                                int stage);

struct ConstructParams {
    double percentile_k = 5.0;
    SelectOptions select{32, std::nullopt};
    bool corpus_wide_percentile = false;
    std::size_t window_left = 64;
    std::size_t window_right = 64;
    std::size_t K = 8;
    VerifyParams verify;  // verify.screening_length is also the screening window
    std::size_t L = 4096;
    std::size_t chunk_len = 512;
    std::size_t budget_tokens = 200000;
    std::uint64_t seed = 0;
    std::size_t workers = 0;
    /// Documents processed per parallel round; 0 picks from the worker count.
    std::size_t batch_docs = 0;
};

struct StageCounters {
    std::size_t docs_sampled = 0;
    std::size_t docs_processed = 0;
    std::size_t positions_selected = 0;
    std::size_t candidates_retrieved = 0;
    std::size_t positives_verified = 0;
    std::size_t negatives_mined = 0;
    std::size_t sequences_emitted = 0;
    std::size_t tokens_emitted = 0;
    std::size_t skipped_docs = 0;
    std::size_t skipped_no_positive = 0;
    std::size_t skipped_errors = 0;
    std::size_t root_alone = 0;
    std::size_t shortfall_sequences = 0;
    bool budget_reached = false;
};

struct PhaseTimes {
    double screening = 0.0;
    double retrieval = 0.0;
    double verification = 0.0;
    double assembly = 0.0;
};

struct DocIssue {
    std::string doc_id;
    std::string kind;
    std::string message;
};

struct StageArtifacts {
    std::vector<TrainingSequence> sequences;  // sorted by root_id
    std::vector<SelectedPosition> positions;  // processed documents, sample order
    std::vector<VerificationRecord> verification;
    std::vector<VerifiedPositive> positives;
    StageCounters counters;
    PhaseTimes times;  // summed over documents
    std::vector<DocIssue> issues;
};

/// Per-stage construction: screen, retrieve, verify, plan, mine negatives and
/// assemble each root in `docs` order, stopping once the emitted tokens reach
/// budget_tokens. Output does not depend on the worker count. Throws
/// StageError when no sequence was produced.
StageArtifacts assemble_stage(const Scorer& scorer, const RetrievalContext& ctx, std::span<const TokenSequence> docs,
                              int stage, const ConstructParams& params);

}  // namespace lcsynth
