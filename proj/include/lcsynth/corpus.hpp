#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace lcsynth {

using TokenId = std::uint32_t;

enum class CorpusKind { source, retrieval };

std::string_view corpus_name(CorpusKind kind);
/// Accepts "source"/"source_corpus" and "retrieval"/"retrieval_corpus".
std::optional<CorpusKind> parse_corpus_kind(std::string_view name);

struct Document {
    std::string id;
    std::string text;
    CorpusKind source = CorpusKind::source;
};

struct TokenSequence {
    std::string doc_id;
    std::vector<TokenId> tokens;
    /// Byte span [first, second) of each token in the source text.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> offsets;

    std::size_t size() const noexcept { return tokens.size(); }
};

struct Chunk {
    std::string doc_id;
    std::size_t start = 0;
    std::size_t length = 0;
    std::vector<TokenId> tokens;
};

class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::size_t vocab_size() const = 0;
    virtual TokenSequence tokenize(const Document& doc) const = 0;
    virtual std::string detokenize(std::span<const TokenId> tokens) const = 0;
};

/// One token per byte; vocabulary 256. Round-trips any byte string.
class ByteTokenizer final : public Tokenizer {
public:
    std::size_t vocab_size() const override { return 256; }
    TokenSequence tokenize(const Document& doc) const override;
    std::string detokenize(std::span<const TokenId> tokens) const override;
};

TokenSequence tokenize(const Document& doc);
std::string detokenize(std::span<const TokenId> tokens);

struct RecordError {
    std::size_t line = 0;  // 1-based
    std::string message;
};

struct IngestReport {
    std::size_t accepted = 0;
    std::vector<RecordError> errors;
};

/// Append-only document store keyed by id. When backed by a file, every
/// accepted record is appended as one JSON line; reopening replays the file.
class DocumentStore {
public:
    DocumentStore() = default;

    static DocumentStore open(const std::filesystem::path& file);

    /// Reads line-delimited {"id", "text", optional "source"} records. Bad
    /// lines and duplicate ids become record errors; ingestion continues.
    IngestReport ingest(std::istream& in, CorpusKind source);

    /// Throws ParameterError on an empty id/text or a duplicate id.
    void add(Document doc);

    std::size_t size() const noexcept { return docs_.size(); }
    bool empty() const noexcept { return docs_.empty(); }
    const Document& at(std::size_t i) const { return docs_.at(i); }
    const std::vector<Document>& documents() const noexcept { return docs_; }
    const Document* find(std::string_view id) const;
    std::optional<std::size_t> index_of(std::string_view id) const;
    std::size_t count(CorpusKind kind) const;
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    void append_to_file(const Document& doc);

    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::filesystem::path path_;
};

/// Immutable tokenized view of a store, shared read-only by parallel workers.
class TokenizedCorpus {
public:
    TokenizedCorpus() = default;
    TokenizedCorpus(const DocumentStore& store, const Tokenizer& tokenizer);
    explicit TokenizedCorpus(std::vector<TokenSequence> seqs);

    std::size_t size() const noexcept { return seqs_.size(); }
    const TokenSequence& at(std::size_t i) const { return seqs_.at(i); }
    const TokenSequence* find(std::string_view id) const;
    std::optional<std::size_t> index_of(std::string_view id) const;
    const std::vector<TokenSequence>& sequences() const noexcept { return seqs_; }
    std::size_t total_tokens() const noexcept { return total_tokens_; }

private:
    void build_index();

    std::vector<TokenSequence> seqs_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::size_t total_tokens_ = 0;
};

/// (start, length) of consecutive non-overlapping windows; the last may be shorter.
std::vector<std::pair<std::size_t, std::size_t>> chunk_spans(std::size_t n_tokens, std::size_t chunk_len);

std::vector<Chunk> chunk(const TokenSequence& seq, std::size_t chunk_len);

/// Ids sampled by earlier stages.
class SampleLedger {
public:
    void record(std::span<const std::string> ids);
    bool contains(std::string_view id) const { return ids_.count(std::string(id)) != 0; }
    std::size_t size() const noexcept { return ids_.size(); }

private:
    std::unordered_set<std::string> ids_;
};

struct SampleOptions {
    bool with_replacement = false;
};

/// Seeded draw of n_docs source-corpus documents. Without replacement,
/// documents already in the ledger are ineligible. Throws StageSetupError when
/// fewer than n_docs are eligible.
std::vector<Document> sample_stage_docs(const DocumentStore& store, std::size_t n_docs, std::uint64_t seed,
                                        const SampleLedger& ledger, SampleOptions options = {});

}  // namespace lcsynth
