#pragma once

// Chunk embeddings and an exact cosine-similarity index over the retrieval corpus.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lcsynth/corpus.hpp"

namespace lcsynth {

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dim() const = 0;
    /// Identifies the embedder and its frozen state; persisted with every index.
    virtual std::string fingerprint() const = 0;
    /// Unit-norm vector of dim() floats. Throws ParameterError on empty input.
    virtual std::vector<float> embed(std::span<const TokenId> tokens) const = 0;
    virtual std::vector<std::vector<float>> embed_batch(std::span<const std::span<const TokenId>> inputs) const;
};

struct TfidfParams {
    std::size_t dim = 256;
    /// Tokens per hashed feature. Windows shorter than this hash as one feature.
    std::size_t shingle = 4;
};

/// Hashed bag of token shingles with tf-idf weights. Features are FNV-1a
/// hashes of each shingle; document frequencies are kept on 2^20 hash slots
/// and frozen when the embedder is fitted.
class HashedTfidfEmbedder final : public Embedder {
public:
    static constexpr std::size_t kSlots = std::size_t{1} << 20;

    explicit HashedTfidfEmbedder(TfidfParams params = {});

    /// Fits document frequencies with one document per input.
    static HashedTfidfEmbedder fit(TfidfParams params, std::span<const std::span<const TokenId>> docs);

    std::size_t dim() const override { return params_.dim; }
    std::string fingerprint() const override;
    std::vector<float> embed(std::span<const TokenId> tokens) const override;

    const TfidfParams& params() const noexcept { return params_; }
    std::uint64_t n_docs() const noexcept { return n_docs_; }
    double idf(std::uint64_t slot) const;

    std::string serialize() const;
    static HashedTfidfEmbedder deserialize(const std::string& blob);

    /// Hash of each shingle of tokens, in order.
    std::vector<std::uint64_t> features(std::span<const TokenId> tokens) const;

private:
    TfidfParams params_;
    std::uint64_t n_docs_ = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> df_;  // (slot, df), sorted by slot
    std::uint64_t df_hash_ = 0;
    std::shared_ptr<const std::vector<double>> idf_;  // dense over kSlots

    void freeze();
};

/// Normalizes v in place with double accumulation. Throws ParameterError
/// when v is all zero.
void l2_normalize(std::vector<float>& v);

struct ChunkRef {
    std::uint32_t doc = 0;  // ordinal into VectorIndex::doc_ids()
    std::uint32_t start = 0;
    std::uint32_t length = 0;

    friend bool operator==(const ChunkRef&, const ChunkRef&) = default;
};

enum class QueryOrigin { fragment_query, secondary_query };

struct Candidate {
    std::uint32_t row = 0;  // index entry; rows are ordered by (doc_id, start)
    double score = 0.0;
    QueryOrigin origin = QueryOrigin::fragment_query;
};

/// Rows or whole documents a query must skip. Both lists are kept sorted.
struct QueryFilter {
    std::vector<std::uint32_t> docs;
    std::vector<std::uint32_t> rows;

    void exclude_doc(std::uint32_t doc);
    void exclude_row(std::uint32_t row);
    bool excludes(std::uint32_t row, std::uint32_t doc) const;
};

class VectorIndex {
public:
    VectorIndex() = default;

    /// Chunks every retrieval-corpus sequence (sorted by doc id) and embeds
    /// each chunk. Throws IndexError on an empty corpus or a dimension mismatch.
    static VectorIndex build(const TokenizedCorpus& corpus, std::size_t chunk_len, const Embedder& embedder,
                             std::size_t workers = 0);

    /// Index over explicit vectors; used by tests and by callers with
    /// precomputed embeddings.
    static VectorIndex from_vectors(std::vector<std::string> doc_ids, std::vector<ChunkRef> refs,
                                    std::vector<std::vector<float>> vectors, std::string embedder_fingerprint,
                                    std::string embedder_state = {}, std::size_t chunk_len = 0);

    void save(const std::filesystem::path& file) const;
    /// Throws IndexError when expected_fingerprint is non-empty and differs.
    static VectorIndex load(const std::filesystem::path& file, const std::string& expected_fingerprint = {});

    std::size_t size() const noexcept { return refs_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t chunk_len() const noexcept { return chunk_len_; }
    const std::string& build_id() const noexcept { return build_id_; }
    const std::string& embedder_fingerprint() const noexcept { return fingerprint_; }
    const std::string& embedder_state() const noexcept { return embedder_state_; }

    const ChunkRef& ref(std::size_t row) const { return refs_.at(row); }
    const float* vector(std::size_t row) const { return matrix_.data() + row * dim_; }
    const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
    const std::string& doc_id(std::size_t row) const { return doc_ids_.at(refs_.at(row).doc); }
    std::optional<std::uint32_t> doc_ordinal(std::string_view doc_id) const;
    /// Row of the chunk starting at `start` in `doc`, if indexed.
    std::optional<std::uint32_t> row_of(std::uint32_t doc, std::uint32_t start) const;
    /// Rows [first, last) belonging to a document.
    std::pair<std::uint32_t, std::uint32_t> doc_rows(std::uint32_t doc) const;

    /// Exact top-k by cosine score, ties by row ascending. q has dim() floats.
    std::vector<Candidate> query(const float* q, std::size_t top_k, const QueryFilter& filter = {},
                                 QueryOrigin origin = QueryOrigin::fragment_query) const;

    /// Batched query; filters.size() must be 0 (no filtering) or n_queries.
    std::vector<std::vector<Candidate>> query_batch(const float* queries, std::size_t n_queries, std::size_t top_k,
                                                    std::span<const QueryFilter> filters,
                                                    QueryOrigin origin = QueryOrigin::fragment_query) const;

    /// Serialized bytes exactly as save() writes them.
    std::string artifact_bytes() const;

private:
    void finalize();

    std::size_t dim_ = 0;
    std::size_t chunk_len_ = 0;
    std::vector<std::string> doc_ids_;
    std::unordered_map<std::string, std::uint32_t> doc_by_id_;
    std::vector<std::uint32_t> doc_first_row_;  // size doc_ids_.size() + 1
    std::vector<ChunkRef> refs_;
    std::vector<float> matrix_;
    std::string fingerprint_;
    std::string embedder_state_;
    std::string build_id_;
};

/// Linear scan with the same tie-break, scored one row at a time with the
/// scalar kernel. Reference for query().
std::vector<Candidate> linear_scan(const VectorIndex& index, const float* q, std::size_t top_k,
                                   const QueryFilter& filter = {});

/// Retrieval corpus, its index and the embedder used for queries.
struct RetrievalContext {
    std::shared_ptr<const TokenizedCorpus> corpus;
    std::shared_ptr<const VectorIndex> index;
    std::shared_ptr<const Embedder> embedder;
    std::vector<std::uint32_t> corpus_of_doc;  // index doc ordinal -> corpus position

    /// Checks that every indexed chunk resolves in the corpus and that the
    /// embedder matches the index. Throws IndexError otherwise.
    static RetrievalContext make(std::shared_ptr<const TokenizedCorpus> corpus,
                                 std::shared_ptr<const VectorIndex> index,
                                 std::shared_ptr<const Embedder> embedder);

    /// Tokens of an indexed chunk.
    std::span<const TokenId> chunk_tokens(std::uint32_t row) const;
    Chunk chunk(std::uint32_t row) const;
};

/// Rebuilds the embedder whose state an index carries (built-in tf-idf only).
std::shared_ptr<const Embedder> embedder_from_index(const VectorIndex& index);

/// Secondary retrieval: nearest neighbours of an indexed positive chunk.
/// `filter` should already hold the root document, the other positives of the
/// root and negatives taken so far; the positive's own row is always excluded.
std::vector<Candidate> secondary_retrieve(const VectorIndex& index, std::uint32_t positive_row, std::size_t depth_k,
                                          QueryFilter filter);

}  // namespace lcsynth
