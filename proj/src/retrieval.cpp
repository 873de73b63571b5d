#include "lcsynth/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "binio.hpp"
#include "lcsynth/errors.hpp"
#include "lcsynth/kernels.hpp"
#include "lcsynth/parallel.hpp"
#include "lcsynth/util.hpp"

namespace lcsynth {

std::vector<std::vector<float>> Embedder::embed_batch(std::span<const std::span<const TokenId>> inputs) const {
    std::vector<std::vector<float>> out;
    out.reserve(inputs.size());
    for (auto in : inputs) out.push_back(embed(in));
    return out;
}

void l2_normalize(std::vector<float>& v) {
    double ss = 0.0;
    for (float x : v) ss += static_cast<double>(x) * static_cast<double>(x);
    if (!(ss > 0.0)) throw ParameterError("cannot normalize a zero vector");
    const double norm = std::sqrt(ss);
    for (float& x : v) x = static_cast<float>(static_cast<double>(x) / norm);
}

// ---------------------------------------------------------------------------
// HashedTfidfEmbedder

HashedTfidfEmbedder::HashedTfidfEmbedder(TfidfParams params) : params_(params) {
    if (params_.dim == 0 || params_.dim % kernels::kLanes != 0) {
        throw ParameterError("embedding dim must be a positive multiple of " + std::to_string(kernels::kLanes));
    }
    if (params_.shingle == 0) throw ParameterError("shingle length must be > 0");
    freeze();
}

void HashedTfidfEmbedder::freeze() {
    auto table = std::make_shared<std::vector<double>>(kSlots);
    const double n = static_cast<double>(n_docs_);
    const double none = std::log((1.0 + n) / 1.0) + 1.0;
    std::fill(table->begin(), table->end(), none);
    std::uint64_t h = fnv1a_u64(n_docs_);
    for (const auto& [slot, df] : df_) {
        (*table)[slot] = std::log((1.0 + n) / (1.0 + static_cast<double>(df))) + 1.0;
        h = fnv1a_u64(slot, h);
        h = fnv1a_u64(df, h);
    }
    df_hash_ = h;
    idf_ = std::move(table);
}

std::vector<std::uint64_t> HashedTfidfEmbedder::features(std::span<const TokenId> tokens) const {
    std::vector<std::uint64_t> out;
    const std::size_t s = params_.shingle;
    auto hash = [](std::span<const TokenId> w) {
        std::uint64_t h = kFnvOffset;
        for (TokenId t : w) {
            const unsigned char b[4] = {static_cast<unsigned char>(t), static_cast<unsigned char>(t >> 8),
                                        static_cast<unsigned char>(t >> 16), static_cast<unsigned char>(t >> 24)};
            h = fnv1a(b, 4, h);
        }
        return h;
    };
    if (tokens.size() < s) {
        if (!tokens.empty()) out.push_back(hash(tokens));
        return out;
    }
    out.reserve(tokens.size() - s + 1);
    for (std::size_t i = 0; i + s <= tokens.size(); ++i) out.push_back(hash(tokens.subspan(i, s)));
    return out;
}

HashedTfidfEmbedder HashedTfidfEmbedder::fit(TfidfParams params, std::span<const std::span<const TokenId>> docs) {
    HashedTfidfEmbedder e(params);
    std::vector<std::uint32_t> df(kSlots, 0);
    std::vector<std::uint32_t> slots;
    for (auto doc : docs) {
        slots.clear();
        for (std::uint64_t h : e.features(doc)) slots.push_back(static_cast<std::uint32_t>(h & (kSlots - 1)));
        std::sort(slots.begin(), slots.end());
        slots.erase(std::unique(slots.begin(), slots.end()), slots.end());
        for (auto s : slots) ++df[s];
    }
    e.n_docs_ = docs.size();
    for (std::uint32_t s = 0; s < kSlots; ++s) {
        if (df[s] != 0) e.df_.emplace_back(s, df[s]);
    }
    e.freeze();
    return e;
}

double HashedTfidfEmbedder::idf(std::uint64_t slot) const { return (*idf_)[slot & (kSlots - 1)]; }

std::string HashedTfidfEmbedder::fingerprint() const {
    return "hashed-tfidf:dim=" + std::to_string(params_.dim) + ":shingle=" + std::to_string(params_.shingle) +
           ":docs=" + std::to_string(n_docs_) + ":df=" + hex64(df_hash_);
}

std::vector<float> HashedTfidfEmbedder::embed(std::span<const TokenId> tokens) const {
    if (tokens.empty()) throw ParameterError("cannot embed an empty token list");
    auto feats = features(tokens);
    std::sort(feats.begin(), feats.end());
    std::vector<double> acc(params_.dim, 0.0);
    std::size_t i = 0;
    while (i < feats.size()) {
        std::size_t j = i;
        while (j < feats.size() && feats[j] == feats[i]) ++j;
        const double tf = static_cast<double>(j - i);
        acc[splitmix64(feats[i]) % params_.dim] += tf * idf(feats[i]);
        i = j;
    }
    double ss = 0.0;
    for (double x : acc) ss += x * x;
    const double norm = std::sqrt(ss);
    std::vector<float> out(params_.dim);
    for (std::size_t d = 0; d < params_.dim; ++d) out[d] = static_cast<float>(acc[d] / norm);
    return out;
}

std::string HashedTfidfEmbedder::serialize() const {
    std::ostringstream out(std::ios::binary);
    binio::put_u64(out, params_.dim);
    binio::put_u64(out, params_.shingle);
    binio::put_u64(out, n_docs_);
    binio::put_u64(out, df_.size());
    for (const auto& [slot, df] : df_) {
        binio::put_u32(out, slot);
        binio::put_u32(out, df);
    }
    return out.str();
}

HashedTfidfEmbedder HashedTfidfEmbedder::deserialize(const std::string& blob) {
    std::istringstream in(blob, std::ios::binary);
    TfidfParams p;
    p.dim = binio::get_u64(in);
    p.shingle = binio::get_u64(in);
    HashedTfidfEmbedder e(p);
    e.n_docs_ = binio::get_u64(in);
    const std::uint64_t n = binio::get_u64(in);
    if (n > kSlots) throw IoError("corrupt tf-idf state");
    e.df_.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::uint32_t slot = binio::get_u32(in);
        const std::uint32_t df = binio::get_u32(in);
        if (slot >= kSlots) throw IoError("corrupt tf-idf state");
        e.df_.emplace_back(slot, df);
    }
    e.freeze();
    return e;
}

// ---------------------------------------------------------------------------
// QueryFilter

namespace {

void sorted_insert(std::vector<std::uint32_t>& v, std::uint32_t x) {
    auto it = std::lower_bound(v.begin(), v.end(), x);
    if (it == v.end() || *it != x) v.insert(it, x);
}

bool better(const Candidate& a, const Candidate& b) {
    return a.score > b.score || (a.score == b.score && a.row < b.row);
}

double clamp_score(double s) { return std::clamp(s, -1.0, 1.0); }

constexpr char kIndexMagic[9] = "LCSVIDX1";
constexpr std::uint32_t kIndexVersion = 1;

}  // namespace

void QueryFilter::exclude_doc(std::uint32_t doc) { sorted_insert(docs, doc); }
void QueryFilter::exclude_row(std::uint32_t row) { sorted_insert(rows, row); }

bool QueryFilter::excludes(std::uint32_t row, std::uint32_t doc) const {
    return std::binary_search(rows.begin(), rows.end(), row) || std::binary_search(docs.begin(), docs.end(), doc);
}

// ---------------------------------------------------------------------------
// VectorIndex

VectorIndex VectorIndex::build(const TokenizedCorpus& corpus, std::size_t chunk_len, const Embedder& embedder,
                               std::size_t workers) {
    if (corpus.size() == 0) throw IndexError("cannot build an index over an empty retrieval corpus");
    if (chunk_len == 0) throw ParameterError("chunk_len must be > 0");
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return corpus.at(a).doc_id < corpus.at(b).doc_id; });

    VectorIndex idx;
    idx.dim_ = embedder.dim();
    idx.chunk_len_ = chunk_len;
    std::vector<std::size_t> seq_of_doc;
    for (std::size_t o : order) {
        const auto& seq = corpus.at(o);
        if (seq.tokens.empty()) continue;
        const auto doc = static_cast<std::uint32_t>(idx.doc_ids_.size());
        idx.doc_ids_.push_back(seq.doc_id);
        seq_of_doc.push_back(o);
        for (auto [start, len] : chunk_spans(seq.tokens.size(), chunk_len)) {
            idx.refs_.push_back({doc, static_cast<std::uint32_t>(start), static_cast<std::uint32_t>(len)});
        }
    }
    if (idx.refs_.empty()) throw IndexError("retrieval corpus has no tokens to index");

    idx.matrix_.assign(idx.refs_.size() * idx.dim_, 0.0f);
    constexpr std::size_t kBatch = 256;
    const std::size_t n_batches = (idx.refs_.size() + kBatch - 1) / kBatch;
    parallel_for(n_batches, workers, [&](std::size_t b) {
        const std::size_t first = b * kBatch;
        const std::size_t last = std::min(idx.refs_.size(), first + kBatch);
        std::vector<std::span<const TokenId>> inputs;
        for (std::size_t r = first; r < last; ++r) {
            const auto& ref = idx.refs_[r];
            const auto& toks = corpus.at(seq_of_doc[ref.doc]).tokens;
            inputs.emplace_back(toks.data() + ref.start, ref.length);
        }
        auto vecs = embedder.embed_batch(inputs);
        if (vecs.size() != inputs.size()) throw IndexError("embedder returned the wrong number of vectors");
        for (std::size_t k = 0; k < vecs.size(); ++k) {
            if (vecs[k].size() != idx.dim_) {
                throw IndexError("embedding dimension mismatch: expected " + std::to_string(idx.dim_) + ", got " +
                                 std::to_string(vecs[k].size()));
            }
            std::copy(vecs[k].begin(), vecs[k].end(), idx.matrix_.begin() + (first + k) * idx.dim_);
        }
    });

    idx.fingerprint_ = embedder.fingerprint();
    if (auto* tfidf = dynamic_cast<const HashedTfidfEmbedder*>(&embedder)) idx.embedder_state_ = tfidf->serialize();
    idx.finalize();
    return idx;
}

VectorIndex VectorIndex::from_vectors(std::vector<std::string> doc_ids, std::vector<ChunkRef> refs,
                                      std::vector<std::vector<float>> vectors, std::string embedder_fingerprint,
                                      std::string embedder_state, std::size_t chunk_len) {
    if (refs.empty()) throw IndexError("cannot build an empty index");
    if (refs.size() != vectors.size()) throw IndexError("refs and vectors differ in length");
    VectorIndex idx;
    idx.dim_ = vectors.front().size();
    if (idx.dim_ == 0 || idx.dim_ % kernels::kLanes != 0) {
        throw IndexError("vector dimension must be a positive multiple of " + std::to_string(kernels::kLanes));
    }
    for (const auto& r : refs) {
        if (r.doc >= doc_ids.size()) throw IndexError("chunk ref names an unknown document");
        if (r.length == 0) throw IndexError("chunk ref with zero length");
    }

    // Rows are ordered by (doc_id, start) so row order is chunk-ref order.
    std::vector<std::uint32_t> doc_order(doc_ids.size());
    std::iota(doc_order.begin(), doc_order.end(), 0u);
    std::sort(doc_order.begin(), doc_order.end(), [&](auto a, auto b) { return doc_ids[a] < doc_ids[b]; });
    std::vector<std::uint32_t> new_doc(doc_ids.size());
    for (std::uint32_t i = 0; i < doc_order.size(); ++i) {
        new_doc[doc_order[i]] = i;
        idx.doc_ids_.push_back(doc_ids[doc_order[i]]);
    }
    std::vector<std::size_t> row_order(refs.size());
    std::iota(row_order.begin(), row_order.end(), std::size_t{0});
    std::sort(row_order.begin(), row_order.end(), [&](std::size_t a, std::size_t b) {
        const auto da = new_doc[refs[a].doc];
        const auto db = new_doc[refs[b].doc];
        return da != db ? da < db : refs[a].start < refs[b].start;
    });
    idx.matrix_.reserve(refs.size() * idx.dim_);
    for (std::size_t r : row_order) {
        if (vectors[r].size() != idx.dim_) throw IndexError("embedding dimension mismatch within index input");
        ChunkRef ref = refs[r];
        ref.doc = new_doc[ref.doc];
        idx.refs_.push_back(ref);
        idx.matrix_.insert(idx.matrix_.end(), vectors[r].begin(), vectors[r].end());
    }
    idx.fingerprint_ = std::move(embedder_fingerprint);
    idx.embedder_state_ = std::move(embedder_state);
    idx.chunk_len_ = chunk_len;
    idx.finalize();
    return idx;
}

void VectorIndex::finalize() {
    doc_by_id_.clear();
    for (std::uint32_t d = 0; d < doc_ids_.size(); ++d) {
        if (!doc_by_id_.emplace(doc_ids_[d], d).second) throw IndexError("duplicate document id in index");
    }
    doc_first_row_.assign(doc_ids_.size() + 1, 0);
    std::vector<std::uint32_t> counts(doc_ids_.size(), 0);
    for (std::size_t r = 0; r < refs_.size(); ++r) {
        if (r > 0) {
            const auto& p = refs_[r - 1];
            const auto& c = refs_[r];
            if (c.doc < p.doc || (c.doc == p.doc && c.start <= p.start)) {
                throw IndexError("index rows are not ordered by chunk ref");
            }
        }
        ++counts[refs_[r].doc];
    }
    for (std::size_t d = 0; d < doc_ids_.size(); ++d) doc_first_row_[d + 1] = doc_first_row_[d] + counts[d];

    // build_id hashes everything except itself.
    build_id_.clear();
    std::string bytes = artifact_bytes();
    build_id_ = hex64(fnv1a(bytes));
}

std::string VectorIndex::artifact_bytes() const {
    std::ostringstream out(std::ios::binary);
    out.write(kIndexMagic, 8);
    binio::put_u32(out, kIndexVersion);
    binio::put_u64(out, dim_);
    binio::put_u64(out, refs_.size());
    binio::put_str(out, build_id_);
    binio::put_str(out, fingerprint_);
    binio::put_u64(out, chunk_len_);
    binio::put_str(out, embedder_state_);
    binio::put_u64(out, doc_ids_.size());
    for (const auto& id : doc_ids_) binio::put_str(out, id);
    for (const auto& r : refs_) {
        binio::put_u32(out, r.doc);
        binio::put_u32(out, r.start);
        binio::put_u32(out, r.length);
    }
    for (float x : matrix_) binio::put_f32(out, x);
    return out.str();
}

void VectorIndex::save(const std::filesystem::path& file) const {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    const auto tmp = std::filesystem::path(file.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write index " + file.string());
        const std::string bytes = artifact_bytes();
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("failed writing index " + file.string());
    }
    std::filesystem::rename(tmp, file);
}

VectorIndex VectorIndex::load(const std::filesystem::path& file, const std::string& expected_fingerprint) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot read index " + file.string());
    binio::expect_magic(in, kIndexMagic, "vector index");
    const std::uint32_t version = binio::get_u32(in);
    if (version != kIndexVersion) throw IndexError("unsupported index version " + std::to_string(version));
    VectorIndex idx;
    idx.dim_ = binio::get_u64(in);
    const std::uint64_t count = binio::get_u64(in);
    const std::string stored_id = binio::get_str(in);
    idx.fingerprint_ = binio::get_str(in);
    if (!expected_fingerprint.empty() && expected_fingerprint != idx.fingerprint_) {
        throw IndexError("index embedder fingerprint mismatch: index has '" + idx.fingerprint_ + "', expected '" +
                         expected_fingerprint + "'");
    }
    idx.chunk_len_ = binio::get_u64(in);
    idx.embedder_state_ = binio::get_str(in);
    const std::uint64_t n_docs = binio::get_u64(in);
    if (n_docs > count) throw IndexError("corrupt index header");
    idx.doc_ids_.reserve(n_docs);
    for (std::uint64_t d = 0; d < n_docs; ++d) idx.doc_ids_.push_back(binio::get_str(in));
    idx.refs_.resize(count);
    for (auto& r : idx.refs_) {
        r.doc = binio::get_u32(in);
        r.start = binio::get_u32(in);
        r.length = binio::get_u32(in);
        if (r.doc >= n_docs) throw IndexError("corrupt index chunk ref");
    }
    idx.matrix_.resize(count * idx.dim_);
    for (float& x : idx.matrix_) x = binio::get_f32(in);
    idx.finalize();
    if (idx.build_id_ != stored_id) throw IndexError("index build id does not match its contents");
    return idx;
}

std::optional<std::uint32_t> VectorIndex::doc_ordinal(std::string_view doc_id) const {
    auto it = doc_by_id_.find(std::string(doc_id));
    if (it == doc_by_id_.end()) return std::nullopt;
    return it->second;
}

std::pair<std::uint32_t, std::uint32_t> VectorIndex::doc_rows(std::uint32_t doc) const {
    return {doc_first_row_.at(doc), doc_first_row_.at(doc + 1)};
}

std::optional<std::uint32_t> VectorIndex::row_of(std::uint32_t doc, std::uint32_t start) const {
    auto [first, last] = doc_rows(doc);
    for (std::uint32_t r = first; r < last; ++r) {
        if (refs_[r].start == start) return r;
    }
    return std::nullopt;
}

namespace {

// Keeps the best k candidates seen so far; the worst sits at heap top.
class TopK {
public:
    explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k); }

    void offer(std::uint32_t row, double score) {
        Candidate c{row, score, QueryOrigin::fragment_query};
        if (heap_.size() < k_) {
            heap_.push_back(c);
            std::push_heap(heap_.begin(), heap_.end(), better);
        } else if (better(c, heap_.front())) {
            std::pop_heap(heap_.begin(), heap_.end(), better);
            heap_.back() = c;
            std::push_heap(heap_.begin(), heap_.end(), better);
        }
    }

    /// False when (row, score) cannot enter the current top k.
    bool admits(std::uint32_t row, double score) const {
        return heap_.size() < k_ || better(Candidate{row, score, QueryOrigin::fragment_query}, heap_.front());
    }

    std::vector<Candidate> take(QueryOrigin origin) {
        std::sort(heap_.begin(), heap_.end(), better);
        for (auto& c : heap_) c.origin = origin;
        return std::move(heap_);
    }

private:
    std::size_t k_;
    std::vector<Candidate> heap_;
};

}  // namespace

std::vector<Candidate> VectorIndex::query(const float* q, std::size_t top_k, const QueryFilter& filter,
                                          QueryOrigin origin) const {
    auto out = query_batch(q, 1, top_k, std::span<const QueryFilter>(&filter, 1), origin);
    return std::move(out.front());
}

std::vector<std::vector<Candidate>> VectorIndex::query_batch(const float* queries, std::size_t n_queries,
                                                             std::size_t top_k, std::span<const QueryFilter> filters,
                                                             QueryOrigin origin) const {
    if (refs_.empty()) throw IndexError("query against an empty index");
    if (top_k == 0) throw ParameterError("top_k must be >= 1");
    if (!filters.empty() && filters.size() != n_queries) throw ParameterError("one filter per query required");
    const auto& kt = kernels::active();
    const std::size_t n = refs_.size();
    constexpr std::size_t kQueryBlock = 16;
    constexpr std::size_t kRowTile = 512;

    std::vector<std::vector<Candidate>> results(n_queries);
    std::vector<double> tile(kQueryBlock * kRowTile);
    for (std::size_t q0 = 0; q0 < n_queries; q0 += kQueryBlock) {
        const std::size_t nq = std::min(kQueryBlock, n_queries - q0);
        std::vector<TopK> best(nq, TopK(top_k));
        for (std::size_t r0 = 0; r0 < n; r0 += kRowTile) {
            const std::size_t nr = std::min(kRowTile, n - r0);
            kt.score_block(matrix_.data() + r0 * dim_, nr, dim_, queries + q0 * dim_, nq, tile.data());
            for (std::size_t q = 0; q < nq; ++q) {
                const QueryFilter* f = filters.empty() ? nullptr : &filters[q0 + q];
                const double* s = tile.data() + q * nr;
                for (std::size_t i = 0; i < nr; ++i) {
                    const auto row = static_cast<std::uint32_t>(r0 + i);
                    const double score = clamp_score(s[i]);
                    if (!best[q].admits(row, score)) continue;
                    if (f && f->excludes(row, refs_[row].doc)) continue;
                    best[q].offer(row, score);
                }
            }
        }
        for (std::size_t q = 0; q < nq; ++q) results[q0 + q] = best[q].take(origin);
    }
    return results;
}

std::vector<Candidate> linear_scan(const VectorIndex& index, const float* q, std::size_t top_k,
                                   const QueryFilter& filter) {
    if (index.size() == 0) throw IndexError("query against an empty index");
    const auto& kt = kernels::scalar_table();
    std::vector<Candidate> all;
    for (std::size_t r = 0; r < index.size(); ++r) {
        const auto row = static_cast<std::uint32_t>(r);
        if (filter.excludes(row, index.ref(r).doc)) continue;
        all.push_back({row, clamp_score(kt.dot(index.vector(r), q, index.dim())), QueryOrigin::fragment_query});
    }
    std::sort(all.begin(), all.end(), better);
    if (all.size() > top_k) all.resize(top_k);
    return all;
}

std::vector<Candidate> secondary_retrieve(const VectorIndex& index, std::uint32_t positive_row, std::size_t depth_k,
                                          QueryFilter filter) {
    if (depth_k == 0) return {};
    if (positive_row >= index.size()) throw ParameterError("positive row outside the index");
    filter.exclude_row(positive_row);
    return index.query(index.vector(positive_row), depth_k, filter, QueryOrigin::secondary_query);
}

// ---------------------------------------------------------------------------
// RetrievalContext

RetrievalContext RetrievalContext::make(std::shared_ptr<const TokenizedCorpus> corpus,
                                        std::shared_ptr<const VectorIndex> index,
                                        std::shared_ptr<const Embedder> embedder) {
    if (!corpus || !index || !embedder) throw IndexError("retrieval context needs corpus, index and embedder");
    if (embedder->fingerprint() != index->embedder_fingerprint()) {
        throw IndexError("query embedder '" + embedder->fingerprint() + "' does not match index embedder '" +
                         index->embedder_fingerprint() + "'");
    }
    RetrievalContext ctx;
    ctx.corpus_of_doc.reserve(index->doc_ids().size());
    for (const auto& id : index->doc_ids()) {
        auto pos = corpus->index_of(id);
        if (!pos) throw IndexError("indexed document '" + id + "' is missing from the retrieval corpus");
        ctx.corpus_of_doc.push_back(static_cast<std::uint32_t>(*pos));
    }
    for (std::size_t r = 0; r < index->size(); ++r) {
        const auto& ref = index->ref(r);
        if (ref.start + ref.length > corpus->at(ctx.corpus_of_doc[ref.doc]).tokens.size()) {
            throw IndexError("indexed chunk of '" + index->doc_id(r) + "' lies outside the document");
        }
    }
    ctx.corpus = std::move(corpus);
    ctx.index = std::move(index);
    ctx.embedder = std::move(embedder);
    return ctx;
}

std::span<const TokenId> RetrievalContext::chunk_tokens(std::uint32_t row) const {
    const auto& ref = index->ref(row);
    const auto& toks = corpus->at(corpus_of_doc[ref.doc]).tokens;
    return {toks.data() + ref.start, ref.length};
}

Chunk RetrievalContext::chunk(std::uint32_t row) const {
    const auto& ref = index->ref(row);
    auto toks = chunk_tokens(row);
    return {index->doc_id(row), ref.start, ref.length, std::vector<TokenId>(toks.begin(), toks.end())};
}

std::shared_ptr<const Embedder> embedder_from_index(const VectorIndex& index) {
    if (index.embedder_state().empty()) {
        throw IndexError("index carries no built-in embedder state (fingerprint '" + index.embedder_fingerprint() +
                         "'); configure the matching remote embedder");
    }
    auto e = std::make_shared<const HashedTfidfEmbedder>(HashedTfidfEmbedder::deserialize(index.embedder_state()));
    if (e->fingerprint() != index.embedder_fingerprint()) {
        throw IndexError("embedder state does not reproduce the index fingerprint");
    }
    return e;
}

}  // namespace lcsynth
