#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "lcsynth/errors.hpp"
#include "lcsynth/kernels.hpp"
#include "lcsynth/retrieval.hpp"
#include "lcsynth/util.hpp"
#include "support/oracles.hpp"

using namespace lcsynth;
using lcsynth::testing::naive_dot;

namespace {

std::vector<TokenId> random_tokens(Rng& rng, std::size_t n, std::size_t vocab = 256) {
    std::vector<TokenId> t(n);
    for (auto& v : t) v = static_cast<TokenId>(uniform_below(rng, vocab));
    return t;
}

std::shared_ptr<const TokenizedCorpus> random_corpus(Rng& rng, std::size_t n_docs, std::size_t doc_len,
                                                     std::size_t vocab = 16) {
    std::vector<TokenSequence> seqs;
    for (std::size_t d = 0; d < n_docs; ++d) {
        seqs.push_back({"doc" + std::to_string(1000 + d), random_tokens(rng, doc_len, vocab), {}});
    }
    return std::make_shared<const TokenizedCorpus>(std::move(seqs));
}

HashedTfidfEmbedder fit_on(const TokenizedCorpus& c, TfidfParams p = {}) {
    std::vector<std::span<const TokenId>> docs;
    for (const auto& s : c.sequences()) docs.emplace_back(s.tokens);
    return HashedTfidfEmbedder::fit(p, docs);
}

double norm(const std::vector<float>& v) { return std::sqrt(naive_dot(v.data(), v.data(), v.size())); }

/// Brute-force ranking: naive dot per row, then (score desc, row asc).
std::vector<std::uint32_t> brute_force(const VectorIndex& idx, const float* q, std::size_t k,
                                       const std::set<std::uint32_t>& skip_docs = {}) {
    std::vector<std::pair<double, std::uint32_t>> all;
    for (std::uint32_t r = 0; r < idx.size(); ++r) {
        if (skip_docs.count(idx.ref(r).doc)) continue;
        all.emplace_back(naive_dot(idx.vector(r), q, idx.dim()), r);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
    return out;
}

std::vector<std::uint32_t> rows(const std::vector<Candidate>& cs) {
    std::vector<std::uint32_t> out;
    for (const auto& c : cs) out.push_back(c.row);
    return out;
}

}  // namespace

TEST_SUITE("retrieval") {

TEST_CASE("embeddings are deterministic and unit norm") {
    Rng rng(1);
    const auto corpus = random_corpus(rng, 20, 300);
    const auto e = fit_on(*corpus);
    for (int trial = 0; trial < 50; ++trial) {
        const auto x = random_tokens(rng, 1 + uniform_below(rng, 200), 16);
        const auto a = e.embed(x), b = e.embed(x);
        CHECK(a == b);
        CHECK(a.size() == e.dim());
        CHECK(std::abs(norm(a) - 1.0) < 1e-6);
    }
    CHECK_THROWS_AS(e.embed({}), ParameterError);
}

TEST_CASE("cosine of x and x++x agrees between index and direct dot") {
    Rng rng(2);
    const auto corpus = random_corpus(rng, 20, 300);
    const auto e = fit_on(*corpus);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = random_tokens(rng, 20 + uniform_below(rng, 100), 16);
        auto xx = x;
        xx.insert(xx.end(), x.begin(), x.end());
        const auto a = e.embed(x), b = e.embed(xx);
        const auto idx = VectorIndex::from_vectors({"d"}, {{0, 0, 1}}, {a}, e.fingerprint());
        const auto hits = idx.query(b.data(), 1);
        REQUIRE(hits.size() == 1);
        CHECK(std::abs(hits[0].score - naive_dot(a.data(), b.data(), a.size())) < 1e-9);
    }
}

TEST_CASE("build yields one entry per chunk and identical artifact bytes") {
    Rng rng(3);
    const auto corpus = random_corpus(rng, 10, 500);
    const auto e = fit_on(*corpus);
    const auto a = VectorIndex::build(*corpus, 50, e);
    const auto b = VectorIndex::build(*corpus, 50, e, 1);
    CHECK(a.size() == 100);
    CHECK(a.artifact_bytes() == b.artifact_bytes());
    CHECK(a.build_id() == b.build_id());
    CHECK(a.chunk_len() == 50);
}

TEST_CASE("every chunk retrieves itself at rank one") {
    Rng rng(4);
    const auto corpus = random_corpus(rng, 15, 400);
    const auto e = fit_on(*corpus);
    const auto idx = VectorIndex::build(*corpus, 40, e);
    for (std::uint32_t r = 0; r < idx.size(); ++r) {
        const auto hits = idx.query(idx.vector(r), 1);
        REQUIRE(hits.size() == 1);
        CHECK(hits[0].row == r);
        CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-6));
        QueryFilter f;
        f.exclude_doc(idx.ref(r).doc);
        for (const auto& c : idx.query(idx.vector(r), 5, f)) CHECK(idx.ref(c.row).doc != idx.ref(r).doc);
    }
}

TEST_CASE("one-hot vectors retrieve their own row") {
    const std::size_t dim = 16;
    std::vector<std::vector<float>> vecs;
    std::vector<ChunkRef> refs;
    for (std::uint32_t i = 0; i < dim; ++i) {
        std::vector<float> v(dim, 0.0f);
        v[i] = 1.0f;
        vecs.push_back(v);
        refs.push_back({0, i, 1});
    }
    const auto idx = VectorIndex::from_vectors({"d"}, refs, vecs, "onehot");
    for (std::uint32_t i = 0; i < dim; ++i) {
        const auto hits = idx.query(vecs[i].data(), 3);
        REQUIRE(hits.size() == 3);
        CHECK(hits[0].row == i);
        CHECK(hits[0].score == 1.0);
        CHECK(hits[1].score == 0.0);
        CHECK(hits[1].row < hits[2].row);  // ties by row
    }
    const auto all = idx.query(vecs[0].data(), 100);
    CHECK(all.size() == dim);
    for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1].score >= all[i].score);
}

TEST_CASE("query matches the linear scan and brute force under every ISA") {
    Rng rng(5);
    const auto corpus = random_corpus(rng, 40, 300);
    const auto e = fit_on(*corpus);
    const auto idx = VectorIndex::build(*corpus, 30, e);
    const auto before = kernels::active().isa;
    for (auto isa : kernels::available()) {
        kernels::set_active(isa);
        for (int trial = 0; trial < 30; ++trial) {
            const auto q = e.embed(random_tokens(rng, 60, 16));
            const std::size_t k = 1 + uniform_below(rng, 50);
            QueryFilter f;
            std::set<std::uint32_t> skip;
            if (trial % 2) {
                const auto d = static_cast<std::uint32_t>(uniform_below(rng, idx.doc_ids().size()));
                f.exclude_doc(d);
                skip.insert(d);
            }
            const auto got = idx.query(q.data(), k, f);
            const auto ref = linear_scan(idx, q.data(), k, f);
            REQUIRE(got.size() == ref.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].row == ref[i].row);
                CHECK(got[i].score == ref[i].score);
            }
            const auto brute = brute_force(idx, q.data(), k, skip);
            CHECK(brute.size() == got.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(std::abs(got[i].score - naive_dot(idx.vector(brute[i]), q.data(), idx.dim())) < 1e-9);
            }
        }
    }
    kernels::set_active(before);
}

TEST_CASE("batched queries equal single queries") {
    Rng rng(6);
    const auto corpus = random_corpus(rng, 20, 300);
    const auto e = fit_on(*corpus);
    const auto idx = VectorIndex::build(*corpus, 30, e);
    std::vector<float> qs;
    std::vector<QueryFilter> filters(7);
    for (int q = 0; q < 7; ++q) {
        const auto v = e.embed(random_tokens(rng, 40, 16));
        qs.insert(qs.end(), v.begin(), v.end());
        filters[static_cast<std::size_t>(q)].exclude_doc(static_cast<std::uint32_t>(q));
    }
    const auto batch = idx.query_batch(qs.data(), 7, 9, filters);
    for (std::size_t q = 0; q < 7; ++q) {
        CHECK(rows(batch[q]) == rows(idx.query(qs.data() + q * idx.dim(), 9, filters[q])));
    }
}

TEST_CASE("secondary retrieval excludes the positive and composes with query") {
    Rng rng(7);
    const auto corpus = random_corpus(rng, 20, 300);
    const auto e = fit_on(*corpus);
    const auto idx = VectorIndex::build(*corpus, 30, e);
    CHECK(secondary_retrieve(idx, 5, 0, {}).empty());
    for (std::uint32_t r = 0; r < idx.size(); r += 7) {
        QueryFilter f;
        f.exclude_doc(static_cast<std::uint32_t>((r + 3) % idx.doc_ids().size()));
        const auto got = secondary_retrieve(idx, r, 6, f);
        for (const auto& c : got) {
            CHECK(c.row != r);
            CHECK(c.origin == QueryOrigin::secondary_query);
        }
        auto g = f;
        g.exclude_row(r);
        CHECK(rows(got) == rows(idx.query(idx.vector(r), 6, g)));
    }
}

TEST_CASE("save and load round-trip; fingerprint mismatch is rejected") {
    Rng rng(8);
    const auto corpus = random_corpus(rng, 10, 200);
    const auto e = fit_on(*corpus);
    const auto idx = VectorIndex::build(*corpus, 32, e);
    const auto file = std::filesystem::temp_directory_path() / "lcsynth_test_index.bin";
    idx.save(file);
    const auto back = VectorIndex::load(file, e.fingerprint());
    CHECK(back.artifact_bytes() == idx.artifact_bytes());
    CHECK_THROWS_AS(VectorIndex::load(file, "other-embedder"), IndexError);
    const auto rebuilt = embedder_from_index(back);
    CHECK(rebuilt->fingerprint() == e.fingerprint());
    const auto x = random_tokens(rng, 50, 16);
    CHECK(rebuilt->embed(x) == e.embed(x));
    std::filesystem::remove(file);
}

TEST_CASE("retrieval context validates the corpus against the index") {
    Rng rng(9);
    const auto corpus = random_corpus(rng, 5, 100);
    auto e = std::make_shared<const HashedTfidfEmbedder>(fit_on(*corpus));
    auto idx = std::make_shared<const VectorIndex>(VectorIndex::build(*corpus, 32, *e));
    const auto ctx = RetrievalContext::make(corpus, idx, e);
    for (std::uint32_t r = 0; r < idx->size(); ++r) {
        const auto c = ctx.chunk(r);
        const auto& src = corpus->find(c.doc_id)->tokens;
        CHECK(std::equal(c.tokens.begin(), c.tokens.end(), src.begin() + static_cast<std::ptrdiff_t>(c.start)));
    }
    const auto other = random_corpus(rng, 2, 100);
    CHECK_THROWS_AS(RetrievalContext::make(std::make_shared<const TokenizedCorpus>(std::vector<TokenSequence>{
                                               {"missing", random_tokens(rng, 10), {}}}),
                                           idx, e),
                    IndexError);
    auto e2 = std::make_shared<const HashedTfidfEmbedder>(fit_on(*other));
    CHECK_THROWS_AS(RetrievalContext::make(corpus, idx, e2), IndexError);
}

}  // TEST_SUITE
