#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <sstream>

#include "lcsynth/errors.hpp"
#include "lcsynth/orchestrator.hpp"
#include "lcsynth/verification.hpp"
#include "support/fixture.hpp"

using namespace lcsynth;

namespace {

/// Returns a fixed conditional entropy for every position.
class FixedScorer final : public Scorer {
public:
    explicit FixedScorer(double cond) : cond_(cond) {}
    const ScorerSnapshot& snapshot() const override { return snap_; }
    std::size_t vocab_size() const override { return 256; }
    std::vector<double> entropies(std::span<const TokenId> tokens, std::size_t) const override {
        return std::vector<double>(tokens.size(), cond_);
    }
    std::vector<double> conditional_entropy(std::span<const TokenId>, std::span<const TokenId>,
                                            std::span<const std::size_t> positions) const override {
        return std::vector<double>(positions.size(), cond_);
    }
    std::vector<double> loss_at(std::span<const TokenId>, std::span<const TokenId>,
                                std::span<const std::size_t> positions) const override {
        return std::vector<double>(positions.size(), cond_);
    }

private:
    double cond_;
    ScorerSnapshot snap_{"fixed", 0, ScorerBackend::remote};
};

SelectedPosition position(std::size_t index, double base) {
    SelectedPosition p;
    p.doc_id = "root";
    p.index = index;
    p.base_entropy = base;
    return p;
}

CandidateChunk candidate(std::uint32_t row, std::string doc) {
    CandidateChunk c;
    c.row = row;
    c.chunk.doc_id = std::move(doc);
    c.chunk.tokens = {1, 2, 3};
    c.chunk.length = 3;
    return c;
}

const std::vector<TokenId> kRoot(10, 7);

}  // namespace

TEST_SUITE("verification") {

TEST_CASE("prefix start keeps the window within the screening length") {
    CHECK(verification_prefix_start(100, 512, 0) == 0);
    CHECK(verification_prefix_start(100, 512, 2048) == 0);
    CHECK(verification_prefix_start(3000, 512, 2048) == 3000 + 1 - 1536);
    CHECK(verification_prefix_start(3000, 4000, 2048) == 3000);  // only x_i survives
    for (std::size_t i = 0; i < 5000; i += 37) {
        for (std::size_t c : {0u, 100u, 512u, 2047u}) {
            const std::size_t s = verification_prefix_start(i, c, 2048);
            CHECK(s <= i);
            CHECK(c + (i + 1 - s) <= std::max<std::size_t>(2048, c + 1));
        }
    }
}

TEST_CASE("an uninformative candidate gives zero reduction") {
    const FixedScorer s(2.0);
    VerifyParams p;
    for (double tau : {1e-9, 0.3, 0.99}) {
        p.tau_pos = tau;
        const auto o = verify_pair(s, kRoot, position(5, 2.0), std::vector<TokenId>{1}, p);
        CHECK(o.delta_h == 0.0);
        CHECK_FALSE(o.accepted);
    }
}

TEST_CASE("a fully resolving candidate gives reduction one") {
    const FixedScorer s(0.0);
    VerifyParams p;
    for (double tau : {0.0, 0.3, 0.999}) {
        p.tau_pos = tau;
        const auto o = verify_pair(s, kRoot, position(5, 1.3), std::vector<TokenId>{1}, p);
        CHECK(o.delta_h == 1.0);
        CHECK(o.accepted);
    }
}

TEST_CASE("acceptance is strict at the threshold") {
    const FixedScorer s(1.4);
    VerifyParams p;
    p.tau_pos = 0.3;
    const auto o = verify_pair(s, kRoot, position(5, 2.0), std::vector<TokenId>{1}, p);
    CHECK(o.delta_h == doctest::Approx(0.3));
    CHECK(o.accepted == (o.delta_h > 0.3));
    p.tau_pos = o.delta_h;
    CHECK_FALSE(verify_pair(s, kRoot, position(5, 2.0), std::vector<TokenId>{1}, p).accepted);
}

TEST_CASE("non-positive base entropy is a precondition error") {
    const FixedScorer s(0.0);
    CHECK_THROWS_AS(verify_pair(s, kRoot, position(5, 0.0), std::vector<TokenId>{1}, {}), PreconditionError);
    CHECK_THROWS_AS(verify_pair(s, kRoot, position(50, 1.0), std::vector<TokenId>{1}, {}), ParameterError);
}

TEST_CASE("verify_all orders accepted candidates and handles the vacuous case") {
    const TokenSequence root{"root", kRoot, {}};
    const std::vector<SelectedPosition> ps{position(2, 2.0), position(6, 2.0)};
    std::vector<std::vector<CandidateChunk>> lists{{candidate(0, "a"), candidate(1, "b")}, {candidate(2, "c")}};

    const auto none = verify_all(FixedScorer(2.0), root, ps, lists, {});
    CHECK(none.positives.empty());
    CHECK(none.records.size() == 3);

    const auto all = verify_all(FixedScorer(0.5), root, ps, lists, {});
    REQUIRE(all.positives.size() == 3);
    CHECK(all.positives[0].position.index == 2);
    CHECK(all.positives[2].position.index == 6);
    CHECK(all.positives[0].snapshot_id == "fixed");

    VerifyParams cap;
    cap.max_positives_per_position = 1;
    CHECK(verify_all(FixedScorer(0.5), root, ps, lists, cap).positives.size() == 2);

    // A zero-entropy position becomes a per-pair error, not an abort.
    const std::vector<SelectedPosition> bad{position(2, 0.0)};
    const std::vector<std::vector<CandidateChunk>> one{{candidate(0, "a")}};
    const auto r = verify_all(FixedScorer(0.5), root, bad, one, {});
    CHECK(r.errors == 1);
    CHECK_FALSE(r.records[0].error.empty());
}

TEST_CASE("planted fixture: reduction equals two explicit profiles; verify_all equals the pairwise loop") {
    PlantedParams pp;
    pp.n_roots = 12;
    pp.n_distractors = 24;
    pp.n_background = 12;
    pp.n_base = 60;
    const auto f = testing::make_planted_fixture(pp, 128);
    const auto scorer = make_scorer(f.m0, std::nullopt);
    VerifyParams vp;
    vp.screening_length = 512;
    std::size_t accepted = 0, pairs = 0;
    for (const auto& root : f.roots->sequences()) {
        const auto prof = entropy_profile(*scorer, root, vp.screening_length);
        const auto sel = select_positions(prof, 5, 0, {32, std::nullopt}).positions;
        std::vector<std::vector<CandidateChunk>> lists;
        const auto def = f.retrieval.index->doc_ordinal(f.corpus.truth.at(root.doc_id));
        REQUIRE(def);
        const auto [first, last] = f.retrieval.index->doc_rows(*def);
        for (std::size_t j = 0; j < sel.size(); ++j) {
            std::vector<CandidateChunk> cands;
            for (auto r = first; r < last; ++r) cands.push_back({r, f.retrieval.chunk(r)});
            cands.push_back({0, f.retrieval.chunk(0)});
            lists.push_back(std::move(cands));
        }
        const auto all = verify_all(*scorer, root, sel, lists, vp);
        std::vector<std::pair<std::size_t, std::uint32_t>> from_all, from_loop;
        for (const auto& v : all.positives) from_all.emplace_back(v.position.index, v.row);
        for (std::size_t j = 0; j < sel.size(); ++j) {
            const auto& pos = sel[j];
            for (const auto& cand : lists[j]) {
                ++pairs;
                const auto v = verify(*scorer, root, pos, cand, vp);
                if (v) from_loop.emplace_back(pos.index, v->row);
                // Independent recomputation over explicit concatenations.
                const std::size_t s = verification_prefix_start(pos.index, cand.chunk.length, vp.screening_length);
                const std::size_t w0 = pos.index + 1 >= vp.screening_length ? pos.index + 1 - vp.screening_length : 0;
                TokenSequence base_seq{"b", {root.tokens.begin() + static_cast<std::ptrdiff_t>(w0),
                                             root.tokens.begin() + static_cast<std::ptrdiff_t>(pos.index + 1)}, {}};
                const double base = entropy_profile(*scorer, base_seq).entropies.back();
                TokenSequence cat{"c", cand.chunk.tokens, {}};
                cat.tokens.insert(cat.tokens.end(), root.tokens.begin() + static_cast<std::ptrdiff_t>(s),
                                  root.tokens.begin() + static_cast<std::ptrdiff_t>(pos.index + 1));
                const double cond = entropy_profile(*scorer, cat).entropies.back();
                const double dh = (base - cond) / base;
                const auto o = verify_pair(*scorer, root.tokens, pos, cand.chunk.tokens, vp);
                CHECK(std::abs(o.delta_h - dh) < 1e-12);
                CHECK(o.accepted == (dh > vp.tau_pos));
            }
        }
        std::sort(from_all.begin(), from_all.end());
        std::sort(from_loop.begin(), from_loop.end());
        CHECK(from_all == from_loop);
        accepted += all.positives.size();
    }
    CHECK(pairs > 0);
    CHECK(accepted > 0);
}

TEST_CASE("verification csv") {
    VerificationRecord r;
    r.root_id = "root";
    r.position = 4;
    r.candidate_doc = "def";
    r.candidate_start = 128;
    r.base_entropy = 2.0;
    r.conditional_entropy = 0.5;
    r.delta_h = 0.75;
    r.accepted = true;
    r.snapshot_id = "M1-x";
    std::ostringstream out;
    write_verification_csv(out, std::span<const VerificationRecord>(&r, 1));
    CHECK(out.str() == "root_id,position,candidate_chunk,base_H,cond_H,delta_H,accepted,snapshot_id\nroot,4,def:128,2,0.5,0.75,1,M1-x\n");
}

}  // TEST_SUITE
