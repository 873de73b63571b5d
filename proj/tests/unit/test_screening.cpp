#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <sstream>

#include "lcsynth/errors.hpp"
#include "lcsynth/screening.hpp"
#include "lcsynth/util.hpp"
#include "support/oracles.hpp"

using namespace lcsynth;
using lcsynth::testing::oracle_select;

namespace {

EntropyProfile profile_of(std::vector<double> e) { return {"d", std::move(e), "M0"}; }

SelectedPosition at(std::size_t i) {
    SelectedPosition p;
    p.doc_id = "d";
    p.index = i;
    return p;
}

std::vector<std::size_t> indices(const SelectionResult& r) {
    std::vector<std::size_t> out;
    for (const auto& p : r.positions) out.push_back(p.index);
    return out;
}

std::vector<double> random_profile(Rng& rng, std::size_t n, bool ties) {
    std::vector<double> e(n);
    for (auto& v : e) {
        v = ties ? static_cast<double>(uniform_below(rng, 6)) * 0.5 : uniform_unit(rng) * 5.0;
    }
    return e;
}

/// Greedy spacing reference: rank by (entropy desc, index asc), keep a
/// candidate when every kept index is at least `spacing` away.
std::vector<std::size_t> oracle_spaced(const std::vector<double>& e, double k, std::size_t spacing) {
    std::vector<std::size_t> idx(e.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return e[a] > e[b]; });
    const std::size_t want = selection_count(k, e.size());
    std::vector<std::size_t> kept;
    for (std::size_t i : idx) {
        if (kept.size() >= want || e[i] <= 0) break;
        bool ok = true;
        for (std::size_t j : kept) {
            if ((i > j ? i - j : j - i) < spacing) ok = false;
        }
        if (ok) kept.push_back(i);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

}  // namespace

TEST_SUITE("screening") {

TEST_CASE("top 40 percent of five values") {
    const auto r = select_positions(profile_of({1, 2, 3, 4, 5}), 40, 0);
    CHECK(indices(r) == std::vector<std::size_t>{3, 4});
}

TEST_CASE("ties resolve to the smaller index") {
    const auto r = select_positions(profile_of({2, 2, 2}), 34, 0);
    CHECK(indices(r) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("selection count rounds up except within 1e-9 of an integer") {
    CHECK(selection_count(40, 5) == 2);
    CHECK(selection_count(34, 3) == 2);
    CHECK(selection_count(100, 7) == 7);
    CHECK(selection_count(5, 2048) == 103);
    CHECK(selection_count(10, 30) == 3);  // 10 * 30 / 100 is not exact in binary
}

TEST_CASE("random profiles match the full-sort oracle") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const auto e = random_profile(rng, 1 + uniform_below(rng, 300), trial % 2 == 0);
        const double k = 0.5 + uniform_unit(rng) * 99.5;
        const auto r = select_positions(profile_of(e), k, 2);
        CHECK(indices(r) == oracle_select(e, k));
        for (const auto& p : r.positions) {
            CHECK(p.stage == 2);
            CHECK(p.base_entropy == e[p.index]);
            CHECK(p.snapshot_id == "M0");
        }
    }
}

TEST_CASE("spacing rule matches the greedy oracle") {
    Rng rng(19);
    for (int trial = 0; trial < 100; ++trial) {
        const auto e = random_profile(rng, 50 + uniform_below(rng, 400), trial % 3 == 0);
        const double k = 1 + uniform_unit(rng) * 20;
        const std::size_t spacing = 1 + uniform_below(rng, 40);
        SelectOptions opt;
        opt.min_spacing = spacing;
        const auto got = indices(select_positions(profile_of(e), k, 0, opt));
        CHECK(got == oracle_spaced(e, k, spacing));
        for (std::size_t i = 1; i < got.size(); ++i) CHECK(got[i] - got[i - 1] >= spacing);
    }
}

TEST_CASE("raising k never drops a selected position") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        const auto e = random_profile(rng, 200, trial % 2 == 1);
        std::vector<std::size_t> prev;
        for (double k = 1; k <= 100; k += 7) {
            const auto cur = indices(select_positions(profile_of(e), k, 0));
            CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
            prev = cur;
        }
    }
}

TEST_CASE("selection is invariant to positive scaling of entropies") {
    Rng rng(29);
    for (int trial = 0; trial < 50; ++trial) {
        const auto e = random_profile(rng, 150, trial % 2 == 0);
        auto scaled = e;
        for (auto& v : scaled) v *= 3.75;
        CHECK(indices(select_positions(profile_of(e), 12, 0)) == indices(select_positions(profile_of(scaled), 12, 0)));
    }
}

TEST_CASE("zero entropies are never selected") {
    const auto r = select_positions(profile_of({0, 0, 0, 0}), 100, 0);
    CHECK(r.positions.empty());
    CHECK(r.all_zero);
    const auto some = select_positions(profile_of({0, 1, 0, 0}), 100, 0);
    CHECK(indices(some) == std::vector<std::size_t>{1});
    CHECK_FALSE(some.all_zero);
}

TEST_CASE("absolute threshold mode") {
    SelectOptions opt;
    opt.absolute_tau = 2.5;
    const auto r = select_positions(profile_of({1, 3, 2.5, 4, 0}), 5, 0, opt);
    CHECK(indices(r) == std::vector<std::size_t>{1, 3});
}

TEST_CASE("invalid percentile and empty profile") {
    CHECK_THROWS_AS(select_positions(profile_of({1}), 0, 0), ParameterError);
    CHECK_THROWS_AS(select_positions(profile_of({1}), 100.5, 0), ParameterError);
    CHECK_THROWS_AS(select_positions(profile_of({}), 10, 0), ParameterError);
}

TEST_CASE("corpus-wide percentile pools all positions") {
    const std::vector<EntropyProfile> ps{{"a", {1, 9, 1}, "M0"}, {"b", {8, 1, 7}, "M0"}};
    const auto r = select_positions_corpus(ps, 50, 0);
    CHECK(indices(r[0]) == std::vector<std::size_t>{1});
    CHECK(indices(r[1]) == std::vector<std::size_t>{0, 2});
}

TEST_CASE("fragment clipping and centring") {
    TokenSequence seq{"d", std::vector<TokenId>(100), {}};
    std::iota(seq.tokens.begin(), seq.tokens.end(), TokenId{0});
    const auto f0 = extract_fragment(seq, at(0), 64, 2);
    CHECK(f0.start == 0);
    CHECK(f0.left == 0);
    CHECK(f0.tokens.size() == 3);
    const auto mid = extract_fragment(seq, at(50), 2, 2);
    CHECK(mid.tokens == std::vector<TokenId>{48, 49, 50, 51, 52});
    CHECK_THROWS_AS(extract_fragment(seq, at(100), 2, 2), ParameterError);
}

TEST_CASE("fragment equals the direct slice") {
    Rng rng(31);
    for (int trial = 0; trial < 300; ++trial) {
        TokenSequence seq{"d", {}, {}};
        const auto n = 1 + uniform_below(rng, 200);
        for (std::uint64_t i = 0; i < n; ++i) seq.tokens.push_back(static_cast<TokenId>(uniform_below(rng, 256)));
        const std::size_t i = uniform_below(rng, n);
        const std::size_t l = uniform_below(rng, 100), r = uniform_below(rng, 100);
        const auto f = extract_fragment(seq, at(i), l, r);
        const long lo = std::max(0L, static_cast<long>(i) - static_cast<long>(l));
        const long hi = std::min(static_cast<long>(n) - 1, static_cast<long>(i + r));
        const std::vector<TokenId> expect(seq.tokens.begin() + lo, seq.tokens.begin() + hi + 1);
        CHECK(f.tokens == expect);
        CHECK(f.start == static_cast<std::size_t>(lo));
        CHECK(f.tokens[f.left] == seq.tokens[i]);
        CHECK(f.left + f.right + 1 == f.tokens.size());
    }
}

TEST_CASE("positions csv") {
    std::ostringstream out;
    const std::vector<SelectedPosition> ps{{"a,b", 3, 0.5, 0, "M0"}};
    write_positions_csv(out, ps);
    CHECK(out.str() == "doc_id,index,entropy,snapshot_id\n\"a,b\",3,0.5,M0\n");
}

}  // TEST_SUITE
