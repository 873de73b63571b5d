#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "lcsynth/assembly.hpp"
#include "lcsynth/errors.hpp"
#include "lcsynth/orchestrator.hpp"
#include "lcsynth/sequence_io.hpp"
#include "lcsynth/util.hpp"
#include "support/fixture.hpp"

using namespace lcsynth;

namespace {

Chunk make_chunk(const std::string& doc, std::size_t start, std::size_t len, TokenId fill) {
    Chunk c;
    c.doc_id = doc;
    c.start = start;
    c.length = len;
    c.tokens.assign(len, fill);
    return c;
}

VerifiedPositive positive(const std::string& doc, std::size_t start, std::size_t len, std::size_t root_index,
                          double dh = 0.5) {
    VerifiedPositive v;
    v.chunk = make_chunk(doc, start, len, static_cast<TokenId>(1 + start % 200));
    v.position.doc_id = "root";
    v.position.index = root_index;
    v.delta_h = dh;
    return v;
}

HardNegative negative(const std::string& doc, std::size_t start, std::size_t len) {
    HardNegative n;
    n.chunk = make_chunk(doc, start, len, 250);
    return n;
}

TokenSequence root_of(std::size_t len) {
    TokenSequence r{"root", std::vector<TokenId>(len), {}};
    std::iota(r.tokens.begin(), r.tokens.end(), TokenId{0});
    for (auto& t : r.tokens) t %= 256;
    return r;
}

std::string seg_key(const Segment& s) {
    return std::string(segment_kind_name(s.kind)) + ":" + s.doc_id + ":" + std::to_string(s.start) + ":" +
           std::to_string(s.len);
}

const testing::PlantedFixture& small_fixture() {
    static const testing::PlantedFixture f = [] {
        PlantedParams pp;
        pp.n_roots = 40;
        pp.n_distractors = 80;
        pp.n_background = 40;
        pp.n_base = 150;
        return testing::make_planted_fixture(pp, 256);
    }();
    return f;
}

ConstructParams small_params() {
    ConstructParams p;
    p.L = 2048;
    p.chunk_len = 256;
    p.verify.screening_length = 1024;
    p.budget_tokens = 1'000'000;
    p.seed = 9;
    return p;
}

}  // namespace

TEST_SUITE("assembly") {

TEST_CASE("fill arithmetic") {
    const std::size_t two[] = {100, 100};
    const auto a = plan_fill(200, two, 1000, 100);
    CHECK(a.needed_tokens == 600);
    CHECK(a.depth_k == 3);
    CHECK(a.m == 2);
    const std::size_t one[] = {100};
    const auto b = plan_fill(200, one, 1000, 100);
    CHECK(b.needed_tokens == 700);
    CHECK(b.depth_k == 7);
    CHECK_THROWS_AS(plan_fill(200, {}, 1000, 100), NoPositiveError);
    CHECK(plan_fill(1000, one, 1000, 100).root_alone);
}

TEST_CASE("planned length lies in [L - chunk_len + 1, L]") {
    Rng rng(3);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t chunk_len = 1 + uniform_below(rng, 600);
        const std::size_t m = 1 + uniform_below(rng, 6);
        std::vector<std::size_t> lens(m);
        std::size_t pos_total = 0;
        for (auto& l : lens) pos_total += (l = 1 + uniform_below(rng, chunk_len));
        const std::size_t root = 1 + uniform_below(rng, 5000);
        const std::size_t L = root + pos_total + uniform_below(rng, 20000);
        const auto plan = plan_fill(root, lens, L, chunk_len);
        CHECK(plan.planned_tokens <= L);
        CHECK(plan.planned_tokens + chunk_len >= L + 1);
        CHECK(plan.depth_k * m * chunk_len >= plan.needed_tokens);
    }
}

TEST_CASE("single positive without negatives is positive then root") {
    const auto root = root_of(50);
    const VerifiedPositive p[] = {positive("def", 0, 10, 7)};
    const auto s = assemble(root, p, {}, 1000, 1);
    std::vector<TokenId> expect = p[0].chunk.tokens;
    expect.insert(expect.end(), root.tokens.begin(), root.tokens.end());
    CHECK(s.tokens == expect);
    REQUIRE(s.targets.size() == 1);
    CHECK(s.targets[0].offset == 17);
    CHECK(s.targets[0].root_index == 7);
}

TEST_CASE("assembly is deterministic and accounts for every planned chunk") {
    Rng rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        const auto root = root_of(20 + uniform_below(rng, 200));
        std::vector<VerifiedPositive> ps;
        const std::size_t m = 1 + uniform_below(rng, 4);
        for (std::size_t i = 0; i < m; ++i) {
            ps.push_back(positive("def" + std::to_string(i % 3), 32 * i, 1 + uniform_below(rng, 32),
                                  uniform_below(rng, root.size())));
        }
        std::vector<HardNegative> ns;
        const std::size_t nn = uniform_below(rng, 12);
        for (std::size_t i = 0; i < nn; ++i) ns.push_back(negative("neg", 32 * i, 1 + uniform_below(rng, 32)));
        const std::size_t L = root.size() + 1 + uniform_below(rng, 400);
        const std::uint64_t seed = rng();
        const auto a = assemble(root, ps, ns, L, seed);
        const auto b = assemble(root, ps, ns, L, seed);
        CHECK(a.tokens == b.tokens);
        CHECK(a.layout == b.layout);
        CHECK(a.tokens.size() <= L);

        // Suffix law.
        REQUIRE(a.tokens.size() >= root.size());
        CHECK(std::equal(root.tokens.begin(), root.tokens.end(), a.tokens.end() - static_cast<long>(root.size())));
        CHECK(a.layout.back().kind == SegmentKind::root);

        // Multiset law: prefix plus truncated equals the planned chunks, each once.
        std::map<std::string, int> planned, got;
        std::map<std::pair<std::string, std::size_t>, bool> seen;
        for (const auto& p : ps) {
            if (seen.emplace(std::make_pair(p.chunk.doc_id, p.chunk.start), true).second) {
                ++planned["positive:" + p.chunk.doc_id + ":" + std::to_string(p.chunk.start) + ":" +
                          std::to_string(p.chunk.length)];
            }
        }
        for (const auto& n : ns) {
            ++planned["negative:" + n.chunk.doc_id + ":" + std::to_string(n.chunk.start) + ":" +
                      std::to_string(n.chunk.length)];
        }
        for (std::size_t i = 0; i + 1 < a.layout.size(); ++i) ++got[seg_key(a.layout[i])];
        for (const auto& t : a.truncated) ++got[seg_key(t)];
        CHECK(got == planned);

        // Tiling: the layout reproduces the tokens.
        std::size_t off = 0;
        for (const auto& seg : a.layout) off += seg.len;
        CHECK(off == a.tokens.size());
        CHECK_FALSE(check_sequence(a, {L, {}}).has_value());
    }
}

TEST_CASE("a chunk used twice is an assembly error") {
    const auto root = root_of(30);
    const VerifiedPositive p[] = {positive("def", 0, 10, 3)};
    const HardNegative dup[] = {negative("def", 0, 10)};
    CHECK_THROWS_AS(assemble(root, p, dup, 100, 1), AssemblyError);
    const HardNegative twice[] = {negative("n", 0, 10), negative("n", 0, 10)};
    CHECK_THROWS_AS(assemble(root, p, twice, 100, 1), AssemblyError);
    const HardNegative from_root[] = {negative("root", 64, 10)};
    CHECK_THROWS_AS(assemble(root, p, from_root, 100, 1), AssemblyError);
}

TEST_CASE("sequence validator flags broken records") {
    const auto root = root_of(40);
    const VerifiedPositive p[] = {positive("def", 0, 10, 3)};
    const HardNegative n[] = {negative("n", 0, 10), negative("n", 10, 10)};
    const auto good = assemble(root, p, n, 1000, 7);
    CHECK_FALSE(check_sequence(good).has_value());

    auto bad_suffix = good;
    bad_suffix.tokens.back() ^= 1;
    auto lookup = [&](const std::string& doc, std::size_t start, std::size_t len) -> std::optional<std::vector<TokenId>> {
        if (doc == "root") return std::vector<TokenId>(root.tokens.begin() + static_cast<long>(start),
                                                       root.tokens.begin() + static_cast<long>(start + len));
        if (doc == "def") return p[0].chunk.tokens;
        if (doc == "n") return std::vector<TokenId>(len, 250);
        return std::nullopt;
    };
    CHECK_FALSE(check_sequence(good, {std::nullopt, lookup}).has_value());
    CHECK(check_sequence(bad_suffix, {std::nullopt, lookup}).has_value());

    auto dup = good;
    dup.layout.insert(dup.layout.begin(), dup.layout.front());
    dup.tokens.insert(dup.tokens.begin(), dup.tokens.begin(), dup.tokens.begin() + static_cast<long>(dup.layout.front().len));
    CHECK(check_sequence(dup).has_value());

    CHECK(check_sequence(good, {good.tokens.size() - 1, {}}).has_value());
}

TEST_CASE("json records round-trip") {
    const auto root = root_of(40);
    const VerifiedPositive p[] = {positive("def", 0, 10, 3), positive("def", 64, 5, 9)};
    const HardNegative n[] = {negative("n", 0, 10)};
    auto s = assemble(root, p, n, 60, 11);
    s.stage = 2;
    s.snapshot_id = "M2-abc";
    const auto back = sequence_from_json(sequence_to_json(s));
    CHECK(back.tokens == s.tokens);
    CHECK(back.layout == s.layout);
    CHECK(back.truncated == s.truncated);
    CHECK(back.targets.size() == s.targets.size());
    CHECK(back.stage == 2);
    CHECK(back.snapshot_id == "M2-abc");
    CHECK(back.shuffle_seed == 11);
}

TEST_CASE("stage budget is a lower-bound stop rule") {
    const auto& f = small_fixture();
    const auto scorer = make_scorer(f.m0, std::nullopt);
    auto p = small_params();
    p.budget_tokens = 1;
    const auto one = assemble_stage(*scorer, f.retrieval, f.roots->sequences(), 0, p);
    CHECK(one.counters.sequences_emitted == 1);
    CHECK(one.counters.budget_reached);

    for (std::size_t budget : {3000u, 9000u, 20000u}) {
        p.budget_tokens = budget;
        const auto art = assemble_stage(*scorer, f.retrieval, f.roots->sequences(), 0, p);
        std::size_t total = 0;
        for (const auto& s : art.sequences) {
            total += s.tokens.size();
            CHECK(s.tokens.size() <= p.L);
            CHECK_FALSE(check_sequence(s, {p.L, {}}).has_value());
        }
        CHECK(total == art.counters.tokens_emitted);
        CHECK(total >= budget);
        CHECK(total < budget + p.L);
    }
}

TEST_CASE("stage output does not depend on the worker count") {
    const auto& f = small_fixture();
    const auto scorer = make_scorer(f.m0, std::nullopt);
    auto p = small_params();
    p.workers = 1;
    const auto a = assemble_stage(*scorer, f.retrieval, f.roots->sequences(), 0, p);
    p.workers = 3;
    p.batch_docs = 5;
    const auto b = assemble_stage(*scorer, f.retrieval, f.roots->sequences(), 0, p);
    REQUIRE(a.sequences.size() == b.sequences.size());
    for (std::size_t i = 0; i < a.sequences.size(); ++i) CHECK(a.sequences[i].tokens == b.sequences[i].tokens);
}

TEST_CASE("negative mining matches one index scan per negative") {
    const auto& f = small_fixture();
    const auto& ctx = f.retrieval;
    const auto n_rows = static_cast<std::uint32_t>(ctx.index->size());
    // Reference: every negative is its own exact query over the remaining rows.
    auto naive = [&](std::span<const std::uint32_t> rows, std::optional<std::uint32_t> root_doc, std::size_t depth_k,
                     std::size_t target) {
        QueryFilter base;
        if (root_doc) base.exclude_doc(*root_doc);
        for (auto r : rows) base.exclude_row(r);
        std::vector<std::pair<std::uint32_t, std::uint32_t>> got;  // (row, seed)
        std::size_t tokens = 0;
        auto take = [&](std::uint32_t seed, std::size_t depth) {
            const auto found = secondary_retrieve(*ctx.index, seed, depth, base);
            for (const auto& c : found) {
                base.exclude_row(c.row);
                got.emplace_back(c.row, seed);
                tokens += ctx.chunk(c.row).length;
            }
            return found.size();
        };
        if (depth_k > 0) {
            for (auto r : rows) take(r, depth_k);
        }
        bool exhausted = rows.empty();
        while (tokens < target && !exhausted) {
            bool any = false;
            for (auto r : rows) {
                if (tokens >= target) break;
                if (take(r, 1) > 0) any = true;
            }
            exhausted = !any;
        }
        return std::make_pair(got, tokens < target);
    };

    Rng rng(17);
    for (int trial = 0; trial < 120; ++trial) {
        std::vector<std::uint32_t> rows;
        const std::size_t m = 1 + uniform_below(rng, 8);
        while (rows.size() < m) {
            const auto r = static_cast<std::uint32_t>(uniform_below(rng, n_rows));
            if (std::find(rows.begin(), rows.end(), r) == rows.end()) rows.push_back(r);
        }
        std::optional<std::uint32_t> root_doc;
        if (trial % 2 == 0) root_doc = static_cast<std::uint32_t>(uniform_below(rng, ctx.index->doc_ids().size()));
        const std::size_t depth_k = trial % 3 == 0 ? uniform_below(rng, 60) : uniform_below(rng, 4);
        const std::size_t targets[] = {0, 3000, 40000, 100'000'000};
        const std::size_t target = targets[trial % 4];

        const auto [want, want_short] = naive(rows, root_doc, depth_k, target);
        const auto got = gather_negatives(ctx, rows, root_doc, depth_k, target, 1);
        REQUIRE(got.negatives.size() == want.size());
        for (std::size_t i = 0; i < want.size(); ++i) {
            CHECK(got.negatives[i].row == want[i].first);
            CHECK(got.negatives[i].seed_positive_row == want[i].second);
        }
        CHECK(got.shortfall == want_short);
    }
}

TEST_CASE("a stage without positives raises a stage error with the skip count") {
    const auto& f = small_fixture();
    const auto scorer = make_scorer(f.m0, std::nullopt);
    auto p = small_params();
    p.verify.tau_pos = 1.0;  // dH > 1 is impossible
    try {
        assemble_stage(*scorer, f.retrieval, f.roots->sequences(), 0, p);
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.skipped() == f.roots->size());
    }
}

}  // TEST_SUITE
