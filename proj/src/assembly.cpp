#include "lcsynth/assembly.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <set>

#include "lcsynth/errors.hpp"
#include "lcsynth/parallel.hpp"
#include "lcsynth/util.hpp"

namespace lcsynth {

std::string_view segment_kind_name(SegmentKind kind) {
    switch (kind) {
        case SegmentKind::positive: return "positive";
        case SegmentKind::negative: return "negative";
        case SegmentKind::root: return "root";
    }
    return "root";
}

std::optional<SegmentKind> parse_segment_kind(std::string_view name) {
    if (name == "positive") return SegmentKind::positive;
    if (name == "negative") return SegmentKind::negative;
    if (name == "root") return SegmentKind::root;
    return std::nullopt;
}

FillPlan plan_fill(std::size_t root_len, std::span<const std::size_t> positive_lens, std::size_t L,
                   std::size_t chunk_len) {
    if (positive_lens.empty()) throw NoPositiveError("no verified positives; root is dropped");
    if (chunk_len == 0) throw ParameterError("chunk_len must be > 0");
    FillPlan plan;
    plan.m = positive_lens.size();
    std::size_t pos_total = 0;
    for (auto l : positive_lens) pos_total += l;
    if (L <= root_len) {
        plan.root_alone = true;
        plan.planned_tokens = root_len;
        return plan;
    }
    const std::size_t room = L - root_len;
    plan.needed_tokens = room > pos_total ? room - pos_total : 0;
    const std::size_t per_round = plan.m * chunk_len;
    plan.depth_k = (plan.needed_tokens + per_round - 1) / per_round;

    // Whole chunks leave the front of the prefix until the sequence fits.
    std::size_t total = root_len + pos_total + plan.m * plan.depth_k * chunk_len;
    std::size_t negatives = plan.m * plan.depth_k;
    while (total > L && negatives > 0) {
        total -= chunk_len;
        --negatives;
    }
    for (std::size_t i = 0; total > L && i < positive_lens.size(); ++i) total -= positive_lens[i];
    plan.planned_tokens = total;
    return plan;
}

TrainingSequence assemble(const TokenSequence& root, std::span<const VerifiedPositive> positives,
                          std::span<const HardNegative> negatives, std::size_t L, std::uint64_t shuffle_seed) {
    struct Item {
        SegmentKind kind;
        const Chunk* chunk;
        std::vector<const VerifiedPositive*> sources;
    };
    std::vector<Item> items;
    std::map<std::pair<std::string, std::size_t>, std::size_t> seen;
    for (const auto& p : positives) {
        auto key = std::make_pair(p.chunk.doc_id, p.chunk.start);
        if (auto it = seen.find(key); it != seen.end()) {
            items[it->second].sources.push_back(&p);
            continue;
        }
        if (p.chunk.tokens.empty()) throw AssemblyError("positive chunk has no tokens");
        seen.emplace(key, items.size());
        items.push_back({SegmentKind::positive, &p.chunk, {&p}});
    }
    for (const auto& n : negatives) {
        auto key = std::make_pair(n.chunk.doc_id, n.chunk.start);
        if (seen.count(key)) {
            throw AssemblyError("chunk " + n.chunk.doc_id + ":" + std::to_string(n.chunk.start) +
                                " appears more than once in the prefix of '" + root.doc_id + "'");
        }
        if (n.chunk.doc_id == root.doc_id) throw AssemblyError("hard negative taken from the root document");
        if (n.chunk.tokens.empty()) throw AssemblyError("negative chunk has no tokens");
        seen.emplace(key, items.size());
        items.push_back({SegmentKind::negative, &n.chunk, {}});
    }

    TrainingSequence seq;
    seq.root_id = root.doc_id;
    seq.shuffle_seed = shuffle_seed;
    if (!positives.empty()) {
        seq.stage = positives.front().stage;
        seq.snapshot_id = positives.front().snapshot_id;
    }

    std::vector<std::size_t> perm(items.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    Rng rng(shuffle_seed);
    fisher_yates(std::span<std::size_t>(perm), rng);

    std::size_t total = root.tokens.size();
    for (const auto& it : items) total += it.chunk->tokens.size();
    std::size_t first = 0;
    if (L <= root.tokens.size()) {
        seq.root_alone = true;
        first = perm.size();
    } else {
        while (total > L && first < perm.size()) total -= items[perm[first++]].chunk->tokens.size();
    }
    for (std::size_t i = 0; i < first; ++i) {
        const auto& it = items[perm[i]];
        seq.truncated.push_back({it.kind, it.chunk->doc_id, it.chunk->start, it.chunk->tokens.size()});
    }

    for (std::size_t i = first; i < perm.size(); ++i) {
        const auto& it = items[perm[i]];
        seq.layout.push_back({it.kind, it.chunk->doc_id, it.chunk->start, it.chunk->tokens.size()});
        seq.tokens.insert(seq.tokens.end(), it.chunk->tokens.begin(), it.chunk->tokens.end());
    }
    const std::size_t root_offset = seq.tokens.size();
    seq.layout.push_back({SegmentKind::root, root.doc_id, 0, root.tokens.size()});
    seq.tokens.insert(seq.tokens.end(), root.tokens.begin(), root.tokens.end());

    for (std::size_t i = first; i < perm.size(); ++i) {
        for (const VerifiedPositive* p : items[perm[i]].sources) {
            seq.targets.push_back(
                {p->position.index, root_offset + p->position.index, p->chunk.doc_id, p->chunk.start, p->delta_h});
        }
    }
    std::sort(seq.targets.begin(), seq.targets.end(), [](const Target& a, const Target& b) {
        if (a.root_index != b.root_index) return a.root_index < b.root_index;
        if (a.positive_doc != b.positive_doc) return a.positive_doc < b.positive_doc;
        return a.positive_start < b.positive_start;
    });
    return seq;
}

NegativeGather gather_negatives(const RetrievalContext& ctx, std::span<const std::uint32_t> positive_rows,
                                std::optional<std::uint32_t> root_doc, std::size_t depth_k, std::size_t token_target,
                                int stage) {
    NegativeGather out;
    QueryFilter base;
    if (root_doc) base.exclude_doc(*root_doc);
    for (auto r : positive_rows) base.exclude_row(r);
    std::size_t tokens = 0;
    if (positive_rows.empty()) {
        out.shortfall = token_target > 0;
        return out;
    }

    // Each positive keeps a ranked list from one scan. Exclusions only grow,
    // so its next neighbour is the first listed row not yet taken.
    const VectorIndex& index = *ctx.index;
    const std::size_t np = positive_rows.size();
    struct Ranked {
        std::vector<Candidate> list;
        std::size_t cursor = 0;
        bool complete = false;
    };
    std::vector<Ranked> ranked(np);
    auto fill = [&](std::size_t i, std::size_t depth) {
        ranked[i].list = secondary_retrieve(index, positive_rows[i], depth, base);
        ranked[i].cursor = 0;
        ranked[i].complete = ranked[i].list.size() < depth;
        ++out.queries;
    };
    {
        const std::size_t depth = depth_k + 16;
        std::vector<float> queries(np * index.dim());
        for (std::size_t i = 0; i < np; ++i) {
            if (positive_rows[i] >= index.size()) throw ParameterError("positive row outside the index");
            std::copy_n(index.vector(positive_rows[i]), index.dim(),
                        queries.begin() + static_cast<std::ptrdiff_t>(i * index.dim()));
        }
        const std::vector<QueryFilter> filters(np, base);
        auto lists = index.query_batch(queries.data(), np, depth, filters, QueryOrigin::secondary_query);
        out.queries += np;
        for (std::size_t i = 0; i < np; ++i) {
            ranked[i].complete = lists[i].size() < depth;
            ranked[i].list = std::move(lists[i]);
        }
    }
    auto next = [&](std::size_t i) -> const Candidate* {
        auto& rk = ranked[i];
        for (;;) {
            while (rk.cursor < rk.list.size()) {
                const Candidate& c = rk.list[rk.cursor++];
                if (!std::binary_search(base.rows.begin(), base.rows.end(), c.row)) return &c;
            }
            if (rk.complete) return nullptr;
            fill(i, std::max<std::size_t>(2 * rk.list.size(), 16));
        }
    };
    auto take = [&](std::size_t i, std::size_t depth) -> std::size_t {
        std::vector<Candidate> found;
        while (found.size() < depth) {
            const Candidate* c = next(i);
            if (!c) break;
            found.push_back(*c);
            base.exclude_row(c->row);
        }
        for (const auto& c : found) {
            HardNegative n;
            n.row = c.row;
            n.chunk = ctx.chunk(c.row);
            n.seed_positive_row = positive_rows[i];
            n.score = c.score;
            n.stage = stage;
            tokens += n.chunk.length;
            out.negatives.push_back(std::move(n));
        }
        return found.size();
    };
    if (depth_k > 0) {
        for (std::size_t i = 0; i < np; ++i) take(i, depth_k);
    }
    bool exhausted = false;
    while (tokens < token_target && !exhausted) {
        bool any = false;
        for (std::size_t i = 0; i < np; ++i) {
            if (tokens >= token_target) break;
            if (take(i, 1) > 0) any = true;
        }
        exhausted = !any;
    }
    out.shortfall = tokens < token_target;
    return out;
}

// ---------------------------------------------------------------------------
// assemble_stage

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct DocResult {
    std::optional<TrainingSequence> sequence;
    std::vector<SelectedPosition> positions;
    std::vector<VerificationRecord> records;
    std::vector<VerifiedPositive> positives;
    std::size_t candidates = 0;
    std::size_t negatives = 0;
    bool no_positive = false;
    std::optional<DocIssue> issue;
    PhaseTimes times;
};

DocResult process_doc(const Scorer& scorer, const RetrievalContext& ctx, const TokenSequence& root, int stage,
                      const ConstructParams& params, const SelectionResult* preselected) {
    DocResult res;
    auto t0 = Clock::now();
    SelectionResult sel;
    if (preselected) {
        sel = *preselected;
    } else {
        EntropyProfile profile = entropy_profile(scorer, root, params.verify.screening_length);
        sel = select_positions(profile, params.percentile_k, stage, params.select);
    }
    res.positions = sel.positions;
    res.times.screening += seconds_since(t0);
    if (sel.positions.empty()) {
        res.no_positive = true;
        res.issue = DocIssue{root.doc_id, "no_positive",
                             sel.all_zero ? "all entropies are zero" : "no position selected"};
        return res;
    }

    t0 = Clock::now();
    const VectorIndex& index = *ctx.index;
    const std::optional<std::uint32_t> root_doc = index.doc_ordinal(root.doc_id);
    std::vector<std::vector<TokenId>> fragments;
    std::vector<std::span<const TokenId>> inputs;
    fragments.reserve(sel.positions.size());
    for (const auto& p : sel.positions) {
        fragments.push_back(extract_fragment(root, p, params.window_left, params.window_right).tokens);
    }
    for (const auto& f : fragments) inputs.emplace_back(f);
    auto vectors = ctx.embedder->embed_batch(inputs);
    std::vector<float> flat;
    flat.reserve(vectors.size() * index.dim());
    for (const auto& v : vectors) {
        if (v.size() != index.dim()) throw IndexError("query embedding dimension does not match the index");
        flat.insert(flat.end(), v.begin(), v.end());
    }
    std::vector<QueryFilter> filters(sel.positions.size());
    if (root_doc) {
        for (auto& f : filters) f.exclude_doc(*root_doc);
    }
    auto hits = index.query_batch(flat.data(), sel.positions.size(), params.K, filters);
    std::vector<std::vector<CandidateChunk>> candidates(hits.size());
    for (std::size_t j = 0; j < hits.size(); ++j) {
        for (const auto& c : hits[j]) candidates[j].push_back({c.row, ctx.chunk(c.row)});
        res.candidates += hits[j].size();
    }
    res.times.retrieval += seconds_since(t0);

    t0 = Clock::now();
    VerifyAllResult ver = verify_all(scorer, root, sel.positions, candidates, params.verify);
    res.records = std::move(ver.records);
    res.positives = ver.positives;
    res.times.verification += seconds_since(t0);
    if (ver.positives.empty()) {
        res.no_positive = true;
        res.issue = DocIssue{root.doc_id, "no_positive", "no candidate passed verification"};
        return res;
    }

    t0 = Clock::now();
    std::vector<std::uint32_t> rows;
    std::vector<std::size_t> lens;
    for (const auto& p : ver.positives) {
        if (std::find(rows.begin(), rows.end(), p.row) != rows.end()) continue;
        rows.push_back(p.row);
        lens.push_back(p.chunk.tokens.size());
    }
    const FillPlan plan = plan_fill(root.tokens.size(), lens, params.L, params.chunk_len);
    NegativeGather gathered;
    if (!plan.root_alone) {
        gathered = gather_negatives(ctx, rows, root_doc, plan.depth_k, plan.needed_tokens, stage);
    }
    res.times.retrieval += seconds_since(t0);

    t0 = Clock::now();
    const std::uint64_t shuffle_seed = derive_seed(params.seed, "shuffle:" + root.doc_id);
    TrainingSequence seq = assemble(root, ver.positives, gathered.negatives, params.L, shuffle_seed);
    seq.stage = stage;
    seq.snapshot_id = scorer.snapshot().snapshot_id;
    seq.shortfall = gathered.shortfall;
    res.negatives = gathered.negatives.size();
    res.times.assembly += seconds_since(t0);
    if (!seq.root_alone && seq.targets.empty()) {
        res.no_positive = true;
        res.issue = DocIssue{root.doc_id, "no_positive", "every positive was truncated from the prefix"};
        return res;
    }
    if (seq.root_alone) {
        res.issue = DocIssue{root.doc_id, "root_alone",
                             "root length " + std::to_string(root.tokens.size()) + " >= target length; emitted alone"};
    }
    res.sequence = std::move(seq);
    return res;
}

}  // namespace

StageArtifacts assemble_stage(const Scorer& scorer, const RetrievalContext& ctx, std::span<const TokenSequence> docs,
                              int stage, const ConstructParams& params) {
    if (!ctx.index || !ctx.corpus || !ctx.embedder) throw PreconditionError("retrieval context is incomplete");
    if (params.L == 0 || params.chunk_len == 0 || params.K == 0) {
        throw ParameterError("L, chunk_len and K must be > 0");
    }
    StageArtifacts art;
    art.counters.docs_sampled = docs.size();

    std::vector<SelectionResult> preselected;
    if (params.corpus_wide_percentile && !docs.empty()) {
        auto t0 = Clock::now();
        std::vector<EntropyProfile> profiles(docs.size());
        parallel_for(docs.size(), params.workers, [&](std::size_t i) {
            profiles[i] = entropy_profile(scorer, docs[i], params.verify.screening_length);
        });
        preselected = select_positions_corpus(profiles, params.percentile_k, stage, params.select);
        art.times.screening += seconds_since(t0);
    }

    const std::size_t workers = resolve_workers(params.workers);
    const std::size_t batch = params.batch_docs ? params.batch_docs : std::max<std::size_t>(4, 2 * workers);
    std::size_t next = 0;
    while (next < docs.size() && !art.counters.budget_reached) {
        const std::size_t n = std::min(batch, docs.size() - next);
        std::vector<DocResult> results(n);
        parallel_for(n, workers, [&](std::size_t i) {
            const auto& root = docs[next + i];
            try {
                results[i] = process_doc(scorer, ctx, root, stage, params,
                                         preselected.empty() ? nullptr : &preselected[next + i]);
            } catch (const Error& e) {
                results[i] = DocResult{};
                results[i].issue = DocIssue{root.doc_id, e.kind(), e.what()};
            }
        });
        // Consume in document order so the stop point is independent of scheduling.
        for (std::size_t i = 0; i < n && !art.counters.budget_reached; ++i) {
            DocResult& r = results[i];
            auto& c = art.counters;
            ++c.docs_processed;
            c.positions_selected += r.positions.size();
            c.candidates_retrieved += r.candidates;
            c.positives_verified += r.positives.size();
            c.negatives_mined += r.negatives;
            art.times.screening += r.times.screening;
            art.times.retrieval += r.times.retrieval;
            art.times.verification += r.times.verification;
            art.times.assembly += r.times.assembly;
            for (auto& p : r.positions) art.positions.push_back(std::move(p));
            for (auto& v : r.records) art.verification.push_back(std::move(v));
            for (auto& v : r.positives) art.positives.push_back(std::move(v));
            if (r.issue) art.issues.push_back(*r.issue);
            if (r.sequence) {
                if (r.sequence->root_alone) ++c.root_alone;
                if (r.sequence->shortfall) ++c.shortfall_sequences;
                ++c.sequences_emitted;
                c.tokens_emitted += r.sequence->tokens.size();
                art.sequences.push_back(std::move(*r.sequence));
                if (c.tokens_emitted >= params.budget_tokens) c.budget_reached = true;
            } else {
                ++c.skipped_docs;
                if (r.no_positive) {
                    ++c.skipped_no_positive;
                } else {
                    ++c.skipped_errors;
                }
            }
        }
        next += n;
    }

    if (art.sequences.empty()) {
        throw StageError("stage " + std::to_string(stage) + " produced no sequences (" +
                             std::to_string(art.counters.skipped_docs) + " documents skipped)",
                         art.counters.skipped_docs);
    }
    std::sort(art.sequences.begin(), art.sequences.end(),
              [](const TrainingSequence& a, const TrainingSequence& b) { return a.root_id < b.root_id; });
    return art;
}

}  // namespace lcsynth
