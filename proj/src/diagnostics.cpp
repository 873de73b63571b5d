#include "lcsynth/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lcsynth/errors.hpp"
#include "lcsynth/format.hpp"
#include "lcsynth/orchestrator.hpp"
#include "lcsynth/sequence_io.hpp"
#include "lcsynth/util.hpp"
#include "lcsynth/verification.hpp"

namespace lcsynth {

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ParameterError("quantile of an empty set");
    if (!(q >= 0.0 && q <= 1.0)) throw ParameterError("quantile level outside [0, 1]");
    std::sort(values.begin(), values.end());
    const double h = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

const TokenSequence& root_of(const TokenizedCorpus& roots, const PositionRef& p) {
    const TokenSequence* seq = roots.find(p.doc_id);
    if (!seq) throw PreconditionError("root document '" + p.doc_id + "' not found");
    if (p.index >= seq->size()) {
        throw PreconditionError("position " + std::to_string(p.index) + " outside '" + p.doc_id + "'");
    }
    return *seq;
}

std::vector<std::shared_ptr<const Scorer>> scorers_for(std::span<const ModelState> snapshots) {
    std::vector<std::shared_ptr<const Scorer>> out;
    for (const auto& s : snapshots) out.push_back(make_scorer(s, std::nullopt));
    return out;
}

}  // namespace

DriftResult entropy_drift(std::span<const ModelState> snapshots, std::span<const PositionRef> positions,
                          const TokenizedCorpus& roots, std::size_t screening_length) {
    if (snapshots.empty()) throw PreconditionError("entropy drift needs at least M_0");
    const auto scorers = scorers_for(snapshots);
    DriftResult r;
    for (const auto& p : positions) {
        const TokenSequence& seq = root_of(roots, p);
        const std::size_t start =
            screening_length == 0 || p.index + 1 <= screening_length ? 0 : p.index + 1 - screening_length;
        std::span<const TokenId> window(seq.tokens.data() + start, p.index + 1 - start);
        const std::size_t rel = p.index - start;
        EntropyDriftRecord rec{p, {}};
        for (const auto& s : scorers) {
            rec.entropy_by_stage.push_back(
                s->conditional_entropy({}, window, std::span<const std::size_t>(&rel, 1)).at(0));
        }
        r.records.push_back(std::move(rec));
    }
    for (std::size_t t = 0; t < snapshots.size(); ++t) {
        QuantileSummary q;
        q.stage = static_cast<int>(t);
        q.n = r.records.size();
        if (q.n > 0) {
            std::vector<double> v;
            v.reserve(q.n);
            for (const auto& rec : r.records) v.push_back(rec.entropy_by_stage[t]);
            q.median = quantile(v, 0.5);
            q.q1 = quantile(v, 0.25);
            q.q3 = quantile(v, 0.75);
        }
        r.summary.push_back(q);
    }
    return r;
}

std::vector<TokenId> filler_tokens(const RetrievalContext& ctx, const PositiveRef& positive, std::size_t tokens,
                                   std::size_t exclude_neighbours, std::uint64_t seed) {
    std::vector<TokenId> out;
    if (tokens == 0) return out;
    const VectorIndex& index = *ctx.index;
    QueryFilter filter;
    if (auto d = index.doc_ordinal(positive.position.doc_id)) filter.exclude_doc(*d);
    const auto pdoc = index.doc_ordinal(positive.positive_doc);
    if (pdoc) {
        filter.exclude_doc(*pdoc);
        if (auto prow = index.row_of(*pdoc, static_cast<std::uint32_t>(positive.positive_start));
            prow && exclude_neighbours > 0) {
            for (const auto& c : secondary_retrieve(index, *prow, exclude_neighbours, filter)) {
                filter.exclude_row(c.row);
            }
        }
    }
    const std::size_t n = index.size();
    if (n == 0) throw PreconditionError("empty index cannot supply filler");
    Rng rng(derive_seed(seed, "filler:" + positive.position.doc_id, positive.position.index));
    const std::size_t first = static_cast<std::size_t>(uniform_below(rng, n));
    for (std::size_t k = 0; k < n && out.size() < tokens; ++k) {
        const auto row = static_cast<std::uint32_t>((first + k) % n);
        if (filter.excludes(row, index.ref(row).doc)) continue;
        auto chunk = ctx.chunk_tokens(row);
        const std::size_t take = std::min(chunk.size(), tokens - out.size());
        out.insert(out.end(), chunk.begin(), chunk.begin() + static_cast<std::ptrdiff_t>(take));
    }
    if (out.size() < tokens) {
        throw PreconditionError("index holds only " + std::to_string(out.size()) + " admissible filler tokens, need " +
                                std::to_string(tokens));
    }
    return out;
}

std::vector<FillerLossRecord> filler_loss(std::span<const ModelState> snapshots, std::span<const PositiveRef> positives,
                                          const TokenizedCorpus& roots, const RetrievalContext& ctx,
                                          const FillerParams& params) {
    if (snapshots.empty()) throw PreconditionError("filler loss needs at least M_0");
    const auto scorers = scorers_for(snapshots);
    const std::size_t max_d = params.distances.empty()
                                  ? 0
                                  : *std::max_element(params.distances.begin(), params.distances.end());
    std::vector<FillerLossRecord> out;
    for (const auto& pos : positives) {
        const TokenSequence& root = root_of(roots, pos.position);
        std::vector<TokenId> b;
        std::string setup_error;
        std::vector<TokenId> filler;
        try {
            const auto pdoc = ctx.index->doc_ordinal(pos.positive_doc);
            if (!pdoc) throw PreconditionError("positive document '" + pos.positive_doc + "' not indexed");
            const auto prow = ctx.index->row_of(*pdoc, static_cast<std::uint32_t>(pos.positive_start));
            if (!prow) throw PreconditionError("positive chunk not indexed");
            auto t = ctx.chunk_tokens(*prow);
            b.assign(t.begin(), t.end());
            filler = filler_tokens(ctx, pos, max_d, params.exclude_neighbours, params.seed);
        } catch (const Error& e) {
            setup_error = e.what();
        }
        const std::size_t i = pos.position.index;
        const std::size_t ps = verification_prefix_start(i, b.size(), params.screening_length);
        std::span<const TokenId> prefix(root.tokens.data() + ps, i + 1 - ps);
        const std::size_t rel = i - ps;
        for (std::size_t d : params.distances) {
            FillerLossRecord rec{pos.position, pos.positive_doc, pos.positive_start, d, {}, setup_error};
            if (rec.error.empty() && b.size() + d + prefix.size() > params.context_budget) {
                rec.error = "layout of " + std::to_string(b.size() + d + prefix.size()) +
                            " tokens exceeds the context budget " + std::to_string(params.context_budget);
            }
            if (rec.error.empty()) {
                std::vector<TokenId> prepend = b;
                prepend.insert(prepend.end(), filler.begin(), filler.begin() + static_cast<std::ptrdiff_t>(d));
                for (const auto& s : scorers) {
                    rec.loss_by_stage.push_back(s->loss_at(prepend, prefix, std::span<const std::size_t>(&rel, 1)).at(0));
                }
            }
            out.push_back(std::move(rec));
        }
    }
    return out;
}

std::vector<FillerSummary> summarize_filler(std::span<const FillerLossRecord> records) {
    std::map<std::pair<int, std::size_t>, std::pair<double, std::size_t>> acc;
    for (const auto& r : records) {
        if (!r.error.empty()) continue;
        for (std::size_t t = 0; t < r.loss_by_stage.size(); ++t) {
            auto& a = acc[{static_cast<int>(t), r.d}];
            a.first += r.loss_by_stage[t];
            a.second += 1;
        }
    }
    std::vector<FillerSummary> out;
    for (const auto& [key, a] : acc) {
        out.push_back({key.first, key.second, a.second, a.first / static_cast<double>(a.second)});
    }
    return out;
}

DifficultyRecord make_difficulty(int stage, double loss_base, double loss_prev, std::size_t targets) {
    return {stage, targets, loss_base, loss_prev, loss_base - loss_prev};
}

DifficultyRecord difficulty(int stage, std::span<const TrainingSequence> sequences, const ModelState& base,
                            const ModelState& previous) {
    if (stage < 1) throw PreconditionError("difficulty needs stage >= 1");
    const auto p0 = make_scorer(base, std::nullopt);
    const auto prev = make_scorer(previous, std::nullopt);
    double sum_base = 0.0;
    double sum_prev = 0.0;
    std::size_t n = 0;
    for (const auto& s : sequences) {
        if (s.targets.empty()) throw PreconditionError("sequence '" + s.root_id + "' carries no target provenance");
        std::vector<std::size_t> offsets;
        for (const auto& t : s.targets) offsets.push_back(t.offset);
        std::sort(offsets.begin(), offsets.end());
        offsets.erase(std::unique(offsets.begin(), offsets.end()), offsets.end());
        for (double v : p0->loss_at({}, s.tokens, offsets)) sum_base += v;
        for (double v : prev->loss_at({}, s.tokens, offsets)) sum_prev += v;
        n += offsets.size();
    }
    if (n == 0) throw PreconditionError("stage " + std::to_string(stage) + " has no target positions");
    return make_difficulty(stage, sum_base / static_cast<double>(n), sum_prev / static_cast<double>(n), n);
}

// ---------------------------------------------------------------------------
// Run-directory readers

std::vector<ModelState> load_run_snapshots(const std::filesystem::path& run_dir) {
    std::vector<ModelState> out;
    out.push_back(load_run_snapshot(run_dir, 0));
    for (int t = 1; std::filesystem::exists(stage_dir(run_dir, t - 1)); ++t) {
        if (!std::filesystem::exists(stage_snapshot_path(run_dir, t - 1))) {
            throw IoError("stage " + std::to_string(t - 1) + " has no snapshot (M" + std::to_string(t) + ")");
        }
        out.push_back(load_run_snapshot(run_dir, t));
    }
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

namespace {

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& file, std::size_t min_fields) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot read " + file.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::getline(in, line);  // header
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() < min_fields) {
            throw IoError(file.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(min_fields) +
                          " fields");
        }
        rows.push_back(std::move(f));
    }
    return rows;
}

}  // namespace

std::vector<PositionRef> read_positions(const std::filesystem::path& run_dir, int stage) {
    std::vector<PositionRef> out;
    for (const auto& f : read_csv(stage_dir(run_dir, stage) / "positions.csv", 3)) {
        out.push_back({f[0], static_cast<std::size_t>(std::stoull(f[1]))});
    }
    return out;
}

std::vector<PositiveRef> read_verified_positives(const std::filesystem::path& run_dir, int stage) {
    std::vector<PositiveRef> out;
    for (const auto& f : read_csv(stage_dir(run_dir, stage) / "verification.csv", 7)) {
        if (f[6] != "1") continue;
        const auto colon = f[2].rfind(':');
        if (colon == std::string::npos) throw IoError("malformed candidate chunk '" + f[2] + "'");
        PositiveRef p;
        p.position = {f[0], static_cast<std::size_t>(std::stoull(f[1]))};
        p.positive_doc = f[2].substr(0, colon);
        p.positive_start = static_cast<std::size_t>(std::stoull(f[2].substr(colon + 1)));
        out.push_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports

void write_drift_summary_csv(std::ostream& out, std::span<const QuantileSummary> rows) {
    out << "stage,n,median,q1,q3\n";
    for (const auto& r : rows) {
        out << r.stage << ',' << r.n << ',' << fmt_double(r.median) << ',' << fmt_double(r.q1) << ','
            << fmt_double(r.q3) << '\n';
    }
}

void write_drift_records_csv(std::ostream& out, std::span<const EntropyDriftRecord> records) {
    out << "doc_id,index,stage,entropy\n";
    for (const auto& r : records) {
        for (std::size_t t = 0; t < r.entropy_by_stage.size(); ++t) {
            out << csv_field(r.position.doc_id) << ',' << r.position.index << ',' << t << ','
                << fmt_double(r.entropy_by_stage[t]) << '\n';
        }
    }
}

void write_filler_records_csv(std::ostream& out, std::span<const FillerLossRecord> records) {
    out << "doc_id,index,positive_chunk,d,stage,loss,error\n";
    for (const auto& r : records) {
        const std::string chunk = csv_field(r.positive_doc + ":" + std::to_string(r.positive_start));
        if (!r.error.empty()) {
            out << csv_field(r.position.doc_id) << ',' << r.position.index << ',' << chunk << ',' << r.d << ",,,"
                << csv_field(r.error) << '\n';
            continue;
        }
        for (std::size_t t = 0; t < r.loss_by_stage.size(); ++t) {
            out << csv_field(r.position.doc_id) << ',' << r.position.index << ',' << chunk << ',' << r.d << ',' << t
                << ',' << fmt_double(r.loss_by_stage[t]) << ",\n";
        }
    }
}

void write_filler_summary_csv(std::ostream& out, std::span<const FillerSummary> rows) {
    out << "stage,d,n,mean_loss\n";
    for (const auto& r : rows) out << r.stage << ',' << r.d << ',' << r.n << ',' << fmt_double(r.mean_loss) << '\n';
}

void write_difficulty_csv(std::ostream& out, std::span<const DifficultyRecord> records) {
    out << "stage,targets,loss_base,loss_prev,difficulty\n";
    for (const auto& r : records) {
        out << r.stage << ',' << r.targets << ',' << fmt_double(r.loss_base) << ',' << fmt_double(r.loss_prev) << ','
            << fmt_double(r.difficulty) << '\n';
    }
}

namespace {

template <typename Fn>
std::filesystem::path write_csv_file(const std::filesystem::path& file, Fn&& fn) {
    std::ostringstream os;
    fn(os);
    const auto tmp = std::filesystem::path(file.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + file.string());
        out << os.str();
        if (!out) throw IoError("failed writing " + file.string());
    }
    std::filesystem::rename(tmp, file);
    return file;
}

}  // namespace

std::vector<std::filesystem::path> emit_report(const std::filesystem::path& dir, const DiagnosticsReport& report) {
    const bool any = (report.drift && !report.drift->records.empty()) || !report.filler.empty() ||
                     !report.difficulty.empty();
    if (!any) throw PreconditionError("no diagnostic records to emit");
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> out;
    if (report.drift && !report.drift->records.empty()) {
        out.push_back(write_csv_file(dir / "drift_summary.csv",
                                     [&](std::ostream& os) { write_drift_summary_csv(os, report.drift->summary); }));
        out.push_back(write_csv_file(dir / "drift_positions.csv",
                                     [&](std::ostream& os) { write_drift_records_csv(os, report.drift->records); }));
    }
    if (!report.filler.empty()) {
        out.push_back(write_csv_file(dir / "filler_loss.csv",
                                     [&](std::ostream& os) { write_filler_records_csv(os, report.filler); }));
        const auto summary = summarize_filler(report.filler);
        out.push_back(write_csv_file(dir / "filler_summary.csv",
                                     [&](std::ostream& os) { write_filler_summary_csv(os, summary); }));
    }
    if (!report.difficulty.empty()) {
        out.push_back(write_csv_file(dir / "difficulty.csv",
                                     [&](std::ostream& os) { write_difficulty_csv(os, report.difficulty); }));
    }
    return out;
}

}  // namespace lcsynth
