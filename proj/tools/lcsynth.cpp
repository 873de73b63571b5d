#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lcsynth/config.hpp"
#include "lcsynth/diagnostics.hpp"
#include "lcsynth/errors.hpp"
#include "lcsynth/log.hpp"
#include "lcsynth/orchestrator.hpp"
#include "lcsynth/remote.hpp"
#include "lcsynth/retrieval.hpp"
#include "lcsynth/screening.hpp"
#include "lcsynth/sequence_io.hpp"
#include "lcsynth/util.hpp"
#include "lcsynth/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lcsynth;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string log = "text";
    std::vector<std::string> sets;
    bool verbose = false;
};

struct Session {
    AppConfig cfg;
    std::string config_text;
};

void print_error(const std::string& kind, const std::string& message, int code, json extra = json::object()) {
    json rec = {{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
    for (auto& [k, v] : extra.items()) rec["error"][k] = v;
    std::cerr << rec.dump() << '\n';
}

std::string read_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot read " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_atomic(const fs::path& file, const std::string& text) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
        if (!out) throw IoError("failed writing " + tmp.string());
    }
    fs::rename(tmp, file);
}

/// Writes to `file`, or stdout when it is empty.
void emit(const std::string& file, const std::string& text) {
    if (file.empty()) {
        std::cout << text;
        std::cout.flush();
    } else {
        write_text_atomic(file, text);
    }
}

Session load_session(const GlobalOptions& g) {
    Session s;
    json tree = json::object();
    fs::path dir;
    if (!g.config.empty()) {
        s.config_text = read_file(g.config);
        tree = parse_config_text(s.config_text);
        dir = fs::absolute(g.config).parent_path();
    }
    for (const auto& kv : g.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_config_value(tree, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (g.seed) tree["seed"] = *g.seed;
    s.cfg = config_from_tree(tree, dir);
    return s;
}

DocumentStore open_store(const AppConfig& c) {
    if (c.paths.store.empty()) throw ConfigError("paths.store is not set");
    return DocumentStore::open(c.paths.store);
}

std::shared_ptr<const TokenizedCorpus> tokenize_kind(const DocumentStore& store, CorpusKind kind) {
    ByteTokenizer tok;
    std::vector<TokenSequence> seqs;
    for (const auto& d : store.documents()) {
        if (d.source == kind) seqs.push_back(tok.tokenize(d));
    }
    return std::make_shared<const TokenizedCorpus>(std::move(seqs));
}

std::shared_ptr<const Embedder> query_embedder(const AppConfig& c, const VectorIndex& index) {
    if (c.embedder_endpoint) {
        return std::make_shared<const RemoteEmbedder>(*c.embedder_endpoint, index.dim(),
                                                      std::make_shared<const ByteTokenizer>());
    }
    return embedder_from_index(index);
}

RetrievalContext load_retrieval(const AppConfig& c, const DocumentStore& store) {
    if (c.paths.index.empty()) throw ConfigError("paths.index is not set");
    auto index = std::make_shared<const VectorIndex>(VectorIndex::load(c.paths.index));
    if (index->chunk_len() != 0 && index->chunk_len() != c.stage.chunk_len) {
        throw ConfigError("index was built with chunk_len " + std::to_string(index->chunk_len()) + ", config has " +
                          std::to_string(c.stage.chunk_len));
    }
    return RetrievalContext::make(tokenize_kind(store, CorpusKind::retrieval), index, query_embedder(c, *index));
}

std::vector<Document> read_jsonl_documents(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot read " + file.string());
    DocumentStore tmp;
    const IngestReport rep = tmp.ingest(in, CorpusKind::source);
    if (!rep.errors.empty()) {
        throw IoError(file.string() + ":" + std::to_string(rep.errors.front().line) + ": " +
                      rep.errors.front().message);
    }
    return tmp.documents();
}

ModelState base_state(const AppConfig& c) {
    if (!c.paths.base_snapshot.empty() && fs::exists(c.paths.base_snapshot)) {
        ModelState m = load_snapshot(c.paths.base_snapshot);
        m.snapshot.stage_index = 0;
        return m;
    }
    if (c.scorer_endpoint) {
        ModelState m;
        m.snapshot = {"M0", 0, ScorerBackend::remote};
        return m;
    }
    std::vector<Document> docs;
    if (!c.paths.base_corpus.empty()) docs = read_jsonl_documents(c.paths.base_corpus);
    ModelState m = make_builtin_state(0, train_base_model(docs, c.ngram));
    if (!c.paths.base_snapshot.empty()) save_snapshot(m, c.paths.base_snapshot);
    return m;
}

ModelState stage_state(const AppConfig& c, int stage, const std::string& run_dir) {
    if (stage < 0) throw ParameterError("stage must be >= 0");
    if (stage == 0 && run_dir.empty()) return base_state(c);
    if (run_dir.empty()) throw ConfigError("--run is required for stage > 0");
    return load_run_snapshot(run_dir, stage);
}

std::string run_id_for(const Session& s) {
    return "run-" + config_hash(s.cfg.tree).substr(0, 8) + "-s" + std::to_string(s.cfg.stage.seed);
}

/// Documents sampled by stages before `stage` of a persisted run.
SampleLedger ledger_from_run(const std::string& run_dir, int stage) {
    SampleLedger ledger;
    for (int t = 0; t < stage && !run_dir.empty(); ++t) {
        const fs::path report = stage_dir(run_dir, t) / "report.json";
        if (!fs::exists(report)) throw IoError("missing " + report.string());
        ledger.record(StageReport::from_json(json::parse(read_file(report))).doc_ids);
    }
    return ledger;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_ingest(const Session& s, const std::string& input, const std::string& corpus) {
    const auto kind = parse_corpus_kind(corpus);
    if (!kind) throw ConfigError("--corpus must be source or retrieval");
    DocumentStore store = open_store(s.cfg);
    std::ifstream in(input);
    if (!in) throw IoError("cannot read " + input);
    const IngestReport rep = store.ingest(in, *kind);
    json errors = json::array();
    for (const auto& e : rep.errors) errors.push_back({{"line", e.line}, {"message", e.message}});
    if (!rep.errors.empty()) {
        log_warn("ingest", -1, "skipped records", {{"count", rep.errors.size()}});
    }
    std::cout << json{{"accepted", rep.accepted}, {"errors", errors}, {"store_size", store.size()}}.dump() << '\n';
    return 0;
}

int cmd_build_index(const Session& s, std::string out) {
    const DocumentStore store = open_store(s.cfg);
    if (out.empty()) out = s.cfg.paths.index.string();
    if (out.empty()) throw ConfigError("no index path: set paths.index or pass --out");
    const auto corpus = tokenize_kind(store, CorpusKind::retrieval);
    if (corpus->size() == 0) throw IndexError("the store holds no retrieval-corpus documents");
    std::shared_ptr<const Embedder> embedder;
    if (s.cfg.embedder_endpoint) {
        embedder = std::make_shared<const RemoteEmbedder>(*s.cfg.embedder_endpoint, s.cfg.tfidf.dim,
                                                          std::make_shared<const ByteTokenizer>());
    } else {
        std::vector<std::span<const TokenId>> docs;
        for (const auto& seq : corpus->sequences()) docs.emplace_back(seq.tokens);
        embedder = std::make_shared<const HashedTfidfEmbedder>(HashedTfidfEmbedder::fit(s.cfg.tfidf, docs));
    }
    log_info("index", -1, "building index", {{"docs", corpus->size()}, {"chunk_len", s.cfg.stage.chunk_len}});
    const VectorIndex index = VectorIndex::build(*corpus, s.cfg.stage.chunk_len, *embedder, s.cfg.stage.workers);
    index.save(out);
    std::cout << json{{"index", out},
                      {"chunks", index.size()},
                      {"dim", index.dim()},
                      {"build_id", index.build_id()},
                      {"embedder", index.embedder_fingerprint()}}
                     .dump()
              << '\n';
    return 0;
}

std::pair<std::size_t, std::size_t> parse_window(const std::string& w, const StageConfig& c) {
    if (w.empty()) return {c.window_left, c.window_right};
    const auto comma = w.find(',');
    try {
        if (comma == std::string::npos) {
            const std::size_t v = std::stoul(w);
            return {v, v};
        }
        return {std::stoul(w.substr(0, comma)), std::stoul(w.substr(comma + 1))};
    } catch (const std::exception&) {
        throw ConfigError("--window expects l,r");
    }
}

int cmd_screen(const Session& s, int stage, std::optional<double> percentile, const std::string& window,
               const std::string& run_dir, const std::string& out) {
    const StageConfig& c = s.cfg.stage;
    const double k = percentile.value_or(c.percentile_k);
    const auto [left, right] = parse_window(window, c);
    const DocumentStore store = open_store(s.cfg);
    const ModelState state = stage_state(s.cfg, stage, run_dir);
    const auto scorer = make_scorer(state, s.cfg.scorer_endpoint);
    const auto roots = tokenize_kind(store, CorpusKind::source);
    std::vector<EntropyProfile> profiles;
    for (const auto& seq : roots->sequences()) {
        if (seq.size() == 0) continue;
        profiles.push_back(entropy_profile(*scorer, seq, c.screening_length));
    }
    const SelectOptions opts{c.min_spacing, c.absolute_tau};
    std::vector<SelectionResult> results;
    if (c.corpus_wide_percentile) {
        results = select_positions_corpus(profiles, k, stage, opts);
    } else {
        for (const auto& p : profiles) results.push_back(select_positions(p, k, stage, opts));
    }
    std::vector<SelectedPosition> all;
    std::size_t all_zero = 0;
    for (const auto& r : results) {
        all.insert(all.end(), r.positions.begin(), r.positions.end());
        if (r.all_zero) ++all_zero;
    }
    std::ostringstream csv;
    write_positions_csv(csv, all);
    emit(out, csv.str());
    log_info("screen", stage, "selected positions",
             {{"docs", profiles.size()},
              {"positions", all.size()},
              {"all_zero_docs", all_zero},
              {"snapshot", state.snapshot.snapshot_id},
              {"window", {left, right}}});
    return 0;
}

int cmd_construct(const Session& s, int stage, std::optional<std::size_t> target_length, std::optional<std::size_t> budget,
                  const std::string& run_dir, const std::string& out, bool text_mode) {
    StageConfig c = s.cfg.stage;
    if (target_length) c.L = *target_length;
    if (budget) c.N = *budget;
    c.validate();
    const DocumentStore store = open_store(s.cfg);
    const RetrievalContext ctx = load_retrieval(s.cfg, store);
    const ModelState state = stage_state(s.cfg, stage, run_dir);
    const auto scorer = make_scorer(state, s.cfg.scorer_endpoint);

    std::size_t n = c.docs_per_stage;
    if (n == 0) n = store.count(CorpusKind::source) / static_cast<std::size_t>(c.T);
    const SampleLedger ledger = ledger_from_run(run_dir, stage);
    const auto docs =
        sample_stage_docs(store, n, derive_seed(c.stage_seed(stage), "sample"), ledger, {c.sample_with_replacement});
    ByteTokenizer tok;
    std::vector<TokenSequence> seqs;
    for (const auto& d : docs) seqs.push_back(tok.tokenize(d));
    const StageArtifacts art = assemble_stage(*scorer, ctx, seqs, stage, c.construct_params(stage));
    std::ostringstream body;
    write_sequences(body, art.sequences, text_mode);
    emit(out, body.str());
    const auto& k = art.counters;
    log_info("construct", stage, "stage constructed",
             {{"sequences", k.sequences_emitted},
              {"tokens", k.tokens_emitted},
              {"positives", k.positives_verified},
              {"negatives", k.negatives_mined},
              {"budget_reached", k.budget_reached},
              {"snapshot", state.snapshot.snapshot_id}});
    return 0;
}

int cmd_run(const Session& s, const std::string& mode, std::string run_id) {
    StageConfig c = s.cfg.stage;
    if (mode == "strict") {
        c.mode = RunMode::strict;
    } else if (mode == "pipelined") {
        c.mode = RunMode::pipelined;
    } else if (!mode.empty()) {
        throw ConfigError("--mode must be strict or pipelined");
    }
    const DocumentStore store = open_store(s.cfg);
    RunInputs in;
    in.store = &store;
    in.retrieval = load_retrieval(s.cfg, store);
    in.initial = base_state(s.cfg);
    in.remote_scorer = s.cfg.scorer_endpoint;
    if (run_id.empty()) run_id = run_id_for(s);
    in.run_id = run_id;
    in.run_dir = s.cfg.paths.run_root / run_id;
    in.manifest_extra = {{"config_text", s.config_text}, {"config_hash", hex64(fnv1a(s.config_text))},
                         {"effective_config", s.cfg.tree}};
    in.on_stage = [](const StageReport& r) {
        log_info("stage", r.stage, "stage published",
                 {{"snapshot_out", r.snapshot_out},
                  {"sequences", r.counters.sequences_emitted},
                  {"tokens", r.counters.tokens_emitted}});
    };
    auto trainer = make_trainer(s.cfg.trainer, s.cfg.trainer_timeout_s);
    const RunResult res = run_stages(c, *trainer, in);
    json stages = json::array();
    for (const auto& r : res.reports) {
        stages.push_back({{"stage", r.stage},
                          {"sequences", r.counters.sequences_emitted},
                          {"tokens", r.counters.tokens_emitted},
                          {"snapshot_out", r.snapshot_out}});
    }
    std::cout << json{{"run_dir", in.run_dir.string()}, {"stages", stages}}.dump() << '\n';
    return 0;
}

int cmd_diagnose(const Session& s, const std::string& what, const std::string& run_dir, std::string out_dir,
                 int filler_stage, const std::vector<std::size_t>& distances) {
    if (!fs::exists(fs::path(run_dir) / "manifest.json")) throw IoError("no manifest.json under " + run_dir);
    if (out_dir.empty()) out_dir = (fs::path(run_dir) / "diagnostics").string();
    const StageConfig& c = s.cfg.stage;
    const std::vector<ModelState> all = load_run_snapshots(run_dir);
    // M_0..M_{T-1}: the model each stage screened with.
    const std::vector<ModelState> per_stage(all.begin(), all.end() - 1);
    const DocumentStore store = open_store(s.cfg);
    DiagnosticsReport report;
    if (what == "drift") {
        const auto roots = tokenize_kind(store, CorpusKind::source);
        report.drift = entropy_drift(per_stage, read_positions(run_dir, 0), *roots, c.screening_length);
    } else if (what == "filler") {
        const auto roots = tokenize_kind(store, CorpusKind::source);
        const RetrievalContext ctx = load_retrieval(s.cfg, store);
        FillerParams fp;
        fp.screening_length = c.screening_length;
        fp.seed = c.seed;
        if (!distances.empty()) fp.distances = distances;
        report.filler = filler_loss(per_stage, read_verified_positives(run_dir, filler_stage), *roots, ctx, fp);
    } else {
        for (int t = 1; t < static_cast<int>(per_stage.size()); ++t) {
            const auto seqs = read_sequences_file(stage_dir(run_dir, t) / "sequences.jsonl");
            report.difficulty.push_back(difficulty(t, seqs, all.front(), all[static_cast<std::size_t>(t) - 1]));
        }
        if (report.difficulty.empty()) throw PreconditionError("difficulty needs a run with at least two stages");
    }
    json files = json::array();
    for (const auto& f : emit_report(out_dir, report)) files.push_back(f.string());
    std::cout << json{{"files", files}}.dump() << '\n';
    return 0;
}

int cmd_gen_corpus(const Session& s, std::size_t roots, std::size_t distractors, std::optional<std::size_t> background,
                   std::optional<std::size_t> base, const std::string& out) {
    PlantedParams p;
    p.n_roots = roots;
    p.n_distractors = distractors;
    if (background) p.n_background = *background;
    if (base) p.n_base = *base;
    p.seed = s.cfg.stage.seed;
    const PlantedCorpus corpus = generate_planted_corpus(p);
    write_planted_corpus(corpus, out);
    std::cout << json{{"out", out},
                      {"roots", corpus.source.size()},
                      {"retrieval", corpus.retrieval.size()},
                      {"base", corpus.base.size()},
                      {"keys", corpus.keys.size()}}
                     .dump()
              << '\n';
    return 0;
}

int cmd_inspect(const Session& s, const std::string& file, bool check, std::optional<std::size_t> max_length,
                bool against_store) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot read " + file);
    CheckOptions opts;
    opts.max_length = max_length;
    std::optional<DocumentStore> store;
    std::map<std::string, std::vector<TokenId>> cache;
    if (against_store) {
        store = open_store(s.cfg);
        opts.lookup = [&](const std::string& id, std::size_t start,
                          std::size_t len) -> std::optional<std::vector<TokenId>> {
            auto it = cache.find(id);
            if (it == cache.end()) {
                const Document* d = store->find(id);
                if (d == nullptr) return std::nullopt;
                it = cache.emplace(id, tokenize(*d).tokens).first;
            }
            const auto& t = it->second;
            if (start > t.size() || len > t.size() - start) return std::nullopt;
            return std::vector<TokenId>(t.begin() + static_cast<std::ptrdiff_t>(start),
                                        t.begin() + static_cast<std::ptrdiff_t>(start + len));
        };
    }
    std::size_t records = 0;
    std::size_t tokens = 0;
    std::size_t targets = 0;
    std::map<int, std::size_t> by_stage;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        TrainingSequence seq;
        try {
            seq = sequence_from_json(json::parse(line));
        } catch (const json::exception& e) {
            throw ParameterError(file + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (check) {
            if (auto bad = check_sequence(seq, opts)) {
                print_error("check", *bad, kExitRuntime,
                            {{"record", records}, {"line", line_no}, {"root_id", seq.root_id}});
                return kExitRuntime;
            }
        }
        ++records;
        tokens += seq.tokens.size();
        targets += seq.targets.size();
        ++by_stage[seq.stage];
    }
    json stages = json::object();
    for (const auto& [t, n] : by_stage) stages[std::to_string(t)] = n;
    std::cout << json{{"file", file},
                      {"records", records},
                      {"tokens", tokens},
                      {"targets", targets},
                      {"stages", stages},
                      {"checked", check}}
                     .dump()
              << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lcsynth: model-aligned long-context training data construction"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--config", g.config, "Config file (TOML subset or JSON)");
    app.add_option("--seed", g.seed, "Override the run seed");
    app.add_option("--log", g.log, "Log format")->check(CLI::IsMember({"json", "text"}));
    app.add_option("--set", g.sets, "Override one config key (key=value, repeatable)");
    app.add_flag("-v,--verbose", g.verbose, "Log info-level events");

    std::string input, corpus;
    auto* ingest = app.add_subcommand("ingest", "Append JSONL documents to the store");
    ingest->add_option("--input", input, "JSONL file")->required();
    ingest->add_option("--corpus", corpus, "source or retrieval")->required();

    std::string index_out;
    auto* build = app.add_subcommand("build-index", "Embed and index the retrieval corpus");
    build->add_option("--out", index_out, "Index file (default paths.index)");

    int stage = 0;
    std::optional<double> percentile;
    std::string window, run_dir, out;
    auto* screen = app.add_subcommand("screen", "Select high-entropy positions of the source corpus");
    screen->add_option("--stage", stage, "Stage t (snapshot M_t)");
    screen->add_option("--percentile", percentile, "Top-k percent");
    screen->add_option("--window", window, "Fragment window l,r");
    screen->add_option("--run", run_dir, "Run directory holding M_t for t > 0");
    screen->add_option("--out", out, "Positions CSV (default stdout)");

    std::optional<std::size_t> target_length, budget;
    bool text_mode = false;
    auto* construct = app.add_subcommand("construct", "Build one stage of training sequences");
    construct->add_option("--stage", stage, "Stage t");
    construct->add_option("--target-length", target_length, "Sequence length L");
    construct->add_option("--budget", budget, "Token budget N");
    construct->add_option("--run", run_dir, "Run directory holding M_t and earlier stage samples");
    construct->add_option("--out", out, "Sequences JSONL (default stdout)");
    construct->add_flag("--text", text_mode, "Emit detokenized text");

    std::string mode, run_id;
    auto* run_cmd = app.add_subcommand("run", "Run all stages");
    run_cmd->add_option("--mode", mode, "strict or pipelined")->check(CLI::IsMember({"strict", "pipelined"}));
    run_cmd->add_option("--run-id", run_id, "Run directory name under paths.run_root");

    std::string what, diag_out;
    int filler_stage = 0;
    std::vector<std::size_t> distances;
    auto* diagnose = app.add_subcommand("diagnose", "Measurements over a finished run");
    diagnose->add_option("what", what, "drift, filler or difficulty")
        ->required()
        ->check(CLI::IsMember({"drift", "filler", "difficulty"}));
    diagnose->add_option("--run", run_dir, "Run directory")->required();
    diagnose->add_option("--out", diag_out, "Report directory (default <run>/diagnostics)");
    diagnose->add_option("--positives-stage", filler_stage, "Stage whose verified positives feed filler");
    diagnose->add_option("--distances", distances, "Filler distances");

    std::size_t roots = 400, distractors = 800;
    std::optional<std::size_t> background, base;
    auto* gen = app.add_subcommand("gen-corpus", "Write a planted-dependency corpus");
    gen->add_option("--roots", roots, "Root documents");
    gen->add_option("--distractors", distractors, "Distractor documents");
    gen->add_option("--background", background, "Background retrieval documents");
    gen->add_option("--base", base, "Base-model text documents");
    gen->add_option("--out", out, "Output directory")->required();

    std::string inspect_file;
    bool check = false, against_store = false;
    std::optional<std::size_t> max_length;
    auto* inspect = app.add_subcommand("inspect", "Summarize or validate a sequences file");
    inspect->add_option("file", inspect_file, "sequences.jsonl")->required();
    inspect->add_flag("--check", check, "Validate every record");
    inspect->add_option("--max-length", max_length, "Length bound L for --check");
    inspect->add_flag("--against-store", against_store, "Compare segments with the configured store");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << app.help() << '\n';
        print_error("usage", e.what(), kExitUsage);
        return kExitUsage;
    }

    logger().configure(g.log == "json" ? LogFormat::json : LogFormat::text,
                       g.verbose ? LogLevel::info : LogLevel::warn, &std::cerr);
    try {
        const Session s = load_session(g);
        if (*ingest) return cmd_ingest(s, input, corpus);
        if (*build) return cmd_build_index(s, index_out);
        if (*screen) return cmd_screen(s, stage, percentile, window, run_dir, out);
        if (*construct) return cmd_construct(s, stage, target_length, budget, run_dir, out, text_mode);
        if (*run_cmd) return cmd_run(s, mode, run_id);
        if (*diagnose) return cmd_diagnose(s, what, run_dir, diag_out, filler_stage, distances);
        if (*gen) return cmd_gen_corpus(s, roots, distractors, background, base, out);
        if (*inspect) return cmd_inspect(s, inspect_file, check, max_length, against_store);
    } catch (const TransportError& e) {
        print_error(e.kind(), e.what(), kExitRuntime, {{"attempts", e.attempts()}, {"last_status", e.last_status()}});
        return kExitRuntime;
    } catch (const Error& e) {
        print_error(e.kind(), e.what(), kExitRuntime);
        return kExitRuntime;
    } catch (const std::exception& e) {
        print_error("internal", e.what(), kExitRuntime);
        return kExitRuntime;
    }
    return kExitUsage;
}
