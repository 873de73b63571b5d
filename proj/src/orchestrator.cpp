#include "lcsynth/orchestrator.hpp"

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "lcsynth/errors.hpp"
#include "lcsynth/log.hpp"
#include "lcsynth/sequence_io.hpp"
#include "lcsynth/util.hpp"
#include "lcsynth/version.hpp"

namespace lcsynth {

using nlohmann::json;

std::string_view mode_name(RunMode mode) { return mode == RunMode::pipelined ? "pipelined" : "strict"; }

std::string_view submode_name(PipelineSubmode submode) {
    return submode == PipelineSubmode::latest_snapshot ? "latest_snapshot" : "strict_on_policy";
}

std::string_view policy_name(ScreeningPolicy policy) {
    return policy == ScreeningPolicy::static_base ? "static" : "on_policy";
}

void StageConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (T < 1) fail("T must be >= 1");
    if (L == 0) fail("L must be > 0");
    if (N < L) fail("N must be >= L");
    if (screening_length > L) fail("screening_length must be <= L");
    if (screening_length != 0 && screening_length < 3) fail("screening_length must be 0 or >= 3");
    if (!(percentile_k > 0.0 && percentile_k <= 100.0)) fail("percentile_k must be in (0, 100]");
    if (!std::isfinite(tau_pos)) fail("tau_pos must be finite");
    if (K == 0) fail("K must be >= 1");
    if (chunk_len == 0) fail("chunk_len must be >= 1");
    if (!stage_seeds.empty() && stage_seeds.size() != static_cast<std::size_t>(T)) {
        fail("stage_seeds must list exactly T seeds");
    }
    if (max_positives_per_position && *max_positives_per_position == 0) {
        fail("max_positives_per_position must be >= 1 when set");
    }
}

std::uint64_t StageConfig::stage_seed(int stage) const {
    if (!stage_seeds.empty()) return stage_seeds.at(static_cast<std::size_t>(stage));
    return derive_seed(seed, "stage", static_cast<std::uint64_t>(stage));
}

ConstructParams StageConfig::construct_params(int stage) const {
    ConstructParams p;
    p.percentile_k = percentile_k;
    p.select.min_spacing = min_spacing;
    p.select.absolute_tau = absolute_tau;
    p.corpus_wide_percentile = corpus_wide_percentile;
    p.window_left = window_left;
    p.window_right = window_right;
    p.K = K;
    p.verify.tau_pos = tau_pos;
    p.verify.screening_length = screening_length;
    p.verify.max_positives_per_position = max_positives_per_position;
    p.L = L;
    p.chunk_len = chunk_len;
    p.budget_tokens = N;
    p.seed = stage_seed(stage);
    p.workers = workers;
    p.batch_docs = batch_docs;
    return p;
}

json StageConfig::to_json() const {
    json j;
    j["T"] = T;
    j["N"] = N;
    j["L"] = L;
    j["screening_length"] = screening_length;
    j["percentile_k"] = percentile_k;
    j["tau_pos"] = tau_pos;
    j["K"] = K;
    j["chunk_len"] = chunk_len;
    j["seed"] = seed;
    j["stage_seeds"] = stage_seeds;
    j["mode"] = mode_name(mode);
    j["pipelined_submode"] = submode_name(submode);
    j["screening_policy"] = policy_name(screening_policy);
    j["docs_per_stage"] = docs_per_stage;
    j["sample_with_replacement"] = sample_with_replacement;
    j["min_spacing"] = min_spacing;
    j["window_left"] = window_left;
    j["window_right"] = window_right;
    j["corpus_wide_percentile"] = corpus_wide_percentile;
    j["absolute_tau"] = absolute_tau ? json(*absolute_tau) : json(nullptr);
    j["max_positives_per_position"] = max_positives_per_position ? json(*max_positives_per_position) : json(nullptr);
    j["workers"] = workers;
    j["batch_docs"] = batch_docs;
    return j;
}

json StageReport::to_json() const {
    json c;
    c["docs_sampled"] = counters.docs_sampled;
    c["docs_processed"] = counters.docs_processed;
    c["positions_selected"] = counters.positions_selected;
    c["candidates_retrieved"] = counters.candidates_retrieved;
    c["positives_verified"] = counters.positives_verified;
    c["negatives_mined"] = counters.negatives_mined;
    c["sequences_emitted"] = counters.sequences_emitted;
    c["tokens_emitted"] = counters.tokens_emitted;
    c["skipped_docs"] = counters.skipped_docs;
    c["skipped_no_positive"] = counters.skipped_no_positive;
    c["skipped_errors"] = counters.skipped_errors;
    c["root_alone"] = counters.root_alone;
    c["shortfall_sequences"] = counters.shortfall_sequences;
    c["budget_reached"] = counters.budget_reached;
    json t;
    t["sampling"] = times.sampling;
    t["screening"] = times.screening;
    t["retrieval"] = times.retrieval;
    t["verification"] = times.verification;
    t["assembly"] = times.assembly;
    t["training"] = times.training;
    t["wall"] = times.wall;
    return {{"stage", stage},
            {"snapshot_in", snapshot_in},
            {"scoring_snapshot", scoring_snapshot},
            {"snapshot_out", snapshot_out},
            {"counters", c},
            {"wall_times", t},
            {"doc_ids", doc_ids},
            {"issues", issues},
            {"exhausted", exhausted}};
}

StageReport StageReport::from_json(const json& j) {
    StageReport r;
    r.stage = j.at("stage").get<int>();
    r.snapshot_in = j.at("snapshot_in").get<std::string>();
    r.scoring_snapshot = j.at("scoring_snapshot").get<std::string>();
    r.snapshot_out = j.at("snapshot_out").get<std::string>();
    const auto& c = j.at("counters");
    r.counters.docs_sampled = c.at("docs_sampled").get<std::size_t>();
    r.counters.docs_processed = c.at("docs_processed").get<std::size_t>();
    r.counters.positions_selected = c.at("positions_selected").get<std::size_t>();
    r.counters.candidates_retrieved = c.at("candidates_retrieved").get<std::size_t>();
    r.counters.positives_verified = c.at("positives_verified").get<std::size_t>();
    r.counters.negatives_mined = c.at("negatives_mined").get<std::size_t>();
    r.counters.sequences_emitted = c.at("sequences_emitted").get<std::size_t>();
    r.counters.tokens_emitted = c.at("tokens_emitted").get<std::size_t>();
    r.counters.skipped_docs = c.at("skipped_docs").get<std::size_t>();
    r.counters.skipped_no_positive = c.value("skipped_no_positive", std::size_t{0});
    r.counters.skipped_errors = c.value("skipped_errors", std::size_t{0});
    r.counters.root_alone = c.value("root_alone", std::size_t{0});
    r.counters.shortfall_sequences = c.value("shortfall_sequences", std::size_t{0});
    r.counters.budget_reached = c.value("budget_reached", false);
    const auto& t = j.at("wall_times");
    r.times.sampling = t.value("sampling", 0.0);
    r.times.screening = t.value("screening", 0.0);
    r.times.retrieval = t.value("retrieval", 0.0);
    r.times.verification = t.value("verification", 0.0);
    r.times.assembly = t.value("assembly", 0.0);
    r.times.training = t.value("training", 0.0);
    r.times.wall = t.value("wall", 0.0);
    r.doc_ids = j.at("doc_ids").get<std::vector<std::string>>();
    r.issues = j.value("issues", std::size_t{0});
    r.exhausted = j.value("exhausted", false);
    return r;
}

// ---------------------------------------------------------------------------
// SnapshotRegistry

void SnapshotRegistry::publish(const ModelState& state) {
    std::lock_guard<std::mutex> lock(mu_);
    if (states_.count(state.snapshot.snapshot_id)) return;
    states_.emplace(state.snapshot.snapshot_id, state);
    order_.push_back(state.snapshot.snapshot_id);
}

bool SnapshotRegistry::published(const std::string& snapshot_id) const {
    std::lock_guard<std::mutex> lock(mu_);
    return states_.count(snapshot_id) != 0;
}

ModelState SnapshotRegistry::get(const std::string& snapshot_id) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = states_.find(snapshot_id);
    if (it == states_.end()) throw SnapshotVisibilityError("snapshot '" + snapshot_id + "' is not published");
    return it->second;
}

std::vector<std::string> SnapshotRegistry::ids() const {
    std::lock_guard<std::mutex> lock(mu_);
    return order_;
}

std::shared_ptr<const Scorer> make_scorer(const ModelState& state, const std::optional<RemoteEndpoint>& remote,
                                          std::size_t vocab_size) {
    if (state.model) return std::make_shared<BuiltinScorer>(state.model, state.snapshot);
    if (!remote) throw PreconditionError("snapshot '" + state.snapshot.snapshot_id + "' needs a remote scorer endpoint");
    return std::make_shared<RemoteScorer>(*remote, state.snapshot, vocab_size);
}

// ---------------------------------------------------------------------------
// Trainers

ModelState BuiltinTrainer::train(const ModelState& current, const TrainContext& ctx) {
    if (!ctx.sequences || ctx.sequences->empty()) throw TrainerError("no training sequences for stage");
    std::vector<std::vector<TokenId>> data;
    data.reserve(ctx.sequences->size());
    for (const auto& s : *ctx.sequences) data.push_back(s.tokens);
    try {
        return train_update(current, data);
    } catch (const Error& e) {
        throw TrainerError(std::string("builtin training failed: ") + e.what());
    }
}

ModelState IdentityTrainer::train(const ModelState& current, const TrainContext&) {
    ModelState next = current;
    next.snapshot.stage_index = current.snapshot.stage_index + 1;
    if (!current.model) next.snapshot.snapshot_id = current.snapshot.snapshot_id + "+identity";
    return next;
}

namespace {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    out += "'";
    return out;
}

std::string substitute(std::string cmd, const std::string& key, const std::string& value) {
    for (std::size_t pos = cmd.find(key); pos != std::string::npos; pos = cmd.find(key, pos + value.size())) {
        cmd.replace(pos, key.size(), value);
    }
    return cmd;
}

}  // namespace

CommandTrainer::CommandTrainer(std::string command, double timeout_s)
    : command_(std::move(command)), timeout_s_(timeout_s) {
    if (command_.empty()) throw ConfigError("trainer command is empty");
}

ModelState CommandTrainer::train(const ModelState& current, const TrainContext& ctx) {
    std::string cmd = command_;
    cmd = substitute(cmd, "{stage}", std::to_string(ctx.stage));
    cmd = substitute(cmd, "{sequences}", shell_quote(ctx.sequences_path.string()));
    cmd = substitute(cmd, "{snapshot_in}", shell_quote(ctx.snapshot_in.string()));
    cmd = substitute(cmd, "{snapshot_out}", shell_quote(ctx.snapshot_out.string()));
    std::error_code ec;
    std::filesystem::remove(ctx.snapshot_out, ec);

    const pid_t pid = fork();
    if (pid < 0) throw TrainerError("cannot fork trainer process");
    if (pid == 0) {
        execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s_);
    int status = 0;
    for (;;) {
        const pid_t r = waitpid(pid, &status, WNOHANG);
        if (r == pid) break;
        if (r < 0) throw TrainerError("lost trainer process");
        if (std::chrono::steady_clock::now() > deadline) {
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            throw TrainerError("trainer command timed out after " + std::to_string(timeout_s_) + " s");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        throw TrainerError("trainer command failed with status " +
                           std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));
    }
    if (!std::filesystem::exists(ctx.snapshot_out)) throw TrainerError("trainer did not write " + ctx.snapshot_out.string());

    std::ifstream probe(ctx.snapshot_out, std::ios::binary);
    char magic[8] = {};
    probe.read(magic, 8);
    if (probe && std::string(magic, 8) == "LCSSNAP1") {
        probe.close();
        try {
            return load_snapshot(ctx.snapshot_out);
        } catch (const Error& e) {
            throw TrainerError(std::string("trainer wrote an unreadable snapshot: ") + e.what());
        }
    }
    if (current.model) throw TrainerError("trainer output is not a snapshot file");
    std::ifstream in(ctx.snapshot_out);
    std::string id;
    std::getline(in, id);
    if (id.empty()) throw TrainerError("trainer output names no snapshot id");
    ModelState next;
    next.snapshot.snapshot_id = id;
    next.snapshot.backend = ScorerBackend::remote;
    return next;
}

namespace {

class CallbackTrainer final : public Trainer {
public:
    CallbackTrainer(std::string name, TrainCallback cb) : name_(std::move(name)), cb_(std::move(cb)) {}
    std::string name() const override { return name_; }
    ModelState train(const ModelState& current, const TrainContext& ctx) override { return cb_(current, ctx); }

private:
    std::string name_;
    TrainCallback cb_;
};

}  // namespace

std::shared_ptr<Trainer> register_trainer(std::string name, TrainCallback callback) {
    if (!callback) throw ParameterError("trainer callback is empty");
    return std::make_shared<CallbackTrainer>(std::move(name), std::move(callback));
}

std::shared_ptr<Trainer> make_trainer(const std::string& spec, double timeout_s) {
    if (spec == "builtin") return std::make_shared<BuiltinTrainer>();
    if (spec == "identity") return std::make_shared<IdentityTrainer>();
    if (spec.rfind("command:", 0) == 0) return std::make_shared<CommandTrainer>(spec.substr(8), timeout_s);
    throw ConfigError("unknown trainer '" + spec + "' (builtin, identity or command:<cmd>)");
}

// ---------------------------------------------------------------------------
// Run

std::filesystem::path stage_dir(const std::filesystem::path& run_dir, int stage) {
    return run_dir / ("stage" + std::to_string(stage));
}

std::filesystem::path base_snapshot_path(const std::filesystem::path& run_dir) {
    return run_dir / "base_snapshot.bin";
}

std::filesystem::path stage_snapshot_path(const std::filesystem::path& run_dir, int stage) {
    return stage_dir(run_dir, stage) / "snapshot.bin";
}

ModelState load_run_snapshot(const std::filesystem::path& run_dir, int t) {
    const auto path = t == 0 ? base_snapshot_path(run_dir) : stage_snapshot_path(run_dir, t - 1);
    if (!std::filesystem::exists(path)) {
        throw IoError("missing snapshot M" + std::to_string(t) + " (" + path.string() + ")");
    }
    return load_snapshot(path);
}

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void write_text_atomic(const std::filesystem::path& file, const std::string& text) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    const auto tmp = std::filesystem::path(file.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + file.string());
        out << text;
        if (!out) throw IoError("failed writing " + file.string());
    }
    std::filesystem::rename(tmp, file);
}

struct Prepared {
    int stage = 0;
    std::vector<TokenSequence> seqs;
    std::vector<std::string> ids;
    double sampling_time = 0.0;
};

struct Built {
    StageArtifacts art;
    std::string scoring_snapshot;
    Clock::time_point started;
};

class Runner {
public:
    Runner(const StageConfig& config, Trainer& trainer, const RunInputs& inputs)
        : cfg_(config), trainer_(trainer), in_(inputs) {
        cfg_.validate();
        if (!in_.store) throw PreconditionError("run needs a document store");
        if (!in_.retrieval.index) throw PreconditionError("run needs a built retrieval index");
        if (in_.initial.snapshot.snapshot_id.empty()) throw PreconditionError("run needs an M_0 snapshot");
        persist_ = !in_.run_dir.empty();
        if (persist_) std::filesystem::create_directories(in_.run_dir);
        manifest_ = {{"run_id", in_.run_id.empty() ? in_.run_dir.filename().string() : in_.run_id},
                     {"tool_version", kVersion},
                     {"config", cfg_.to_json()},
                     {"created", utc_timestamp()},
                     {"status", "running"},
                     {"stages", json::array()}};
        for (auto& [k, v] : in_.manifest_extra.items()) manifest_[k] = v;
        manifest_["config_hash"] = manifest_.contains("config_hash") ? manifest_["config_hash"]
                                                                     : json(hex64(fnv1a(cfg_.to_json().dump())));
        ModelState m0 = in_.initial;
        m0.snapshot.stage_index = 0;
        registry_.publish(m0);
        result_.snapshots.push_back(m0);
        if (persist_) {
            save_snapshot(m0, base_snapshot_path(in_.run_dir));
            manifest_["base_snapshot"] = base_snapshot_path(in_.run_dir).filename().string();
            manifest_["base_snapshot_id"] = m0.snapshot.snapshot_id;
            write_manifest();
        }
    }

    RunResult strict() {
        guarded([&] {
            ModelState state = result_.snapshots.front();
            for (int t = 0; t < cfg_.T; ++t) {
                const auto t0 = Clock::now();
                Prepared prep = prepare(t);
                Built built = construct(prep, scoring_id(state), t0);
                persist_outputs(t, built);
                state = train_and_publish(t, state, built, prep);
            }
        });
        return result_;
    }

    RunResult pipelined() {
        guarded([&] {
            ModelState state = result_.snapshots.front();
            const auto t0 = Clock::now();
            Prepared prep = prepare(0);
            Built built = construct(prep, scoring_id(state), t0);
            for (int t = 0; t < cfg_.T; ++t) {
                persist_outputs(t, built);
                // Training of stage t runs on its own thread.
                auto training = std::async(std::launch::async, [&, t] { return train_only(t, state, built); });
                std::optional<Prepared> next_prep;
                std::optional<Built> next_built;
                std::exception_ptr overlap_error;
                const auto next_start = Clock::now();
                if (t + 1 < cfg_.T) {
                    try {
                        next_prep = prepare(t + 1);
                        if (cfg_.submode == PipelineSubmode::latest_snapshot) {
                            next_built = construct(*next_prep, scoring_id(state), next_start);
                        }
                    } catch (...) {
                        overlap_error = std::current_exception();
                    }
                }
                auto [next_state, train_time] = training.get();
                if (overlap_error) std::rethrow_exception(overlap_error);
                state = publish(t, std::move(next_state), train_time, built, prep);
                if (t + 1 < cfg_.T) {
                    if (!next_built) next_built = construct(*next_prep, scoring_id(state), next_start);
                    prep = std::move(*next_prep);
                    built = std::move(*next_built);
                }
            }
        });
        return result_;
    }

private:
    template <typename Fn>
    void guarded(Fn&& body) {
        try {
            body();
            manifest_["status"] = "complete";
            manifest_["updated"] = utc_timestamp();
            if (persist_) write_manifest();
            result_.final_state = result_.snapshots.back();
        } catch (const std::exception& e) {
            manifest_["status"] = "failed";
            manifest_["error"] = e.what();
            manifest_["updated"] = utc_timestamp();
            if (persist_) write_manifest();
            throw;
        }
    }

    std::string scoring_id(const ModelState& current) const {
        if (cfg_.screening_policy == ScreeningPolicy::static_base) return result_.snapshots.front().snapshot.snapshot_id;
        return current.snapshot.snapshot_id;
    }

    Prepared prepare(int t) {
        const auto t0 = Clock::now();
        Prepared p;
        p.stage = t;
        std::size_t n = cfg_.docs_per_stage;
        if (n == 0) n = in_.store->count(CorpusKind::source) / static_cast<std::size_t>(cfg_.T);
        SampleOptions opts{cfg_.sample_with_replacement};
        std::vector<Document> docs;
        {
            std::lock_guard<std::mutex> lock(ledger_mu_);
            docs = sample_stage_docs(*in_.store, n, derive_seed(cfg_.stage_seed(t), "sample"), ledger_, opts);
            for (const auto& d : docs) p.ids.push_back(d.id);
            ledger_.record(p.ids);
        }
        ByteTokenizer tok;
        p.seqs.reserve(docs.size());
        for (const auto& d : docs) p.seqs.push_back(tok.tokenize(d));
        p.sampling_time = since(t0);
        log_info("sample", t, "sampled stage documents", {{"docs", p.ids.size()}});
        return p;
    }

    Built construct(const Prepared& prep, const std::string& scoring, Clock::time_point started) {
        // Model-dependent work only ever runs on a published snapshot.
        const ModelState state = registry_.get(scoring);
        auto scorer = make_scorer(state, in_.remote_scorer);
        Built b;
        b.started = started;
        b.scoring_snapshot = scoring;
        b.art = assemble_stage(*scorer, in_.retrieval, prep.seqs, prep.stage, cfg_.construct_params(prep.stage));
        log_info("construct", prep.stage, "stage constructed",
                 {{"snapshot", scoring},
                  {"sequences", b.art.counters.sequences_emitted},
                  {"tokens", b.art.counters.tokens_emitted},
                  {"skipped", b.art.counters.skipped_docs}});
        return b;
    }

    void persist_outputs(int t, const Built& b) {
        if (!persist_) return;
        const auto dir = stage_dir(in_.run_dir, t);
        std::filesystem::create_directories(dir);
        write_sequences_file(dir / "sequences.jsonl", b.art.sequences);
        std::ostringstream pos;
        write_positions_csv(pos, b.art.positions);
        write_text_atomic(dir / "positions.csv", pos.str());
        std::ostringstream ver;
        write_verification_csv(ver, b.art.verification);
        write_text_atomic(dir / "verification.csv", ver.str());
    }

    std::pair<ModelState, double> train_only(int t, const ModelState& state, const Built& b) {
        const auto t0 = Clock::now();
        TrainContext ctx;
        ctx.stage = t;
        ctx.sequences = &b.art.sequences;
        if (persist_) {
            ctx.sequences_path = stage_dir(in_.run_dir, t) / "sequences.jsonl";
            ctx.snapshot_in = t == 0 ? base_snapshot_path(in_.run_dir) : stage_snapshot_path(in_.run_dir, t - 1);
            ctx.snapshot_out = stage_snapshot_path(in_.run_dir, t);
        }
        ModelState next = trainer_.train(state, ctx);
        return {std::move(next), since(t0)};
    }

    ModelState publish(int t, ModelState next, double train_time, const Built& b, const Prepared& prep) {
        next.snapshot.stage_index = t + 1;
        if (next.model) next.snapshot.snapshot_id = builtin_snapshot_id(t + 1, *next.model);
        if (persist_) save_snapshot(next, stage_snapshot_path(in_.run_dir, t));
        registry_.publish(next);
        result_.snapshots.push_back(next);

        StageReport r;
        r.stage = t;
        r.snapshot_in = result_.snapshots[static_cast<std::size_t>(t)].snapshot.snapshot_id;
        r.scoring_snapshot = b.scoring_snapshot;
        r.snapshot_out = next.snapshot.snapshot_id;
        r.counters = b.art.counters;
        r.times.sampling = prep.sampling_time;
        r.times.screening = b.art.times.screening;
        r.times.retrieval = b.art.times.retrieval;
        r.times.verification = b.art.times.verification;
        r.times.assembly = b.art.times.assembly;
        r.times.training = train_time;
        r.times.wall = since(b.started);
        r.doc_ids = prep.ids;
        r.issues = b.art.issues.size();
        r.exhausted = !b.art.counters.budget_reached;
        if (r.exhausted) {
            log_warn("construct", t, "stage documents exhausted before the token budget",
                     {{"tokens", r.counters.tokens_emitted}, {"budget", cfg_.N}});
        }
        if (persist_) {
            const auto dir = stage_dir(in_.run_dir, t);
            write_text_atomic(dir / "report.json", r.to_json().dump(2) + "\n");
            manifest_["stages"].push_back({{"stage", t},
                                           {"dir", dir.filename().string()},
                                           {"sequences", "sequences.jsonl"},
                                           {"report", "report.json"},
                                           {"snapshot", "snapshot.bin"},
                                           {"positions", "positions.csv"},
                                           {"verification", "verification.csv"},
                                           {"snapshot_id", r.snapshot_out},
                                           {"scoring_snapshot", r.scoring_snapshot},
                                           {"completed", utc_timestamp()}});
            manifest_["updated"] = utc_timestamp();
            write_manifest();
        }
        log_info("train", t, "published snapshot", {{"snapshot", r.snapshot_out}, {"train_s", train_time}});
        result_.reports.push_back(r);
        if (in_.on_stage) in_.on_stage(r);
        return next;
    }

    ModelState train_and_publish(int t, const ModelState& state, const Built& b, const Prepared& prep) {
        auto [next, train_time] = train_only(t, state, b);
        return publish(t, std::move(next), train_time, b, prep);
    }

    void write_manifest() { write_text_atomic(in_.run_dir / "manifest.json", manifest_.dump(2) + "\n"); }

    StageConfig cfg_;
    Trainer& trainer_;
    const RunInputs& in_;
    bool persist_ = false;
    SnapshotRegistry registry_;
    std::mutex ledger_mu_;
    SampleLedger ledger_;
    json manifest_;
    RunResult result_;
};

}  // namespace

RunResult run(const StageConfig& config, Trainer& trainer, const RunInputs& inputs) {
    Runner r(config, trainer, inputs);
    return r.strict();
}

RunResult run_pipelined(const StageConfig& config, Trainer& trainer, const RunInputs& inputs) {
    Runner r(config, trainer, inputs);
    return r.pipelined();
}

RunResult run_stages(const StageConfig& config, Trainer& trainer, const RunInputs& inputs) {
    return config.mode == RunMode::pipelined ? run_pipelined(config, trainer, inputs) : run(config, trainer, inputs);
}

}  // namespace lcsynth
