#pragma once

// The T-stage loop: sample, construct with the current snapshot, train,
// publish, repeat. Strict and pipelined execution.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcsynth/assembly.hpp"
#include "lcsynth/corpus.hpp"
#include "lcsynth/remote.hpp"
#include "lcsynth/retrieval.hpp"
#include "lcsynth/scorer.hpp"

namespace lcsynth {

enum class RunMode { strict, pipelined };
enum class PipelineSubmode { strict_on_policy, latest_snapshot };
/// on_policy screens and verifies stage t with M_t; static_base always uses M_0.
enum class ScreeningPolicy { on_policy, static_base };

struct StageConfig {
    int T = 4;
    std::size_t N = 200000;
    std::size_t L = 4096;
    std::size_t screening_length = 2048;
    double percentile_k = 5.0;
    double tau_pos = 0.3;
    std::size_t K = 8;
    std::size_t chunk_len = 512;
    std::uint64_t seed = 1;
    /// Per-stage seeds; derived from `seed` when empty.
    std::vector<std::uint64_t> stage_seeds;
    RunMode mode = RunMode::strict;
    PipelineSubmode submode = PipelineSubmode::strict_on_policy;
    ScreeningPolicy screening_policy = ScreeningPolicy::on_policy;
    /// Documents sampled per stage; 0 = floor(source documents / T).
    std::size_t docs_per_stage = 0;
    bool sample_with_replacement = false;
    std::size_t min_spacing = 32;
    std::size_t window_left = 64;
    std::size_t window_right = 64;
    bool corpus_wide_percentile = false;
    std::optional<double> absolute_tau;
    std::optional<std::size_t> max_positives_per_position;
    std::size_t workers = 0;
    std::size_t batch_docs = 0;

    /// Throws ConfigError when an invariant (T >= 1, N >= L, screening_length <= L, ...) fails.
    void validate() const;
    std::uint64_t stage_seed(int stage) const;
    ConstructParams construct_params(int stage) const;
    nlohmann::json to_json() const;
};

std::string_view mode_name(RunMode mode);
std::string_view submode_name(PipelineSubmode submode);
std::string_view policy_name(ScreeningPolicy policy);

struct StageTimes {
    double sampling = 0.0;
    double screening = 0.0;
    double retrieval = 0.0;
    double verification = 0.0;
    double assembly = 0.0;
    double training = 0.0;
    double wall = 0.0;  // stage start to snapshot publication
};

struct StageReport {
    int stage = 0;
    std::string snapshot_in;         // M_t
    std::string scoring_snapshot;    // snapshot used for entropies and verification
    std::string snapshot_out;        // M_{t+1}
    StageCounters counters;
    StageTimes times;
    std::vector<std::string> doc_ids;  // D_t in sample order
    std::size_t issues = 0;
    bool exhausted = false;  // documents ran out before the budget was met

    nlohmann::json to_json() const;
    static StageReport from_json(const nlohmann::json& j);
};

// ---------------------------------------------------------------------------
// Snapshots and trainers

/// Published snapshots by id. Model-dependent work asks for a snapshot here;
/// asking for one that is not published yet is a SnapshotVisibilityError.
class SnapshotRegistry {
public:
    void publish(const ModelState& state);
    bool published(const std::string& snapshot_id) const;
    ModelState get(const std::string& snapshot_id) const;
    std::vector<std::string> ids() const;

private:
    mutable std::mutex mu_;
    std::map<std::string, ModelState> states_;
    std::vector<std::string> order_;
};

/// Scorer over a published state: built-in when the state carries a model,
/// otherwise remote (endpoint required).
std::shared_ptr<const Scorer> make_scorer(const ModelState& state, const std::optional<RemoteEndpoint>& remote,
                                          std::size_t vocab_size = 256);

struct TrainContext {
    int stage = 0;
    const std::vector<TrainingSequence>* sequences = nullptr;
    std::filesystem::path sequences_path;
    std::filesystem::path snapshot_in;
    std::filesystem::path snapshot_out;
};

class Trainer {
public:
    virtual ~Trainer() = default;
    virtual std::string name() const = 0;
    /// Returns M_{t+1}. The orchestrator assigns stage index t+1 and persists it.
    virtual ModelState train(const ModelState& current, const TrainContext& ctx) = 0;
};

/// Count update over the stage's sequence tokens.
class BuiltinTrainer final : public Trainer {
public:
    std::string name() const override { return "builtin"; }
    ModelState train(const ModelState& current, const TrainContext& ctx) override;
};

/// Returns its input counts unchanged (null-result control).
class IdentityTrainer final : public Trainer {
public:
    std::string name() const override { return "identity"; }
    ModelState train(const ModelState& current, const TrainContext& ctx) override;
};

/// Runs a shell command with {stage}, {sequences}, {snapshot_in} and
/// {snapshot_out} substituted. The command must exit 0 within the timeout and
/// leave a snapshot file (or, for remote backends, a file holding the new
/// snapshot id) at {snapshot_out}.
class CommandTrainer final : public Trainer {
public:
    CommandTrainer(std::string command, double timeout_s);
    std::string name() const override { return "command"; }
    ModelState train(const ModelState& current, const TrainContext& ctx) override;

private:
    std::string command_;
    double timeout_s_;
};

using TrainCallback = std::function<ModelState(const ModelState&, const TrainContext&)>;

/// Wraps a callback as a trainer.
std::shared_ptr<Trainer> register_trainer(std::string name, TrainCallback callback);

/// "builtin", "identity" or "command:<shell command>".
std::shared_ptr<Trainer> make_trainer(const std::string& spec, double timeout_s = 3600.0);

// ---------------------------------------------------------------------------
// Run

struct RunInputs {
    const DocumentStore* store = nullptr;  // source documents are drawn from here
    RetrievalContext retrieval;
    ModelState initial;  // M_0
    std::optional<RemoteEndpoint> remote_scorer;
    std::filesystem::path run_dir;  // created if missing; empty = nothing persisted
    std::string run_id;
    /// Extra manifest content (config text hash, tool version).
    nlohmann::json manifest_extra = nlohmann::json::object();
    /// Observer invoked after each stage is persisted.
    std::function<void(const StageReport&)> on_stage;
};

struct RunResult {
    ModelState final_state;
    std::vector<ModelState> snapshots;  // M_0..M_T
    std::vector<StageReport> reports;
};

/// Strict sequential loop.
RunResult run(const StageConfig& config, Trainer& trainer, const RunInputs& inputs);

/// Overlaps the next stage's sampling and tokenization with training; in the
/// latest_snapshot sub-mode the next stage's construction also overlaps,
/// scoring with the newest published snapshot.
RunResult run_pipelined(const StageConfig& config, Trainer& trainer, const RunInputs& inputs);

/// Dispatches on config.mode.
RunResult run_stages(const StageConfig& config, Trainer& trainer, const RunInputs& inputs);

/// Paths inside a run directory.
std::filesystem::path stage_dir(const std::filesystem::path& run_dir, int stage);
std::filesystem::path base_snapshot_path(const std::filesystem::path& run_dir);
std::filesystem::path stage_snapshot_path(const std::filesystem::path& run_dir, int stage);
/// Snapshot M_t of a persisted run (M_0 = base snapshot).
ModelState load_run_snapshot(const std::filesystem::path& run_dir, int t);

}  // namespace lcsynth
