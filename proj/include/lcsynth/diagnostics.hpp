#pragma once

// Measurements over a finished run: entropy drift of stage-0 positions,
// loss at verified positions behind filler text, per-stage data difficulty,
// plus the planted-dependency corpus generator.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcsynth/assembly.hpp"
#include "lcsynth/corpus.hpp"
#include "lcsynth/retrieval.hpp"
#include "lcsynth/scorer.hpp"
#include "lcsynth/screening.hpp"

namespace lcsynth {

// ---------------------------------------------------------------------------
// Entropy drift

struct PositionRef {
    std::string doc_id;
    std::size_t index = 0;
};

struct EntropyDriftRecord {
    PositionRef position;
    std::vector<double> entropy_by_stage;  // index t = snapshot M_t
};

struct QuantileSummary {
    int stage = 0;
    std::size_t n = 0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
};

struct DriftResult {
    std::vector<EntropyDriftRecord> records;
    std::vector<QuantileSummary> summary;  // one row per snapshot
};

/// Linear-interpolation quantile of unsorted values; q in [0, 1].
double quantile(std::vector<double> values, double q);

/// Re-scores every position under each snapshot with the screening prefix
/// (the last screening_length tokens of the root up to and including x_i).
DriftResult entropy_drift(std::span<const ModelState> snapshots, std::span<const PositionRef> positions,
                          const TokenizedCorpus& roots, std::size_t screening_length);

// ---------------------------------------------------------------------------
// Filler loss

struct PositiveRef {
    PositionRef position;
    std::string positive_doc;
    std::size_t positive_start = 0;
};

struct FillerLossRecord {
    PositionRef position;
    std::string positive_doc;
    std::size_t positive_start = 0;
    std::size_t d = 0;
    std::vector<double> loss_by_stage;  // empty when error is set
    std::string error;
};

struct FillerParams {
    std::vector<std::size_t> distances{0, 256, 512, 1024, 2048};
    std::size_t screening_length = 2048;
    /// Upper bound on |B| + d + root prefix + 1; longer layouts become per-record errors.
    std::size_t context_budget = 4096;
    /// Nearest neighbours of the positive that never serve as filler.
    std::size_t exclude_neighbours = 8;
    std::uint64_t seed = 0;
};

/// Filler tokens for one position: consecutive index chunks from a seeded
/// start row, skipping the root document, the positive's document and the
/// positive's nearest neighbours. Returns exactly `tokens` tokens or throws
/// PreconditionError when the index cannot supply them.
std::vector<TokenId> filler_tokens(const RetrievalContext& ctx, const PositiveRef& positive, std::size_t tokens,
                                   std::size_t exclude_neighbours, std::uint64_t seed);

/// Loss at x_i for layout [B, filler(d), root prefix, x_i] under every snapshot.
std::vector<FillerLossRecord> filler_loss(std::span<const ModelState> snapshots, std::span<const PositiveRef> positives,
                                          const TokenizedCorpus& roots, const RetrievalContext& ctx,
                                          const FillerParams& params);

struct FillerSummary {
    int stage = 0;
    std::size_t d = 0;
    std::size_t n = 0;
    double mean_loss = 0.0;
};

std::vector<FillerSummary> summarize_filler(std::span<const FillerLossRecord> records);

// ---------------------------------------------------------------------------
// Difficulty

struct DifficultyRecord {
    int stage = 0;
    std::size_t targets = 0;
    double loss_base = 0.0;
    double loss_prev = 0.0;
    double difficulty = 0.0;  // loss_base - loss_prev
};

DifficultyRecord make_difficulty(int stage, double loss_base, double loss_prev, std::size_t targets = 0);

/// Mean loss over the target offsets of the stage's sequences, scored on the
/// full sequence tokens. Throws PreconditionError on stage < 1 or when no
/// sequence carries targets.
DifficultyRecord difficulty(int stage, std::span<const TrainingSequence> sequences, const ModelState& base,
                            const ModelState& previous);

// ---------------------------------------------------------------------------
// Run-directory readers

/// Snapshots M_0..M_T of a persisted run; throws IoError naming the first missing stage.
std::vector<ModelState> load_run_snapshots(const std::filesystem::path& run_dir);

/// Positions from stage<t>/positions.csv.
std::vector<PositionRef> read_positions(const std::filesystem::path& run_dir, int stage);

/// Accepted rows of stage<t>/verification.csv.
std::vector<PositiveRef> read_verified_positives(const std::filesystem::path& run_dir, int stage);

/// Splits one CSV line, honouring double-quoted fields.
std::vector<std::string> split_csv_line(const std::string& line);

// ---------------------------------------------------------------------------
// Reports

void write_drift_summary_csv(std::ostream& out, std::span<const QuantileSummary> rows);
void write_drift_records_csv(std::ostream& out, std::span<const EntropyDriftRecord> records);
void write_filler_records_csv(std::ostream& out, std::span<const FillerLossRecord> records);
void write_filler_summary_csv(std::ostream& out, std::span<const FillerSummary> rows);
void write_difficulty_csv(std::ostream& out, std::span<const DifficultyRecord> records);

struct DiagnosticsReport {
    std::optional<DriftResult> drift;
    std::vector<FillerLossRecord> filler;
    std::vector<DifficultyRecord> difficulty;
};

/// Writes drift_summary.csv, drift_positions.csv, filler_loss.csv,
/// filler_summary.csv and difficulty.csv for the parts that are present.
/// Returns the files written; throws PreconditionError when nothing is present.
std::vector<std::filesystem::path> emit_report(const std::filesystem::path& dir, const DiagnosticsReport& report);

// ---------------------------------------------------------------------------
// Planted-dependency corpus

struct PlantedParams {
    std::size_t n_roots = 400;
    std::size_t n_distractors = 800;
    std::size_t n_background = 400;
    std::size_t n_base = 1500;
    std::size_t roots_per_key = 2;
    std::size_t key_len = 8;
    std::size_t value_len = 24;
    std::size_t values_per_key = 3;
    std::size_t distractor_values = 1;
    std::size_t root_len = 1200;  // approximate bytes per root
    std::size_t doc_len = 900;    // approximate bytes per retrieval/base document
    std::size_t vocab_words = 8;  // words per vocabulary (root text and retrieval text)
    std::size_t topic_words = 6;
    std::uint64_t seed = 1;
};

struct PlantedKey {
    std::string key;
    std::vector<std::string> values;
    std::string defining_doc;
    std::vector<std::string> topic;
};

struct PlantedCorpus {
    std::vector<Document> source;     // roots
    std::vector<Document> retrieval;  // definitions, distractors, background
    std::vector<Document> base;       // text for the M_0 counts
    std::vector<PlantedKey> keys;
    std::map<std::string, std::string> truth;     // root id -> defining doc id
    std::map<std::string, std::size_t> root_key;  // root id -> index into keys
};

/// Throws ParameterError when a count or length is zero.
PlantedCorpus generate_planted_corpus(const PlantedParams& params);

/// source.jsonl, retrieval.jsonl, base.jsonl and truth.json under dir.
void write_planted_corpus(const PlantedCorpus& corpus, const std::filesystem::path& dir);

/// Root id -> defining doc id from truth.json.
std::map<std::string, std::string> read_truth(const std::filesystem::path& file);

/// M_0 counts from base documents.
std::shared_ptr<const CacheNgramModel> train_base_model(std::span<const Document> base, const NgramParams& params = {});

}  // namespace lcsynth
