#pragma once

// Config files: JSON, or a flat TOML subset (`key = value` lines and
// `[section]` headers; values are numbers, booleans, quoted strings or
// one-line arrays of those).

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "lcsynth/orchestrator.hpp"
#include "lcsynth/remote.hpp"
#include "lcsynth/retrieval.hpp"
#include "lcsynth/scorer.hpp"

namespace lcsynth {

struct PathsConfig {
    std::filesystem::path store;          // document store (JSONL)
    std::filesystem::path index;          // vector index file
    std::filesystem::path base_snapshot;  // M_0; built from base_corpus when absent
    std::filesystem::path base_corpus;    // JSONL text for M_0 counts
    std::filesystem::path run_root = "run";
};

struct AppConfig {
    StageConfig stage;
    NgramParams ngram;
    TfidfParams tfidf;
    PathsConfig paths;
    std::optional<RemoteEndpoint> scorer_endpoint;
    std::optional<RemoteEndpoint> embedder_endpoint;
    std::string trainer = "builtin";
    double trainer_timeout_s = 3600.0;
    /// Parsed tree after overrides; what the run records as its config.
    nlohmann::json tree = nlohmann::json::object();
};

/// Throws ConfigError naming the line on malformed input.
nlohmann::json parse_toml_subset(std::string_view text);

/// Parses JSON when the first non-blank character is '{', TOML otherwise.
nlohmann::json parse_config_text(std::string_view text);

/// Sets a dotted key ("scorer.lambda") from a TOML-style value string.
void set_config_value(nlohmann::json& tree, const std::string& dotted_key, const std::string& value);

/// Unknown keys and ill-typed values are ConfigErrors. Relative paths resolve
/// against base_dir. The StageConfig is validated.
AppConfig config_from_tree(const nlohmann::json& tree, const std::filesystem::path& base_dir = {});

/// Reads and parses a config file.
nlohmann::json read_config_file(const std::filesystem::path& file);

/// Canonical hash of a config tree.
std::string config_hash(const nlohmann::json& tree);

}  // namespace lcsynth
