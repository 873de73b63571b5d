#pragma once

// Line-delimited JSON records for assembled sequences, and the validator
// behind `inspect --check`.

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcsynth/assembly.hpp"

namespace lcsynth {

nlohmann::json sequence_to_json(const TrainingSequence& seq, bool text_mode = false);
/// Accepts both token and text records. Throws ParameterError on a malformed record.
TrainingSequence sequence_from_json(const nlohmann::json& rec);

void write_sequences(std::ostream& out, std::span<const TrainingSequence> seqs, bool text_mode = false);
void write_sequences_file(const std::filesystem::path& file, std::span<const TrainingSequence> seqs,
                          bool text_mode = false);
std::vector<TrainingSequence> read_sequences_file(const std::filesystem::path& file);

/// Resolves (doc_id, start, len) to tokens; nullopt when the document is unknown.
using ChunkLookup =
    std::function<std::optional<std::vector<TokenId>>(const std::string& doc_id, std::size_t start, std::size_t len)>;

struct CheckOptions {
    std::optional<std::size_t> max_length;  // L
    /// When set, every segment (and the root) is compared with the store.
    ChunkLookup lookup;
};

/// Empty when the record satisfies the suffix law (root last, verbatim), the
/// tiling law, the multiset law (prefix and truncated chunks distinct, none
/// from the root document) and the target bookkeeping; otherwise the first
/// violation.
std::optional<std::string> check_sequence(const TrainingSequence& seq, const CheckOptions& options = {});

}  // namespace lcsynth
