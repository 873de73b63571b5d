#pragma once

// Relative entropy-reduction test for retrieved candidates:
//
//   dH(B, x_i) = (H(x_i | x_<i) - H(x_i | B, x_<i)) / H(x_i | x_<i)  >  tau_pos

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcsynth/corpus.hpp"
#include "lcsynth/scorer.hpp"
#include "lcsynth/screening.hpp"

namespace lcsynth {

struct VerifyParams {
    double tau_pos = 0.3;
    /// Scored window budget for candidate ++ root prefix; 0 = unlimited.
    std::size_t screening_length = 2048;
    /// Cap on accepted candidates per position; nullopt keeps all.
    std::optional<std::size_t> max_positives_per_position;
};

/// A retrieved chunk offered for verification. `row` is its index entry.
struct CandidateChunk {
    std::uint32_t row = 0;
    Chunk chunk;
};

struct VerifiedPositive {
    std::uint32_t row = 0;
    Chunk chunk;
    SelectedPosition position;
    double base_entropy = 0.0;
    double conditional_entropy = 0.0;
    double delta_h = 0.0;
    int stage = 0;
    std::string snapshot_id;
};

struct VerifyOutcome {
    bool accepted = false;
    double base_entropy = 0.0;
    double conditional_entropy = 0.0;
    double delta_h = 0.0;
    /// First root token kept in the scored window.
    std::size_t prefix_start = 0;
};

/// First root index kept when `candidate_len` tokens are prepended and the
/// window must fit in screening_length (oldest root tokens are dropped).
std::size_t verification_prefix_start(std::size_t index, std::size_t candidate_len, std::size_t screening_length);

/// Scores one (position, candidate) pair. The base entropy is the screening
/// value carried by `pos`. Throws PreconditionError when it is not > 0.
VerifyOutcome verify_pair(const Scorer& scorer, std::span<const TokenId> root, const SelectedPosition& pos,
                          std::span<const TokenId> candidate, const VerifyParams& params);

/// verify_pair plus promotion to a VerifiedPositive when accepted.
std::optional<VerifiedPositive> verify(const Scorer& scorer, const TokenSequence& root, const SelectedPosition& pos,
                                       const CandidateChunk& candidate, const VerifyParams& params);

struct VerificationRecord {
    std::string root_id;
    std::size_t position = 0;
    std::string candidate_doc;
    std::size_t candidate_start = 0;
    double base_entropy = 0.0;
    double conditional_entropy = 0.0;
    double delta_h = 0.0;
    bool accepted = false;
    std::string error;  // non-empty when scoring the pair failed
    std::string snapshot_id;
};

struct VerifyAllResult {
    std::vector<VerifiedPositive> positives;  // by (position index, delta_h desc)
    std::vector<VerificationRecord> records;  // one per pair, input order
    std::size_t errors = 0;
};

/// Verifies every (position, candidate) pair; candidate_lists[j] belongs to
/// positions[j]. A failing pair is recorded and skipped.
VerifyAllResult verify_all(const Scorer& scorer, const TokenSequence& root, std::span<const SelectedPosition> positions,
                           std::span<const std::vector<CandidateChunk>> candidate_lists, const VerifyParams& params);

/// CSV with header root_id,position,candidate_chunk,base_H,cond_H,delta_H,accepted.
void write_verification_csv(std::ostream& out, std::span<const VerificationRecord> records, bool header = true);

}  // namespace lcsynth
