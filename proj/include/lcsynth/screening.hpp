#pragma once

// High-entropy position selection and query-fragment extraction.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcsynth/corpus.hpp"
#include "lcsynth/scorer.hpp"

namespace lcsynth {

struct SelectedPosition {
    std::string doc_id;
    std::size_t index = 0;
    double base_entropy = 0.0;
    int stage = 0;
    std::string snapshot_id;
};

struct QueryFragment {
    SelectedPosition position;
    std::vector<TokenId> tokens;
    std::size_t start = 0;  // document index of tokens[0]
    std::size_t left = 0;   // tokens before the position actually included
    std::size_t right = 0;  // tokens after the position actually included
};

struct SelectOptions {
    /// Minimum index distance between two selected positions of one document.
    /// 0 disables the rule.
    std::size_t min_spacing = 0;
    /// Absolute threshold mode: select every position with entropy > tau
    /// instead of the top-k percentile.
    std::optional<double> absolute_tau;
};

struct SelectionResult {
    std::vector<SelectedPosition> positions;  // ascending index
    /// Set when no position had entropy > 0.
    bool all_zero = false;
};

/// ceil(k/100 * n), with products within 1e-9 of an integer taken as that integer.
std::size_t selection_count(double percentile_k, std::size_t n);

/// Top ceil(k/100 * n) positions by entropy, ties to the smaller index;
/// entropy 0 is never selected. Throws ParameterError on an empty profile or
/// k outside (0, 100].
SelectionResult select_positions(const EntropyProfile& profile, double percentile_k, int stage,
                                 const SelectOptions& options = {});

/// Corpus-wide variant: the percentile is taken over all positions of all
/// profiles together; ties go to the earlier profile, then the smaller index.
/// Returns one result per profile.
std::vector<SelectionResult> select_positions_corpus(std::span<const EntropyProfile> profiles, double percentile_k,
                                                     int stage, const SelectOptions& options = {});

/// Slice [i-left, i+right] clipped to the sequence.
QueryFragment extract_fragment(const TokenSequence& seq, const SelectedPosition& pos, std::size_t left,
                               std::size_t right);

/// CSV with header doc_id,index,entropy; entropies printed with 17 significant digits.
void write_positions_csv(std::ostream& out, std::span<const SelectedPosition> positions);

}  // namespace lcsynth
