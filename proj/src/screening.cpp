#include "lcsynth/screening.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>

#include "lcsynth/errors.hpp"
#include "lcsynth/format.hpp"

namespace lcsynth {

std::size_t selection_count(double percentile_k, std::size_t n) {
    const double x = percentile_k * static_cast<double>(n) / 100.0;
    const double r = std::round(x);
    if (std::fabs(x - r) <= 1e-9 * std::max(1.0, x)) return static_cast<std::size_t>(r);
    return static_cast<std::size_t>(std::ceil(x));
}

namespace {

void check_k(double k) {
    if (!(k > 0.0 && k <= 100.0)) throw ParameterError("percentile_k must be in (0, 100]");
}

struct Ranked {
    std::size_t profile;
    std::size_t index;
    double entropy;
};

bool rank_before(const Ranked& a, const Ranked& b) {
    if (a.entropy != b.entropy) return a.entropy > b.entropy;
    if (a.profile != b.profile) return a.profile < b.profile;
    return a.index < b.index;
}

// Walks candidates in rank order and keeps those allowed by the spacing rule
// until `want` are kept (want == SIZE_MAX keeps every admissible one).
std::vector<SelectionResult> pick(std::span<const EntropyProfile> profiles, std::vector<Ranked>& ranked,
                                  std::size_t want, int stage, const SelectOptions& options) {
    std::sort(ranked.begin(), ranked.end(), rank_before);
    std::vector<SelectionResult> out(profiles.size());
    std::vector<std::vector<std::size_t>> taken(profiles.size());  // sorted indices per profile
    std::size_t kept = 0;
    for (const auto& r : ranked) {
        if (kept >= want) break;
        auto& t = taken[r.profile];
        if (options.min_spacing > 0) {
            auto it = std::lower_bound(t.begin(), t.end(), r.index);
            if (it != t.end() && *it - r.index < options.min_spacing) continue;
            if (it != t.begin() && r.index - *(it - 1) < options.min_spacing) continue;
            t.insert(it, r.index);
        } else {
            t.push_back(r.index);
        }
        ++kept;
    }
    for (std::size_t p = 0; p < profiles.size(); ++p) {
        auto& t = taken[p];
        std::sort(t.begin(), t.end());
        for (std::size_t i : t) {
            out[p].positions.push_back(
                {profiles[p].doc_id, i, profiles[p].entropies[i], stage, profiles[p].snapshot_id});
        }
        out[p].all_zero = std::none_of(profiles[p].entropies.begin(), profiles[p].entropies.end(),
                                       [](double h) { return h > 0.0; });
    }
    return out;
}

std::vector<SelectionResult> select_impl(std::span<const EntropyProfile> profiles, double percentile_k, int stage,
                                         const SelectOptions& options) {
    std::vector<Ranked> ranked;
    std::size_t n = 0;
    for (std::size_t p = 0; p < profiles.size(); ++p) {
        const auto& e = profiles[p].entropies;
        if (e.empty()) throw ParameterError("empty entropy profile for '" + profiles[p].doc_id + "'");
        n += e.size();
        for (std::size_t i = 0; i < e.size(); ++i) {
            const bool eligible = options.absolute_tau ? e[i] > *options.absolute_tau && e[i] > 0.0 : e[i] > 0.0;
            if (eligible) ranked.push_back({p, i, e[i]});
        }
    }
    const std::size_t want = options.absolute_tau ? SIZE_MAX : selection_count(percentile_k, n);
    return pick(profiles, ranked, want, stage, options);
}

}  // namespace

SelectionResult select_positions(const EntropyProfile& profile, double percentile_k, int stage,
                                 const SelectOptions& options) {
    if (!options.absolute_tau) check_k(percentile_k);
    return std::move(select_impl(std::span<const EntropyProfile>(&profile, 1), percentile_k, stage, options).front());
}

std::vector<SelectionResult> select_positions_corpus(std::span<const EntropyProfile> profiles, double percentile_k,
                                                     int stage, const SelectOptions& options) {
    if (!options.absolute_tau) check_k(percentile_k);
    if (profiles.empty()) throw ParameterError("no profiles to select from");
    return select_impl(profiles, percentile_k, stage, options);
}

QueryFragment extract_fragment(const TokenSequence& seq, const SelectedPosition& pos, std::size_t left,
                               std::size_t right) {
    if (pos.index >= seq.tokens.size()) {
        throw ParameterError("position " + std::to_string(pos.index) + " outside document '" + seq.doc_id + "'");
    }
    QueryFragment f;
    f.position = pos;
    f.start = pos.index >= left ? pos.index - left : 0;
    const std::size_t end = std::min(seq.tokens.size(), pos.index + right + 1);
    f.left = pos.index - f.start;
    f.right = end - pos.index - 1;
    f.tokens.assign(seq.tokens.begin() + static_cast<std::ptrdiff_t>(f.start),
                    seq.tokens.begin() + static_cast<std::ptrdiff_t>(end));
    return f;
}

void write_positions_csv(std::ostream& out, std::span<const SelectedPosition> positions) {
    out << "doc_id,index,entropy,snapshot_id\n";
    for (const auto& p : positions) {
        out << csv_field(p.doc_id) << ',' << p.index << ',' << fmt_double(p.base_entropy) << ',' << csv_field(p.snapshot_id) << '\n';
    }
}

}  // namespace lcsynth
