#include "lcsynth/verification.hpp"

#include <algorithm>
#include <ostream>

#include "lcsynth/errors.hpp"
#include "lcsynth/format.hpp"

namespace lcsynth {

std::size_t verification_prefix_start(std::size_t index, std::size_t candidate_len, std::size_t screening_length) {
    if (screening_length == 0) return 0;
    const std::size_t budget = screening_length > candidate_len ? screening_length - candidate_len : 1;
    return index + 1 > budget ? index + 1 - budget : 0;
}

VerifyOutcome verify_pair(const Scorer& scorer, std::span<const TokenId> root, const SelectedPosition& pos,
                          std::span<const TokenId> candidate, const VerifyParams& params) {
    if (!(pos.base_entropy > 0.0)) {
        throw PreconditionError("position " + std::to_string(pos.index) + " of '" + pos.doc_id +
                                "' has non-positive base entropy");
    }
    if (pos.index >= root.size()) throw ParameterError("position outside root document");
    VerifyOutcome o;
    o.prefix_start = verification_prefix_start(pos.index, candidate.size(), params.screening_length);
    const std::size_t rel = pos.index - o.prefix_start;
    auto window = root.subspan(o.prefix_start, rel + 1);
    o.base_entropy = pos.base_entropy;
    o.conditional_entropy = scorer.conditional_entropy(candidate, window, std::span<const std::size_t>(&rel, 1)).at(0);
    o.delta_h = (o.base_entropy - o.conditional_entropy) / o.base_entropy;
    o.accepted = o.delta_h > params.tau_pos;
    return o;
}

std::optional<VerifiedPositive> verify(const Scorer& scorer, const TokenSequence& root, const SelectedPosition& pos,
                                       const CandidateChunk& candidate, const VerifyParams& params) {
    const VerifyOutcome o = verify_pair(scorer, root.tokens, pos, candidate.chunk.tokens, params);
    if (!o.accepted) return std::nullopt;
    VerifiedPositive v;
    v.row = candidate.row;
    v.chunk = candidate.chunk;
    v.position = pos;
    v.base_entropy = o.base_entropy;
    v.conditional_entropy = o.conditional_entropy;
    v.delta_h = o.delta_h;
    v.stage = pos.stage;
    v.snapshot_id = scorer.snapshot().snapshot_id;
    return v;
}

VerifyAllResult verify_all(const Scorer& scorer, const TokenSequence& root, std::span<const SelectedPosition> positions,
                           std::span<const std::vector<CandidateChunk>> candidate_lists, const VerifyParams& params) {
    if (positions.size() != candidate_lists.size()) {
        throw ParameterError("candidate lists are not aligned with positions");
    }
    VerifyAllResult result;
    for (std::size_t j = 0; j < positions.size(); ++j) {
        const auto& pos = positions[j];
        std::vector<VerifiedPositive> accepted;
        for (const auto& cand : candidate_lists[j]) {
            VerificationRecord rec;
            rec.root_id = root.doc_id;
            rec.position = pos.index;
            rec.candidate_doc = cand.chunk.doc_id;
            rec.candidate_start = cand.chunk.start;
            rec.snapshot_id = scorer.snapshot().snapshot_id;
            try {
                const VerifyOutcome o = verify_pair(scorer, root.tokens, pos, cand.chunk.tokens, params);
                rec.base_entropy = o.base_entropy;
                rec.conditional_entropy = o.conditional_entropy;
                rec.delta_h = o.delta_h;
                rec.accepted = o.accepted;
                if (o.accepted) {
                    VerifiedPositive v;
                    v.row = cand.row;
                    v.chunk = cand.chunk;
                    v.position = pos;
                    v.base_entropy = o.base_entropy;
                    v.conditional_entropy = o.conditional_entropy;
                    v.delta_h = o.delta_h;
                    v.stage = pos.stage;
                    v.snapshot_id = scorer.snapshot().snapshot_id;
                    accepted.push_back(std::move(v));
                }
            } catch (const Error& e) {
                rec.error = e.what();
                ++result.errors;
            }
            result.records.push_back(std::move(rec));
        }
        std::stable_sort(accepted.begin(), accepted.end(),
                         [](const VerifiedPositive& a, const VerifiedPositive& b) { return a.delta_h > b.delta_h; });
        if (params.max_positives_per_position && accepted.size() > *params.max_positives_per_position) {
            accepted.resize(*params.max_positives_per_position);
        }
        for (auto& v : accepted) result.positives.push_back(std::move(v));
    }
    std::stable_sort(result.positives.begin(), result.positives.end(),
                     [](const VerifiedPositive& a, const VerifiedPositive& b) {
                         if (a.position.index != b.position.index) return a.position.index < b.position.index;
                         return a.delta_h > b.delta_h;
                     });
    return result;
}

void write_verification_csv(std::ostream& out, std::span<const VerificationRecord> records, bool header) {
    if (header) out << "root_id,position,candidate_chunk,base_H,cond_H,delta_H,accepted,snapshot_id\n";
    for (const auto& r : records) {
        out << csv_field(r.root_id) << ',' << r.position << ','
            << csv_field(r.candidate_doc + ":" + std::to_string(r.candidate_start)) << ',' << fmt_double(r.base_entropy)
            << ',' << fmt_double(r.conditional_entropy) << ',' << fmt_double(r.delta_h) << ','
            << (r.error.empty() ? (r.accepted ? "1" : "0") : "error") << ',' << csv_field(r.snapshot_id) << '\n';
    }
}

}  // namespace lcsynth
