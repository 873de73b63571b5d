#include "lcsynth/sequence_io.hpp"

#include <fstream>
#include <set>

#include "lcsynth/errors.hpp"

namespace lcsynth {

using nlohmann::json;

namespace {

json segment_json(const Segment& s) {
    return {{"kind", std::string(segment_kind_name(s.kind))}, {"doc_id", s.doc_id}, {"start", s.start}, {"len", s.len}};
}

Segment segment_from(const json& j) {
    Segment s;
    auto kind = parse_segment_kind(j.at("kind").get<std::string>());
    if (!kind) throw ParameterError("unknown segment kind");
    s.kind = *kind;
    s.doc_id = j.at("doc_id").get<std::string>();
    s.start = j.at("start").get<std::size_t>();
    s.len = j.at("len").get<std::size_t>();
    return s;
}

}  // namespace

json sequence_to_json(const TrainingSequence& seq, bool text_mode) {
    json rec;
    rec["stage"] = seq.stage;
    rec["root_id"] = seq.root_id;
    rec["shuffle_seed"] = seq.shuffle_seed;
    rec["snapshot_id"] = seq.snapshot_id;
    if (text_mode) {
        rec["text"] = detokenize(seq.tokens);
    } else {
        rec["tokens"] = seq.tokens;
    }
    json layout = json::array();
    for (const auto& s : seq.layout) layout.push_back(segment_json(s));
    rec["layout"] = std::move(layout);
    json truncated = json::array();
    for (const auto& s : seq.truncated) truncated.push_back(segment_json(s));
    rec["truncated"] = std::move(truncated);
    json targets = json::array();
    for (const auto& t : seq.targets) {
        targets.push_back({{"root_index", t.root_index},
                           {"offset", t.offset},
                           {"positive_doc", t.positive_doc},
                           {"positive_start", t.positive_start},
                           {"delta_h", t.delta_h}});
    }
    rec["targets"] = std::move(targets);
    rec["shortfall"] = seq.shortfall;
    rec["root_alone"] = seq.root_alone;
    return rec;
}

TrainingSequence sequence_from_json(const json& rec) {
    try {
        TrainingSequence seq;
        seq.stage = rec.at("stage").get<int>();
        seq.root_id = rec.at("root_id").get<std::string>();
        seq.shuffle_seed = rec.at("shuffle_seed").get<std::uint64_t>();
        seq.snapshot_id = rec.value("snapshot_id", std::string());
        if (rec.contains("tokens")) {
            seq.tokens = rec.at("tokens").get<std::vector<TokenId>>();
        } else {
            const std::string text = rec.at("text").get<std::string>();
            for (unsigned char c : text) seq.tokens.push_back(c);
        }
        for (const auto& s : rec.at("layout")) seq.layout.push_back(segment_from(s));
        if (rec.contains("truncated")) {
            for (const auto& s : rec.at("truncated")) seq.truncated.push_back(segment_from(s));
        }
        if (rec.contains("targets")) {
            for (const auto& t : rec.at("targets")) {
                seq.targets.push_back({t.at("root_index").get<std::size_t>(), t.at("offset").get<std::size_t>(),
                                       t.at("positive_doc").get<std::string>(),
                                       t.at("positive_start").get<std::size_t>(), t.at("delta_h").get<double>()});
            }
        }
        seq.shortfall = rec.value("shortfall", false);
        seq.root_alone = rec.value("root_alone", false);
        return seq;
    } catch (const json::exception& e) {
        throw ParameterError(std::string("malformed sequence record: ") + e.what());
    }
}

void write_sequences(std::ostream& out, std::span<const TrainingSequence> seqs, bool text_mode) {
    for (const auto& s : seqs) {
        out << sequence_to_json(s, text_mode).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    }
}

void write_sequences_file(const std::filesystem::path& file, std::span<const TrainingSequence> seqs, bool text_mode) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    const auto tmp = std::filesystem::path(file.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + file.string());
        write_sequences(out, seqs, text_mode);
        if (!out) throw IoError("failed writing " + file.string());
    }
    std::filesystem::rename(tmp, file);
}

std::vector<TrainingSequence> read_sequences_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot read " + file.string());
    std::vector<TrainingSequence> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded()) throw ParameterError(file.string() + ":" + std::to_string(line_no) + ": not JSON");
        out.push_back(sequence_from_json(rec));
    }
    return out;
}

std::optional<std::string> check_sequence(const TrainingSequence& seq, const CheckOptions& options) {
    if (seq.layout.empty()) return "empty layout";
    const Segment& root = seq.layout.back();
    if (root.kind != SegmentKind::root) return "last segment is not the root";
    if (root.doc_id != seq.root_id) return "root segment names '" + root.doc_id + "', record root is '" + seq.root_id + "'";
    if (root.start != 0) return "root segment does not start at token 0";

    std::size_t offset = 0;
    std::set<std::pair<std::string, std::size_t>> chunks;
    for (std::size_t i = 0; i + 1 < seq.layout.size(); ++i) {
        const Segment& s = seq.layout[i];
        if (s.kind == SegmentKind::root) return "root segment before the suffix";
        if (s.len == 0) return "empty prefix segment";
        if (s.doc_id == seq.root_id) return "prefix segment taken from the root document";
        if (!chunks.emplace(s.doc_id, s.start).second) {
            return "chunk " + s.doc_id + ":" + std::to_string(s.start) + " repeated in the prefix";
        }
        if (offset + s.len > seq.tokens.size()) return "layout exceeds the token list";
        if (options.lookup) {
            auto toks = options.lookup(s.doc_id, s.start, s.len);
            if (!toks) return "segment document '" + s.doc_id + "' not found";
            if (!std::equal(toks->begin(), toks->end(), seq.tokens.begin() + static_cast<std::ptrdiff_t>(offset),
                            seq.tokens.begin() + static_cast<std::ptrdiff_t>(offset + s.len)) ||
                toks->size() != s.len) {
                return "tokens of segment " + s.doc_id + ":" + std::to_string(s.start) + " differ from the store";
            }
        }
        offset += s.len;
    }
    for (const auto& s : seq.truncated) {
        if (s.kind == SegmentKind::root) return "root listed as truncated";
        if (!chunks.emplace(s.doc_id, s.start).second) {
            return "truncated chunk " + s.doc_id + ":" + std::to_string(s.start) + " also present elsewhere";
        }
    }
    if (offset + root.len != seq.tokens.size()) return "segments do not tile the token list";
    if (options.lookup) {
        auto toks = options.lookup(seq.root_id, 0, root.len);
        if (!toks) return "root document '" + seq.root_id + "' not found";
        if (toks->size() != root.len ||
            !std::equal(toks->begin(), toks->end(), seq.tokens.begin() + static_cast<std::ptrdiff_t>(offset))) {
            return "suffix differs from the root document";
        }
    }
    if (options.max_length && !seq.root_alone && seq.tokens.size() > *options.max_length) {
        return "sequence length " + std::to_string(seq.tokens.size()) + " exceeds L";
    }
    if (seq.root_alone && seq.layout.size() != 1) return "root_alone record has a prefix";
    for (const auto& t : seq.targets) {
        if (t.root_index >= root.len || t.offset != offset + t.root_index) return "target outside the root suffix";
        bool found = false;
        for (std::size_t i = 0; i + 1 < seq.layout.size(); ++i) {
            const Segment& s = seq.layout[i];
            if (s.kind == SegmentKind::positive && s.doc_id == t.positive_doc && s.start == t.positive_start) {
                found = true;
            }
        }
        if (!found) return "target names a positive that is not in the prefix";
    }
    return std::nullopt;
}

}  // namespace lcsynth
