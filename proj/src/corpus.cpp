#include "lcsynth/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>

#include <json.hpp>

#include "lcsynth/errors.hpp"
#include "lcsynth/util.hpp"

namespace lcsynth {

using nlohmann::json;

std::string_view corpus_name(CorpusKind kind) {
    return kind == CorpusKind::source ? "source" : "retrieval";
}

std::optional<CorpusKind> parse_corpus_kind(std::string_view name) {
    if (name == "source" || name == "source_corpus") return CorpusKind::source;
    if (name == "retrieval" || name == "retrieval_corpus") return CorpusKind::retrieval;
    return std::nullopt;
}

TokenSequence ByteTokenizer::tokenize(const Document& doc) const {
    if (doc.text.empty()) {
        throw ParameterError("cannot tokenize document '" + doc.id + "': text is empty");
    }
    TokenSequence seq;
    seq.doc_id = doc.id;
    seq.tokens.reserve(doc.text.size());
    seq.offsets.reserve(doc.text.size());
    for (std::size_t i = 0; i < doc.text.size(); ++i) {
        seq.tokens.push_back(static_cast<unsigned char>(doc.text[i]));
        seq.offsets.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i + 1));
    }
    return seq;
}

std::string ByteTokenizer::detokenize(std::span<const TokenId> tokens) const {
    std::string out;
    out.reserve(tokens.size());
    for (TokenId t : tokens) {
        if (t > 255) throw ParameterError("token id " + std::to_string(t) + " outside byte vocabulary");
        out.push_back(static_cast<char>(t));
    }
    return out;
}

TokenSequence tokenize(const Document& doc) { return ByteTokenizer{}.tokenize(doc); }

std::string detokenize(std::span<const TokenId> tokens) { return ByteTokenizer{}.detokenize(tokens); }

// ---------------------------------------------------------------------------
// DocumentStore

DocumentStore DocumentStore::open(const std::filesystem::path& file) {
    DocumentStore store;
    if (std::filesystem::exists(file)) {
        std::ifstream in(file);
        if (!in) throw IoError("cannot read document store " + file.string());
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            json rec;
            try {
                rec = json::parse(line);
                Document doc;
                doc.id = rec.at("id").get<std::string>();
                doc.text = rec.at("text").get<std::string>();
                auto kind = parse_corpus_kind(rec.value("source", std::string("source")));
                if (!kind) throw ParameterError("unknown source tag");
                doc.source = *kind;
                store.add(std::move(doc));
            } catch (const std::exception& e) {
                throw IoError(file.string() + ":" + std::to_string(line_no) + ": corrupt store record: " + e.what());
            }
        }
    } else if (file.has_parent_path()) {
        std::filesystem::create_directories(file.parent_path());
    }
    store.path_ = file;
    return store;
}

void DocumentStore::add(Document doc) {
    if (doc.id.empty()) throw ParameterError("document id is empty");
    if (doc.text.empty()) throw ParameterError("document '" + doc.id + "' has empty text");
    if (by_id_.count(doc.id)) throw ParameterError("duplicate document id '" + doc.id + "'");
    by_id_.emplace(doc.id, docs_.size());
    docs_.push_back(std::move(doc));
}

void DocumentStore::append_to_file(const Document& doc) {
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot append to document store " + path_.string());
    json rec = {{"id", doc.id}, {"text", doc.text}, {"source", std::string(corpus_name(doc.source))}};
    out << rec.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
}

IngestReport DocumentStore::ingest(std::istream& in, CorpusKind source) {
    IngestReport report;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto fail = [&](std::string msg) { report.errors.push_back({line_no, std::move(msg)}); };

        json rec = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (rec.is_discarded() || !rec.is_object()) {
            fail("malformed record: not a JSON object");
            continue;
        }
        auto id = rec.find("id");
        auto text = rec.find("text");
        if (id == rec.end() || !id->is_string()) {
            fail("missing string field 'id'");
            continue;
        }
        if (text == rec.end() || !text->is_string()) {
            fail("missing string field 'text'");
            continue;
        }
        if (auto src = rec.find("source"); src != rec.end()) {
            auto kind = src->is_string() ? parse_corpus_kind(src->get<std::string>()) : std::nullopt;
            if (!kind) {
                fail("unknown 'source' tag");
                continue;
            }
            if (*kind != source) {
                fail("record source '" + src->get<std::string>() + "' does not match corpus '" +
                     std::string(corpus_name(source)) + "'");
                continue;
            }
        }
        Document doc{id->get<std::string>(), text->get<std::string>(), source};
        try {
            add(doc);
        } catch (const ParameterError& e) {
            fail(e.what());
            continue;
        }
        append_to_file(docs_.back());
        ++report.accepted;
    }
    return report;
}

const Document* DocumentStore::find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &docs_[it->second];
}

std::optional<std::size_t> DocumentStore::index_of(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

std::size_t DocumentStore::count(CorpusKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(docs_.begin(), docs_.end(), [&](const Document& d) { return d.source == kind; }));
}

// ---------------------------------------------------------------------------
// TokenizedCorpus

TokenizedCorpus::TokenizedCorpus(const DocumentStore& store, const Tokenizer& tokenizer) {
    seqs_.reserve(store.size());
    for (const auto& doc : store.documents()) seqs_.push_back(tokenizer.tokenize(doc));
    build_index();
}

TokenizedCorpus::TokenizedCorpus(std::vector<TokenSequence> seqs) : seqs_(std::move(seqs)) { build_index(); }

void TokenizedCorpus::build_index() {
    by_id_.reserve(seqs_.size());
    total_tokens_ = 0;
    for (std::size_t i = 0; i < seqs_.size(); ++i) {
        if (!by_id_.emplace(seqs_[i].doc_id, i).second) {
            throw ParameterError("duplicate sequence id '" + seqs_[i].doc_id + "'");
        }
        total_tokens_ += seqs_[i].tokens.size();
    }
}

const TokenSequence* TokenizedCorpus::find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &seqs_[it->second];
}

std::optional<std::size_t> TokenizedCorpus::index_of(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

// ---------------------------------------------------------------------------
// Chunking

std::vector<std::pair<std::size_t, std::size_t>> chunk_spans(std::size_t n_tokens, std::size_t chunk_len) {
    if (chunk_len == 0) throw ParameterError("chunk_len must be > 0");
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    spans.reserve((n_tokens + chunk_len - 1) / chunk_len);
    for (std::size_t start = 0; start < n_tokens; start += chunk_len) {
        spans.emplace_back(start, std::min(chunk_len, n_tokens - start));
    }
    return spans;
}

std::vector<Chunk> chunk(const TokenSequence& seq, std::size_t chunk_len) {
    std::vector<Chunk> out;
    for (auto [start, len] : chunk_spans(seq.tokens.size(), chunk_len)) {
        Chunk c;
        c.doc_id = seq.doc_id;
        c.start = start;
        c.length = len;
        c.tokens.assign(seq.tokens.begin() + static_cast<std::ptrdiff_t>(start),
                        seq.tokens.begin() + static_cast<std::ptrdiff_t>(start + len));
        out.push_back(std::move(c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stage sampling

void SampleLedger::record(std::span<const std::string> ids) {
    for (const auto& id : ids) ids_.insert(id);
}

std::vector<Document> sample_stage_docs(const DocumentStore& store, std::size_t n_docs, std::uint64_t seed,
                                        const SampleLedger& ledger, SampleOptions options) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& doc = store.at(i);
        if (doc.source != CorpusKind::source) continue;
        if (!options.with_replacement && ledger.contains(doc.id)) continue;
        eligible.push_back(i);
    }
    if (eligible.size() < n_docs) {
        const std::size_t shortfall = n_docs - eligible.size();
        throw StageSetupError("stage needs " + std::to_string(n_docs) + " unsampled source documents but only " +
                                  std::to_string(eligible.size()) + " remain (shortfall " +
                                  std::to_string(shortfall) + ")",
                              shortfall);
    }
    Rng rng(seed);
    fisher_yates(std::span<std::size_t>(eligible), rng);
    std::vector<Document> out;
    out.reserve(n_docs);
    for (std::size_t i = 0; i < n_docs; ++i) out.push_back(store.at(eligible[i]));
    return out;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace lcsynth
