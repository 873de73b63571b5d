#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "lcsynth/diagnostics.hpp"
#include "lcsynth/errors.hpp"
#include "lcsynth/util.hpp"

namespace lcsynth {

using nlohmann::json;

namespace {

constexpr std::string_view kKeyAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789!#$%&*+-/:;<=>?@[]^_{|}~";
// Root text and retrieval text are spelled with disjoint consonants so that
// retrieved chunks share contexts with a root only through the planted fact.
constexpr std::string_view kRootOnsets[] = {"b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s",
                                            "t", "v", "w", "br", "st", "tr", "pl", "gr", "sh", "ch", "th"};
constexpr std::string_view kRootCodas[] = {"", "", "", "n", "r", "s", "t", "l", "m", "nd", "st"};
constexpr std::string_view kOtherOnsets[] = {"q", "x", "z", "j", "y", "qu", "zy", "xy", "jy"};
constexpr std::string_view kOtherCodas[] = {"", "", "", "x", "z", "q", "j", "zz", "xq"};
constexpr std::string_view kRootVowels[] = {"a", "e", "i", "o", "u", "ai", "ea", "ou"};
constexpr std::string_view kOtherVowels[] = {"a", "e", "i", "o", "u"};

std::string_view pick(Rng& rng, std::span<const std::string_view> arr) {
    return arr[uniform_below(rng, arr.size())];
}

std::string padded(std::string_view prefix, std::size_t i) {
    std::string n = std::to_string(i);
    if (n.size() < 5) n.insert(0, 5 - n.size(), '0');
    return std::string(prefix) + n;
}

class TextSource {
public:
    TextSource(std::size_t n_words, Rng& rng, std::span<const std::string_view> onsets,
               std::span<const std::string_view> vowels, std::span<const std::string_view> codas, char sep,
               std::string stop)
        : sep_(sep), stop_(std::move(stop)) {
        std::set<std::string> seen;
        while (words_.size() < n_words) {
            std::string w;
            const std::size_t syl = 1 + uniform_below(rng, 3);
            for (std::size_t s = 0; s < syl; ++s) {
                w += pick(rng, onsets);
                w += pick(rng, vowels);
            }
            w += pick(rng, codas);
            if (seen.insert(w).second) words_.push_back(std::move(w));
        }
    }

    const std::string& word(Rng& rng) const { return words_[uniform_below(rng, words_.size())]; }

    const std::string& at(std::size_t rank) const { return words_.at(rank); }
    std::size_t size() const { return words_.size(); }
    char sep() const { return sep_; }
    const std::string& stop() const { return stop_; }

    /// Sentences of uniformly drawn words until at least `bytes` long.
    std::string text(Rng& rng, std::size_t bytes) const {
        std::string out;
        while (out.size() < bytes) {
            const std::size_t n = 6 + uniform_below(rng, 9);
            for (std::size_t i = 0; i < n; ++i) {
                if (i > 0) out += sep_;
                out += word(rng);
            }
            out += stop_;
        }
        return out;
    }

private:
    std::vector<std::string> words_;
    char sep_;
    std::string stop_;
};

std::string random_code(Rng& rng, std::size_t len) {
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s += kKeyAlphabet[uniform_below(rng, kKeyAlphabet.size())];
    return s;
}

/// Topic words then KEY V1 V2 ... Vn written as one run of code characters,
/// joined and terminated like the surrounding text; the topic may be empty.
std::string fact(const std::vector<std::string>& topic, const std::string& key, const std::vector<std::string>& values,
                 const TextSource& text) {
    std::string out;
    for (const auto& w : topic) out += w + text.sep();
    out += key;
    for (const auto& v : values) out += v;
    return out + text.stop();
}

/// Background text with `inner` placed after roughly `at` of the bytes.
std::string embed_text(Rng& rng, const TextSource& body, std::size_t bytes, double at, const std::string& inner,
                       const std::string& preamble = {}) {
    const std::size_t rest = bytes > inner.size() ? bytes - inner.size() : 0;
    const auto head = static_cast<std::size_t>(static_cast<double>(rest) * at);
    std::string out = preamble + body.text(rng, head);
    out += inner;
    out += body.text(rng, rest - std::min(rest, head));
    return out;
}

}  // namespace

PlantedCorpus generate_planted_corpus(const PlantedParams& p) {
    if (p.n_roots == 0 || p.roots_per_key == 0 || p.key_len == 0 || p.value_len == 0 || p.root_len == 0 ||
        p.doc_len == 0 || p.vocab_words < 4 || p.values_per_key == 0 || p.topic_words == 0 || p.n_base == 0) {
        throw ParameterError("planted corpus parameters must be positive (vocab_words >= 4)");
    }
    Rng rng(derive_seed(p.seed, "planted"));
    const TextSource words(p.vocab_words, rng, kRootOnsets, kRootVowels, kRootCodas, ' ', ". ");
    const TextSource other(p.vocab_words, rng, kOtherOnsets, kOtherVowels, kOtherCodas, ',', ".\n");
    PlantedCorpus c;

    const std::size_t n_keys = (p.n_roots + p.roots_per_key - 1) / p.roots_per_key;
    std::set<std::string> codes;
    auto fresh_code = [&](std::size_t len) {
        for (;;) {
            std::string s = random_code(rng, len);
            if (codes.insert(s).second) return s;
        }
    };
    auto fresh_values = [&] {
        std::vector<std::string> v;
        for (std::size_t i = 0; i < p.values_per_key; ++i) v.push_back(fresh_code(p.value_len));
        return v;
    };
    for (std::size_t k = 0; k < n_keys; ++k) {
        PlantedKey key;
        key.key = fresh_code(p.key_len);
        key.values = fresh_values();
        key.defining_doc = padded("def-", k);
        for (std::size_t i = 0; i < p.topic_words; ++i) key.topic.push_back(other.word(rng));
        c.keys.push_back(std::move(key));
    }

    for (std::size_t k = 0; k < n_keys; ++k) {
        const auto& key = c.keys[k];
        const double at = 0.2 + 0.6 * uniform_unit(rng);
        c.retrieval.push_back({key.defining_doc,
                               embed_text(rng, other, p.doc_len, at, fact(key.topic, key.key, key.values, other)),
                               CorpusKind::retrieval});
    }
    for (std::size_t r = 0; r < p.n_roots; ++r) {
        const std::size_t k = r % n_keys;
        const auto& key = c.keys[k];
        Document d{padded("root-", r), {}, CorpusKind::source};
        const double at = 0.3 + 0.4 * uniform_unit(rng);
        d.text = embed_text(rng, words, p.root_len, at, fact({}, key.key, key.values, words), "\u00a7 ");
        c.truth[d.id] = key.defining_doc;
        c.root_key[d.id] = k;
        c.source.push_back(std::move(d));
    }
    // Distractors share a key's topic and template but carry other codes.
    for (std::size_t i = 0; i < p.n_distractors; ++i) {
        const auto& key = c.keys[i % n_keys];
        const std::string other_key = fresh_code(p.key_len);
        std::vector<std::string> other_values;
        for (std::size_t v = 0; v < p.distractor_values; ++v) other_values.push_back(fresh_code(p.value_len));
        const double at = 0.2 + 0.6 * uniform_unit(rng);
        c.retrieval.push_back({padded("dis-", i),
                               embed_text(rng, other, p.doc_len, at, fact(key.topic, other_key, other_values, other)),
                               CorpusKind::retrieval});
    }
    for (std::size_t i = 0; i < p.n_background; ++i) {
        c.retrieval.push_back({padded("bg-", i), other.text(rng, p.doc_len), CorpusKind::retrieval});
    }
    for (std::size_t i = 0; i < p.n_base; ++i) {
        const std::string text = i % 8 == 0 ? words.text(rng, p.doc_len) : other.text(rng, p.doc_len);
        c.base.push_back({padded("base-", i), text, CorpusKind::source});
    }
    return c;
}

namespace {

void write_jsonl(const std::filesystem::path& file, const std::vector<Document>& docs) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + file.string());
    for (const auto& d : docs) {
        out << json{{"id", d.id}, {"text", d.text}, {"source", std::string(corpus_name(d.source))}}.dump() << '\n';
    }
    if (!out) throw IoError("failed writing " + file.string());
}

}  // namespace

void write_planted_corpus(const PlantedCorpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_jsonl(dir / "source.jsonl", corpus.source);
    write_jsonl(dir / "retrieval.jsonl", corpus.retrieval);
    write_jsonl(dir / "base.jsonl", corpus.base);
    json keys = json::array();
    for (const auto& k : corpus.keys) {
        keys.push_back({{"key", k.key}, {"values", k.values}, {"defining_doc", k.defining_doc}, {"topic", k.topic}});
    }
    json truth = {{"roots", corpus.truth}, {"keys", keys}};
    std::ofstream out(dir / "truth.json", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "truth.json").string());
    out << truth.dump(2) << '\n';
}

std::map<std::string, std::string> read_truth(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot read " + file.string());
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("roots")) throw IoError(file.string() + " is not a truth map");
    return j.at("roots").get<std::map<std::string, std::string>>();
}

std::shared_ptr<const CacheNgramModel> train_base_model(std::span<const Document> base, const NgramParams& params) {
    std::vector<std::vector<TokenId>> data;
    data.reserve(base.size());
    for (const auto& d : base) data.push_back(tokenize(d).tokens);
    CacheNgramModel empty(params);
    if (data.empty()) return std::make_shared<const CacheNgramModel>(std::move(empty));
    return std::make_shared<const CacheNgramModel>(empty.trained(data));
}

}  // namespace lcsynth
