#include "lcsynth/config.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "lcsynth/errors.hpp"
#include "lcsynth/util.hpp"

namespace lcsynth {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

/// Drops a trailing comment outside quotes.
std::string_view strip_comment(std::string_view s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

json parse_scalar(std::string_view v, const std::string& where) {
    v = trim(v);
    if (v.empty()) throw ConfigError(where + ": missing value");
    if (v.front() == '"') {
        json parsed = json::parse(v, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_string()) throw ConfigError(where + ": bad string " + std::string(v));
        return parsed;
    }
    if (v == "true") return true;
    if (v == "false") return false;
    json parsed = json::parse(v, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_number()) throw ConfigError(where + ": bad value " + std::string(v));
    return parsed;
}

json parse_value(std::string_view v, const std::string& where) {
    v = trim(v);
    if (!v.empty() && v.front() == '[') {
        if (v.back() != ']') throw ConfigError(where + ": unterminated array");
        json arr = json::array();
        std::string_view body = trim(v.substr(1, v.size() - 2));
        while (!body.empty()) {
            std::size_t end = 0;
            bool quoted = false;
            while (end < body.size() && (quoted || body[end] != ',')) {
                if (body[end] == '"') quoted = !quoted;
                ++end;
            }
            arr.push_back(parse_scalar(body.substr(0, end), where));
            body = end < body.size() ? trim(body.substr(end + 1)) : std::string_view{};
        }
        return arr;
    }
    return parse_scalar(v, where);
}

void check_key(std::string_view key, const std::string& where) {
    if (key.empty()) throw ConfigError(where + ": empty key");
    for (char c : key) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) {
            throw ConfigError(where + ": bad key '" + std::string(key) + "'");
        }
    }
}

}  // namespace

json parse_toml_subset(std::string_view text) {
    json root = json::object();
    json* section = &root;
    std::size_t lineno = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string where = "line " + std::to_string(lineno);
        std::string_view line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
            const std::string_view name = trim(line.substr(1, line.size() - 2));
            check_key(name, where);
            if (root.contains(name) && !root[std::string(name)].is_object()) {
                throw ConfigError(where + ": section '" + std::string(name) + "' clashes with a key");
            }
            section = &root[std::string(name)];
            if (section->is_null()) *section = json::object();
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
        const std::string_view key = trim(line.substr(0, eq));
        check_key(key, where);
        if (section->contains(key)) throw ConfigError(where + ": duplicate key '" + std::string(key) + "'");
        (*section)[std::string(key)] = parse_value(line.substr(eq + 1), where);
    }
    return root;
}

json parse_config_text(std::string_view text) {
    const std::string_view t = trim(text);
    if (!t.empty() && t.front() == '{') {
        json j = json::parse(t, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw ConfigError("config is not a JSON object");
        return j;
    }
    return parse_toml_subset(text);
}

json read_config_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot read config " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

void set_config_value(json& tree, const std::string& dotted_key, const std::string& value) {
    json* node = &tree;
    std::string_view rest = dotted_key;
    for (auto dot = rest.find('.'); dot != std::string_view::npos; dot = rest.find('.')) {
        const std::string part(rest.substr(0, dot));
        check_key(part, "override");
        json& child = (*node)[part];
        if (child.is_null()) child = json::object();
        if (!child.is_object()) throw ConfigError("override '" + dotted_key + "' descends into a non-section");
        node = &child;
        rest.remove_prefix(dot + 1);
    }
    check_key(rest, "override");
    // Bare words are taken as strings so that `--set mode=pipelined` works.
    json v;
    try {
        v = parse_value(value, "override " + dotted_key);
    } catch (const ConfigError&) {
        v = value;
    }
    (*node)[std::string(rest)] = v;
}

std::string config_hash(const json& tree) { return hex64(fnv1a(tree.dump())); }

namespace {

class Reader {
public:
    Reader(const json& obj, std::string section) : obj_(obj), section_(std::move(section)) {
        if (!obj_.is_object()) throw ConfigError(name("") + " must be a table");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = obj_.find(key);
        if (it == obj_.end() || it->is_null()) return;
        try {
            if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t> ||
                          std::is_same_v<T, int>) {
                if (!it->is_number_integer()) throw ConfigError("");
                if (it->is_number_integer() && !it->is_number_unsigned() && it->template get<long long>() < 0) {
                    throw ConfigError("");
                }
            }
            if constexpr (std::is_same_v<T, double>) {
                if (!it->is_number()) throw ConfigError("");
            }
            if constexpr (std::is_same_v<T, bool>) {
                if (!it->is_boolean()) throw ConfigError("");
            }
            if constexpr (std::is_same_v<T, std::string>) {
                if (!it->is_string()) throw ConfigError("");
            }
            out = it->template get<T>();
        } catch (const std::exception&) {
            throw ConfigError("config key " + name(key) + " has the wrong type: " + it->dump());
        }
    }

    template <typename T>
    void get_opt(const char* key, std::optional<T>& out) {
        seen_.insert(key);
        auto it = obj_.find(key);
        if (it == obj_.end() || it->is_null()) return;
        T v{};
        get(key, v);
        out = v;
    }

    void get_path(const char* key, std::filesystem::path& out, const std::filesystem::path& base) {
        std::string s;
        get(key, s);
        if (s.empty()) return;
        std::filesystem::path p(s);
        out = p.is_relative() && !base.empty() ? base / p : p;
    }

    bool has(const char* key) const { return obj_.contains(key); }
    const json& sub(const char* key) {
        seen_.insert(key);
        return obj_.at(key);
    }

    void finish() const {
        for (auto& [k, v] : obj_.items()) {
            if (!seen_.count(k)) throw ConfigError("unknown config key " + name(k));
        }
    }

private:
    std::string name(std::string_view key) const {
        return "'" + (section_.empty() ? std::string(key) : section_ + "." + std::string(key)) + "'";
    }

    const json& obj_;
    std::string section_;
    std::set<std::string> seen_;
};

RemoteEndpoint read_endpoint(Reader& r) {
    RemoteEndpoint e;
    r.get("endpoint", e.url);
    r.get("timeout_s", e.timeout_s);
    r.get("retries", e.retries);
    r.get("backoff_ms", e.backoff_ms);
    parse_url(e.url);
    return e;
}

}  // namespace

AppConfig config_from_tree(const json& tree, const std::filesystem::path& base_dir) {
    AppConfig c;
    c.tree = tree;
    Reader r(tree, "");
    StageConfig& s = c.stage;
    r.get("T", s.T);
    r.get("N", s.N);
    r.get("L", s.L);
    r.get("screening_length", s.screening_length);
    r.get("percentile_k", s.percentile_k);
    r.get("tau_pos", s.tau_pos);
    r.get("K", s.K);
    r.get("chunk_len", s.chunk_len);
    r.get("seed", s.seed);
    r.get("stage_seeds", s.stage_seeds);
    std::string mode = std::string(mode_name(s.mode));
    r.get("mode", mode);
    if (mode == "strict") {
        s.mode = RunMode::strict;
    } else if (mode == "pipelined") {
        s.mode = RunMode::pipelined;
    } else {
        throw ConfigError("mode must be strict or pipelined, got '" + mode + "'");
    }
    std::string submode = std::string(submode_name(s.submode));
    r.get("pipelined_submode", submode);
    if (submode == "strict_on_policy") {
        s.submode = PipelineSubmode::strict_on_policy;
    } else if (submode == "latest_snapshot") {
        s.submode = PipelineSubmode::latest_snapshot;
    } else {
        throw ConfigError("pipelined_submode must be strict_on_policy or latest_snapshot");
    }
    std::string policy = std::string(policy_name(s.screening_policy));
    r.get("screening_policy", policy);
    if (policy == "on_policy") {
        s.screening_policy = ScreeningPolicy::on_policy;
    } else if (policy == "static") {
        s.screening_policy = ScreeningPolicy::static_base;
    } else {
        throw ConfigError("screening_policy must be on_policy or static");
    }
    r.get("docs_per_stage", s.docs_per_stage);
    r.get("sample_with_replacement", s.sample_with_replacement);
    r.get("min_spacing", s.min_spacing);
    r.get("window_left", s.window_left);
    r.get("window_right", s.window_right);
    r.get("corpus_wide_percentile", s.corpus_wide_percentile);
    r.get_opt("absolute_tau", s.absolute_tau);
    r.get_opt("max_positives_per_position", s.max_positives_per_position);
    r.get("workers", s.workers);
    r.get("batch_docs", s.batch_docs);

    if (r.has("paths")) {
        Reader p(r.sub("paths"), "paths");
        p.get_path("store", c.paths.store, base_dir);
        p.get_path("index", c.paths.index, base_dir);
        p.get_path("base_snapshot", c.paths.base_snapshot, base_dir);
        p.get_path("base_corpus", c.paths.base_corpus, base_dir);
        p.get_path("run_root", c.paths.run_root, base_dir);
        p.finish();
    } else if (!base_dir.empty()) {
        c.paths.run_root = base_dir / c.paths.run_root;
    }
    if (r.has("scorer")) {
        Reader p(r.sub("scorer"), "scorer");
        p.get("order", c.ngram.order);
        p.get("lambda", c.ngram.lambda);
        p.get("alpha", c.ngram.alpha);
        p.get("vocab", c.ngram.vocab);
        if (p.has("endpoint")) c.scorer_endpoint = read_endpoint(p);
        p.finish();
    }
    if (r.has("embedder")) {
        Reader p(r.sub("embedder"), "embedder");
        p.get("dim", c.tfidf.dim);
        p.get("shingle", c.tfidf.shingle);
        if (p.has("endpoint")) c.embedder_endpoint = read_endpoint(p);
        p.finish();
    }
    if (r.has("trainer")) {
        Reader p(r.sub("trainer"), "trainer");
        p.get("kind", c.trainer);
        p.get("timeout_s", c.trainer_timeout_s);
        p.finish();
    }
    r.finish();

    if (c.ngram.order < 2) throw ConfigError("scorer.order must be >= 2");
    if (!(c.ngram.lambda >= 0.0 && c.ngram.lambda <= 1.0)) throw ConfigError("scorer.lambda must be in [0, 1]");
    if (!(c.ngram.alpha > 0.0)) throw ConfigError("scorer.alpha must be > 0");
    if (c.tfidf.dim == 0 || c.tfidf.dim % 8 != 0) throw ConfigError("embedder.dim must be a positive multiple of 8");
    if (c.tfidf.shingle == 0) throw ConfigError("embedder.shingle must be >= 1");
    s.validate();
    return c;
}

}  // namespace lcsynth
