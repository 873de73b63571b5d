#include "lcsynth/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "binio.hpp"
#include "lcsynth/errors.hpp"
#include "lcsynth/util.hpp"

namespace lcsynth {

std::string_view backend_name(ScorerBackend backend) {
    return backend == ScorerBackend::remote ? "remote" : "builtin_cache_ngram";
}

EntropyProfile entropy_profile(const Scorer& scorer, const TokenSequence& seq, std::size_t window) {
    if (seq.tokens.empty()) throw ParameterError("entropy_profile: sequence '" + seq.doc_id + "' is empty");
    return {seq.doc_id, scorer.entropies(seq.tokens, window), scorer.snapshot().snapshot_id};
}

std::vector<double> conditional_entropy(const Scorer& scorer, std::span<const TokenId> prepend,
                                        const TokenSequence& seq, std::span<const std::size_t> positions) {
    return scorer.conditional_entropy(prepend, seq.tokens, positions);
}

std::vector<double> loss_at(const Scorer& scorer, std::span<const TokenId> prepend, const TokenSequence& seq,
                            std::span<const std::size_t> positions) {
    return scorer.loss_at(prepend, seq.tokens, positions);
}

// ---------------------------------------------------------------------------
// CacheNgramModel

namespace {

constexpr char kModelMagic[9] = "LCSNGRM1";
constexpr char kSnapshotMagic[9] = "LCSSNAP1";

double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

}  // namespace

CacheNgramModel::CacheNgramModel(NgramParams params) : params_(params) {
    if (params_.order < 2) throw ParameterError("n-gram order must be >= 2");
    if (params_.vocab == 0) throw ParameterError("vocab must be > 0");
    if (!(params_.lambda >= 0.0 && params_.lambda <= 1.0)) throw ParameterError("lambda must be in [0, 1]");
    if (!(params_.alpha > 0.0)) throw ParameterError("alpha must be > 0");
    base_ = params_.vocab + 1;
    std::uint64_t span = 1;
    for (std::size_t k = 1; k < params_.order; ++k) {
        if (span > std::numeric_limits<std::uint64_t>::max() / base_) {
            throw ParameterError("n-gram order too large for 64-bit context keys");
        }
        span *= base_;
    }
}

std::uint64_t CacheNgramModel::context_key(std::span<const TokenId> tokens, std::size_t pos) const {
    std::uint64_t key = 0;
    std::uint64_t mult = 1;
    for (std::size_t k = 1; k < params_.order; ++k) {
        const std::uint64_t c = pos >= k ? tokens[pos - k] : params_.vocab;
        key += c * mult;
        mult *= base_;
    }
    return key;
}

std::uint64_t CacheNgramModel::key_of(std::span<const TokenId> context) const {
    if (context.size() != params_.order - 1) throw ParameterError("context length must be order - 1");
    std::uint64_t key = 0;
    std::uint64_t mult = 1;
    for (std::size_t k = 1; k < params_.order; ++k) {
        const std::uint64_t c = context[context.size() - k];
        if (c > params_.vocab) throw ParameterError("context token outside vocabulary");
        key += c * mult;
        mult *= base_;
    }
    return key;
}

const CountRow* CacheNgramModel::row(std::uint64_t key) const {
    auto it = rows_.find(key);
    return it == rows_.end() ? nullptr : it->second.get();
}

std::uint64_t CacheNgramModel::count(std::span<const TokenId> context, TokenId next) const {
    const CountRow* r = row(key_of(context));
    if (!r) return 0;
    auto it = std::lower_bound(r->entries.begin(), r->entries.end(), next,
                               [](const auto& e, TokenId t) { return e.first < t; });
    return it != r->entries.end() && it->first == next ? it->second : 0;
}

std::uint64_t CacheNgramModel::context_total(std::span<const TokenId> context) const {
    const CountRow* r = row(key_of(context));
    return r ? r->total : 0;
}

CacheNgramModel CacheNgramModel::trained(std::span<const std::vector<TokenId>> sequences) const {
    std::vector<std::pair<std::uint64_t, TokenId>> events;
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.size();
    events.reserve(n);
    for (const auto& s : sequences) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] >= params_.vocab) throw ParameterError("training token outside vocabulary");
            events.emplace_back(context_key(s, i), s[i]);
        }
    }
    std::sort(events.begin(), events.end());

    CacheNgramModel out = *this;
    std::size_t i = 0;
    while (i < events.size()) {
        const std::uint64_t key = events[i].first;
        std::size_t j = i;
        while (j < events.size() && events[j].first == key) ++j;

        auto merged = std::make_shared<CountRow>();
        const CountRow* old = row(key);
        std::size_t a = 0;
        std::size_t b = i;
        const std::size_t na = old ? old->entries.size() : 0;
        while (a < na || b < j) {
            const TokenId ta = a < na ? old->entries[a].first : std::numeric_limits<TokenId>::max();
            const TokenId tb = b < j ? events[b].second : std::numeric_limits<TokenId>::max();
            const TokenId t = std::min(ta, tb);
            std::uint64_t c = 0;
            if (a < na && ta == t) c += old->entries[a++].second;
            while (b < j && events[b].second == t) {
                ++c;
                ++b;
            }
            merged->entries.emplace_back(t, c);
        }
        merged->total = (old ? old->total : 0) + (j - i);
        out.rows_[key] = std::move(merged);
        i = j;
    }
    out.total_ = total_ + events.size();
    return out;
}

std::uint64_t CacheNgramModel::fingerprint() const {
    std::uint64_t h = kFnvOffset;
    h = fnv1a_u64(params_.order, h);
    h = fnv1a_u64(params_.vocab, h);
    h = fnv1a_u64(std::bit_cast<std::uint64_t>(params_.lambda), h);
    h = fnv1a_u64(std::bit_cast<std::uint64_t>(params_.alpha), h);
    std::vector<std::uint64_t> keys;
    keys.reserve(rows_.size());
    for (const auto& [k, _] : rows_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    for (std::uint64_t k : keys) {
        const CountRow& r = *rows_.at(k);
        h = fnv1a_u64(k, h);
        h = fnv1a_u64(r.entries.size(), h);
        for (const auto& [t, c] : r.entries) {
            h = fnv1a_u64(t, h);
            h = fnv1a_u64(c, h);
        }
    }
    return h;
}

bool CacheNgramModel::same_counts(const CacheNgramModel& other) const {
    if (params_.order != other.params_.order || params_.vocab != other.params_.vocab ||
        params_.lambda != other.params_.lambda || params_.alpha != other.params_.alpha ||
        total_ != other.total_ || rows_.size() != other.rows_.size()) {
        return false;
    }
    for (const auto& [k, r] : rows_) {
        const CountRow* o = other.row(k);
        if (!o || o->total != r->total || o->entries != r->entries) return false;
    }
    return true;
}

void CacheNgramModel::save(std::ostream& out) const {
    out.write(kModelMagic, 8);
    binio::put_u64(out, params_.order);
    binio::put_u64(out, params_.vocab);
    binio::put_f64(out, params_.lambda);
    binio::put_f64(out, params_.alpha);
    std::vector<std::uint64_t> keys;
    keys.reserve(rows_.size());
    for (const auto& [k, _] : rows_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    binio::put_u64(out, keys.size());
    for (std::uint64_t k : keys) {
        const CountRow& r = *rows_.at(k);
        binio::put_u64(out, k);
        binio::put_u64(out, r.entries.size());
        for (const auto& [t, c] : r.entries) {
            binio::put_u32(out, t);
            binio::put_u64(out, c);
        }
    }
}

CacheNgramModel CacheNgramModel::load(std::istream& in) {
    binio::expect_magic(in, kModelMagic, "n-gram model");
    NgramParams p;
    p.order = binio::get_u64(in);
    p.vocab = binio::get_u64(in);
    p.lambda = binio::get_f64(in);
    p.alpha = binio::get_f64(in);
    CacheNgramModel m(p);
    const std::uint64_t n_rows = binio::get_u64(in);
    for (std::uint64_t i = 0; i < n_rows; ++i) {
        const std::uint64_t key = binio::get_u64(in);
        const std::uint64_t n = binio::get_u64(in);
        if (n > p.vocab) throw IoError("corrupt n-gram row");
        auto r = std::make_shared<CountRow>();
        r->entries.reserve(n);
        for (std::uint64_t e = 0; e < n; ++e) {
            const TokenId t = binio::get_u32(in);
            const std::uint64_t c = binio::get_u64(in);
            if (t >= p.vocab || (!r->entries.empty() && r->entries.back().first >= t)) {
                throw IoError("corrupt n-gram row");
            }
            r->entries.emplace_back(t, c);
            r->total += c;
        }
        m.total_ += r->total;
        m.rows_.emplace(key, std::move(r));
    }
    return m;
}

double CacheNgramModel::entropy(const CountRow* global, const CacheCounts& cache) const {
    const double alpha = params_.alpha;
    const double denom = static_cast<double>(global ? global->total : 0) + alpha * static_cast<double>(params_.vocab);
    const bool use_cache = cache.total > 0;
    const double wg = use_cache ? params_.lambda : 1.0;
    const double wc = use_cache ? 1.0 - params_.lambda : 0.0;
    const double cache_total = static_cast<double>(cache.total);

    // Tokens absent from both the global row and the cache share one probability.
    static const std::vector<std::pair<TokenId, std::uint64_t>> kEmpty;
    const auto& ge = global ? global->entries : kEmpty;
    const auto& ce = cache.entries;
    double h = 0.0;
    std::size_t touched = 0;
    std::size_t a = 0;
    std::size_t b = 0;
    while (a < ge.size() || b < ce.size()) {
        const TokenId ta = a < ge.size() ? ge[a].first : std::numeric_limits<TokenId>::max();
        const TokenId tb = b < ce.size() ? ce[b].first : std::numeric_limits<TokenId>::max();
        const TokenId t = std::min(ta, tb);
        double gc = 0.0;
        double cc = 0.0;
        if (a < ge.size() && ta == t) gc = static_cast<double>(ge[a++].second);
        if (b < ce.size() && tb == t) cc = static_cast<double>(ce[b++].second);
        double p = wg * (gc + alpha) / denom;
        if (use_cache) p += wc * cc / cache_total;
        h -= xlogx(p);
        ++touched;
    }
    const double rest = wg * (0.0 + alpha) / denom;
    h -= static_cast<double>(params_.vocab - touched) * xlogx(rest);
    return h > 0.0 ? h : 0.0;
}

double CacheNgramModel::probability(const CountRow* global, const CacheCounts& cache, TokenId token) const {
    const double alpha = params_.alpha;
    const double denom = static_cast<double>(global ? global->total : 0) + alpha * static_cast<double>(params_.vocab);
    const bool use_cache = cache.total > 0;
    const double wg = use_cache ? params_.lambda : 1.0;
    const double wc = use_cache ? 1.0 - params_.lambda : 0.0;
    auto find = [token](const std::vector<std::pair<TokenId, std::uint64_t>>& v) -> double {
        auto it = std::lower_bound(v.begin(), v.end(), token, [](const auto& e, TokenId t) { return e.first < t; });
        return it != v.end() && it->first == token ? static_cast<double>(it->second) : 0.0;
    };
    const double gc = global ? find(global->entries) : 0.0;
    double p = wg * (gc + alpha) / denom;
    if (use_cache) p += wc * find(cache.entries) / static_cast<double>(cache.total);
    return p;
}

// ---------------------------------------------------------------------------
// BuiltinScorer

BuiltinScorer::BuiltinScorer(std::shared_ptr<const CacheNgramModel> model, ScorerSnapshot snapshot)
    : model_(std::move(model)), snapshot_(std::move(snapshot)) {
    if (!model_) throw ParameterError("BuiltinScorer requires a model");
}

namespace {

void check_tokens(std::span<const TokenId> tokens, std::size_t vocab) {
    for (TokenId t : tokens) {
        if (t >= vocab) throw ParameterError("token id " + std::to_string(t) + " outside vocabulary");
    }
}

// Sorted sparse multiset of tokens, with a dense count array for O(1) updates.
class CacheAccumulator {
public:
    explicit CacheAccumulator(std::size_t vocab) : counts_(vocab, 0) {}

    void add(TokenId t) {
        if (counts_[t]++ == 0) active_.insert(std::upper_bound(active_.begin(), active_.end(), t), t);
        ++total_;
    }

    void remove(TokenId t) {
        if (--counts_[t] == 0) active_.erase(std::lower_bound(active_.begin(), active_.end(), t));
        --total_;
    }

    void snapshot(CacheCounts& out) const {
        out.entries.clear();
        for (TokenId t : active_) out.entries.emplace_back(t, counts_[t]);
        out.total = total_;
    }

private:
    std::vector<std::uint64_t> counts_;
    std::vector<TokenId> active_;
    std::uint64_t total_ = 0;
};

}  // namespace

std::vector<double> BuiltinScorer::profile(std::span<const TokenId> tokens, std::size_t window, Quantity what) const {
    const CacheNgramModel& m = *model_;
    const std::size_t ord = m.params().order - 1;
    if (window != 0 && window < m.params().order) {
        throw ParameterError("scoring window must be 0 or >= the n-gram order");
    }
    check_tokens(tokens, m.params().vocab);
    const std::size_t n = tokens.size();
    std::vector<double> out(n, 0.0);
    if (n == 0) return out;

    std::vector<std::uint64_t> keys(n);
    for (std::size_t i = 0; i < n; ++i) keys[i] = m.context_key(tokens, i);
    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) { return keys[a] < keys[b]; });

    // Positions sharing a context form a group; each member's cache is the
    // earlier members whose own context lies inside the member's window.
    CacheAccumulator acc(m.params().vocab);
    CacheCounts cache;
    std::size_t g0 = 0;
    while (g0 < n) {
        std::size_t g1 = g0;
        while (g1 < n && keys[idx[g1]] == keys[idx[g0]]) ++g1;
        const CountRow* global = m.row(keys[idx[g0]]);
        std::size_t front = g0;
        for (std::size_t k = g0; k < g1; ++k) {
            const std::size_t p = idx[k];
            const std::size_t start = (window != 0 && p + 1 > window) ? p + 1 - window : 0;
            while (front < k && idx[front] < start + ord) acc.remove(tokens[idx[front++]]);
            acc.snapshot(cache);
            if (what == Quantity::entropy) {
                out[p] = m.entropy(global, cache);
            } else {
                out[p] = -std::log(m.probability(global, cache, tokens[p]));
            }
            acc.add(tokens[p]);
        }
        while (front < g1) acc.remove(tokens[idx[front++]]);
        g0 = g1;
    }
    return out;
}

std::vector<double> BuiltinScorer::at_positions(std::span<const TokenId> prepend, std::span<const TokenId> seq,
                                                std::span<const std::size_t> positions, Quantity what) const {
    const CacheNgramModel& m = *model_;
    for (std::size_t p : positions) {
        if (p >= seq.size()) {
            throw ParameterError("position " + std::to_string(p) + " out of range for sequence of length " +
                                 std::to_string(seq.size()));
        }
    }
    check_tokens(prepend, m.params().vocab);
    check_tokens(seq, m.params().vocab);
    std::vector<TokenId> concat;
    concat.reserve(prepend.size() + seq.size());
    concat.insert(concat.end(), prepend.begin(), prepend.end());
    concat.insert(concat.end(), seq.begin(), seq.end());

    std::size_t last = 0;
    for (std::size_t p : positions) last = std::max(last, prepend.size() + p);
    std::vector<std::uint64_t> keys(positions.empty() ? 0 : last + 1);
    for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = m.context_key(concat, i);

    std::vector<double> out;
    out.reserve(positions.size());
    CacheCounts cache;
    for (std::size_t p : positions) {
        const std::size_t a = prepend.size() + p;
        const std::uint64_t key = keys[a];
        cache.entries.clear();
        cache.total = 0;
        for (std::size_t j = 0; j < a; ++j) {
            if (keys[j] != key) continue;
            const TokenId t = concat[j];
            auto it = std::lower_bound(cache.entries.begin(), cache.entries.end(), t,
                                       [](const auto& e, TokenId v) { return e.first < v; });
            if (it != cache.entries.end() && it->first == t) {
                ++it->second;
            } else {
                cache.entries.insert(it, {t, 1});
            }
            ++cache.total;
        }
        const CountRow* global = m.row(key);
        if (what == Quantity::entropy) {
            out.push_back(m.entropy(global, cache));
        } else {
            out.push_back(-std::log(m.probability(global, cache, concat[a])));
        }
    }
    return out;
}

std::vector<double> BuiltinScorer::entropies(std::span<const TokenId> tokens, std::size_t window) const {
    return profile(tokens, window, Quantity::entropy);
}

std::vector<double> BuiltinScorer::losses(std::span<const TokenId> tokens, std::size_t window) const {
    return profile(tokens, window, Quantity::loss);
}

std::vector<double> BuiltinScorer::conditional_entropy(std::span<const TokenId> prepend, std::span<const TokenId> seq,
                                                       std::span<const std::size_t> positions) const {
    return at_positions(prepend, seq, positions, Quantity::entropy);
}

std::vector<double> BuiltinScorer::loss_at(std::span<const TokenId> prepend, std::span<const TokenId> seq,
                                           std::span<const std::size_t> positions) const {
    return at_positions(prepend, seq, positions, Quantity::loss);
}

// ---------------------------------------------------------------------------
// Snapshots

std::string builtin_snapshot_id(int stage, const CacheNgramModel& model) {
    return "M" + std::to_string(stage) + "-" + hex64(model.fingerprint());
}

ModelState make_builtin_state(int stage, std::shared_ptr<const CacheNgramModel> model) {
    if (!model) throw ParameterError("make_builtin_state: null model");
    ModelState s;
    s.snapshot.snapshot_id = builtin_snapshot_id(stage, *model);
    s.snapshot.stage_index = stage;
    s.snapshot.backend = ScorerBackend::builtin_cache_ngram;
    s.model = std::move(model);
    return s;
}

ModelState train_update(const ModelState& current, std::span<const std::vector<TokenId>> data) {
    if (!current.model) throw PreconditionError("train_update needs a built-in model snapshot");
    if (data.empty()) throw PreconditionError("train_update: no training data");
    auto next = std::make_shared<const CacheNgramModel>(current.model->trained(data));
    return make_builtin_state(current.snapshot.stage_index + 1, std::move(next));
}

void save_snapshot(const ModelState& state, const std::filesystem::path& file) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    const auto tmp = std::filesystem::path(file.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write snapshot " + file.string());
        out.write(kSnapshotMagic, 8);
        binio::put_str(out, state.snapshot.snapshot_id);
        binio::put_u64(out, static_cast<std::uint64_t>(state.snapshot.stage_index));
        binio::put_u32(out, state.snapshot.backend == ScorerBackend::remote ? 1u : 0u);
        binio::put_u32(out, state.model ? 1u : 0u);
        if (state.model) state.model->save(out);
        if (!out) throw IoError("failed writing snapshot " + file.string());
    }
    std::filesystem::rename(tmp, file);
}

ModelState load_snapshot(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot read snapshot " + file.string());
    binio::expect_magic(in, kSnapshotMagic, "snapshot");
    ModelState s;
    s.snapshot.snapshot_id = binio::get_str(in);
    s.snapshot.stage_index = static_cast<int>(binio::get_u64(in));
    s.snapshot.backend = binio::get_u32(in) == 1u ? ScorerBackend::remote : ScorerBackend::builtin_cache_ngram;
    if (binio::get_u32(in) == 1u) s.model = std::make_shared<const CacheNgramModel>(CacheNgramModel::load(in));
    return s;
}

}  // namespace lcsynth
