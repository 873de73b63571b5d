#include "lcsynth/remote.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "lcsynth/errors.hpp"
#include "lcsynth/util.hpp"

namespace lcsynth {

using nlohmann::json;

ParsedUrl parse_url(const std::string& url) {
    const std::string prefix = "http://";
    if (url.rfind(prefix, 0) != 0) throw ConfigError("endpoint must be an http:// URL: '" + url + "'");
    ParsedUrl u;
    u.scheme = "http";
    std::string rest = url.substr(prefix.size());
    const auto slash = rest.find('/');
    std::string authority = rest.substr(0, slash);
    u.path = slash == std::string::npos ? "/" : rest.substr(slash);
    const auto colon = authority.rfind(':');
    if (colon != std::string::npos) {
        try {
            std::size_t used = 0;
            u.port = std::stoi(authority.substr(colon + 1), &used);
            if (used != authority.size() - colon - 1 || u.port <= 0 || u.port > 65535) throw std::out_of_range("port");
        } catch (const std::exception&) {
            throw ConfigError("bad port in endpoint '" + url + "'");
        }
        authority.resize(colon);
    }
    if (authority.empty()) throw ConfigError("missing host in endpoint '" + url + "'");
    u.host = authority;
    return u;
}

json post_json(const RemoteEndpoint& endpoint, const json& body) {
    const ParsedUrl u = parse_url(endpoint.url);
    httplib::Client cli(u.host, u.port);
    const auto timeout = std::chrono::duration<double>(endpoint.timeout_s);
    cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

    const std::string payload = body.dump();
    const int attempts_allowed = 1 + std::max(0, endpoint.retries);
    int last_status = -1;
    std::string last_error;
    for (int attempt = 1; attempt <= attempts_allowed; ++attempt) {
        auto res = cli.Post(u.path, payload, "application/json");
        if (res) {
            last_status = res->status;
            if (res->status >= 200 && res->status < 300) {
                json out = json::parse(res->body, nullptr, false);
                if (out.is_discarded()) throw ProtocolError("response from " + endpoint.url + " is not valid JSON");
                return out;
            }
            last_error = "HTTP status " + std::to_string(res->status);
            const bool retryable = res->status >= 500 || res->status == 429;
            if (!retryable) {
                throw TransportError("request to " + endpoint.url + " failed: " + last_error, attempt, last_status);
            }
        } else {
            last_status = -1;
            last_error = httplib::to_string(res.error());
        }
        if (attempt < attempts_allowed && endpoint.backoff_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(endpoint.backoff_ms * attempt));
        }
    }
    throw TransportError("request to " + endpoint.url + " failed after " + std::to_string(attempts_allowed) +
                             " attempts: " + last_error,
                         attempts_allowed, last_status);
}

// ---------------------------------------------------------------------------
// RemoteScorer

RemoteScorer::RemoteScorer(RemoteEndpoint endpoint, ScorerSnapshot snapshot, std::size_t vocab_size)
    : endpoint_(std::move(endpoint)), snapshot_(std::move(snapshot)), vocab_(vocab_size) {
    snapshot_.backend = ScorerBackend::remote;
    parse_url(endpoint_.url);
}

std::vector<double> RemoteScorer::request(std::span<const TokenId> prefix, std::span<const TokenId> target,
                                          std::span<const std::size_t> positions, const char* mode) const {
    for (std::size_t p : positions) {
        if (p >= target.size()) {
            throw ParameterError("position " + std::to_string(p) + " out of range for sequence of length " +
                                 std::to_string(target.size()));
        }
    }
    json body = {{"snapshot", snapshot_.snapshot_id},
                 {"prefix_tokens", std::vector<TokenId>(prefix.begin(), prefix.end())},
                 {"target_tokens", std::vector<TokenId>(target.begin(), target.end())},
                 {"positions", std::vector<std::size_t>(positions.begin(), positions.end())},
                 {"mode", mode}};
    const json res = post_json(endpoint_, body);
    auto it = res.find("values");
    if (!res.is_object() || it == res.end() || !it->is_array()) {
        throw ProtocolError("scorer response lacks a 'values' array");
    }
    if (it->size() != positions.size()) {
        throw ProtocolError("scorer returned " + std::to_string(it->size()) + " values for " +
                            std::to_string(positions.size()) + " positions");
    }
    const bool entropy = std::string(mode) == "entropy";
    const double upper = std::log(static_cast<double>(vocab_)) + 1e-6;
    std::vector<double> out;
    out.reserve(positions.size());
    for (const auto& v : *it) {
        if (!v.is_number()) throw ProtocolError("scorer value is not a number");
        const double x = v.get<double>();
        if (!std::isfinite(x) || x < 0.0 || (entropy && x > upper)) {
            throw ProtocolError("scorer value out of range: " + v.dump());
        }
        out.push_back(x);
    }
    return out;
}

std::vector<double> RemoteScorer::entropies(std::span<const TokenId> tokens, std::size_t window) const {
    const std::size_t n = tokens.size();
    const std::size_t head = (window == 0 || n <= window) ? n : window;
    std::vector<std::size_t> positions(head);
    for (std::size_t i = 0; i < head; ++i) positions[i] = i;
    std::vector<double> out = request({}, tokens.first(head), positions, "entropy");
    // Beyond the first window each position is scored on its own trailing window.
    for (std::size_t i = head; i < n; ++i) {
        const std::size_t last = window - 1;
        auto v = request({}, tokens.subspan(i + 1 - window, window), std::span<const std::size_t>(&last, 1),
                         "entropy");
        out.push_back(v.front());
    }
    return out;
}

std::vector<double> RemoteScorer::conditional_entropy(std::span<const TokenId> prepend, std::span<const TokenId> seq,
                                                      std::span<const std::size_t> positions) const {
    return request(prepend, seq, positions, "entropy");
}

std::vector<double> RemoteScorer::loss_at(std::span<const TokenId> prepend, std::span<const TokenId> seq,
                                          std::span<const std::size_t> positions) const {
    return request(prepend, seq, positions, "loss");
}

// ---------------------------------------------------------------------------
// RemoteEmbedder

RemoteEmbedder::RemoteEmbedder(RemoteEndpoint endpoint, std::size_t dim, std::shared_ptr<const Tokenizer> tokenizer)
    : endpoint_(std::move(endpoint)), dim_(dim), tokenizer_(std::move(tokenizer)) {
    if (dim_ == 0 || dim_ % 8 != 0) throw ParameterError("remote embedding dim must be a positive multiple of 8");
    if (!tokenizer_) throw ParameterError("remote embedder needs a tokenizer");
    parse_url(endpoint_.url);
}

std::string RemoteEmbedder::fingerprint() const {
    return "remote:" + endpoint_.url + ":dim=" + std::to_string(dim_);
}

std::vector<float> RemoteEmbedder::embed(std::span<const TokenId> tokens) const {
    std::span<const TokenId> one[1] = {tokens};
    return std::move(embed_batch(one).front());
}

std::vector<std::vector<float>> RemoteEmbedder::embed_batch(std::span<const std::span<const TokenId>> inputs) const {
    json texts = json::array();
    for (auto in : inputs) {
        if (in.empty()) throw ParameterError("cannot embed an empty token list");
        texts.push_back(tokenizer_->detokenize(in));
    }
    const json res = post_json(endpoint_, json{{"texts", texts}});
    auto it = res.find("vectors");
    if (!res.is_object() || it == res.end() || !it->is_array()) {
        throw ProtocolError("embedder response lacks a 'vectors' array");
    }
    if (it->size() != inputs.size()) {
        throw ProtocolError("embedder returned " + std::to_string(it->size()) + " vectors for " +
                            std::to_string(inputs.size()) + " texts");
    }
    std::vector<std::vector<float>> out;
    out.reserve(inputs.size());
    for (const auto& v : *it) {
        if (!v.is_array() || v.size() != dim_) {
            throw ProtocolError("embedder vector has dimension " + std::to_string(v.is_array() ? v.size() : 0) +
                                ", expected " + std::to_string(dim_));
        }
        std::vector<float> vec;
        vec.reserve(dim_);
        for (const auto& x : v) {
            if (!x.is_number() || !std::isfinite(x.get<double>())) throw ProtocolError("embedder value not finite");
            vec.push_back(x.get<float>());
        }
        try {
            l2_normalize(vec);
        } catch (const ParameterError&) {
            throw ProtocolError("embedder returned a zero vector");
        }
        out.push_back(std::move(vec));
    }
    return out;
}

}  // namespace lcsynth
