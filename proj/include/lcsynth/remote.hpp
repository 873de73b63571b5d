#pragma once

// JSON-over-HTTP clients for externally hosted scorers and embedders.
//
// Scorer:   POST {snapshot, prefix_tokens, target_tokens, positions, mode} -> {values}
// Embedder: POST {texts} -> {vectors}

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcsynth/retrieval.hpp"
#include "lcsynth/scorer.hpp"

namespace lcsynth {

struct RemoteEndpoint {
    std::string url;  // http://host:port/path
    double timeout_s = 30.0;
    int retries = 2;  // extra attempts after the first
    int backoff_ms = 50;
};

struct ParsedUrl {
    std::string scheme;
    std::string host;
    int port = 80;
    std::string path;
};

/// Throws ConfigError on anything but http://host[:port][/path].
ParsedUrl parse_url(const std::string& url);

/// POSTs a JSON body and returns the parsed JSON response. Connection
/// failures, timeouts, 5xx and 429 are retried; other non-2xx statuses fail
/// at once. Throws TransportError (with attempt count and last status) or
/// ProtocolError for an unparseable body.
nlohmann::json post_json(const RemoteEndpoint& endpoint, const nlohmann::json& body);

class RemoteScorer final : public Scorer {
public:
    RemoteScorer(RemoteEndpoint endpoint, ScorerSnapshot snapshot, std::size_t vocab_size);

    const ScorerSnapshot& snapshot() const override { return snapshot_; }
    std::size_t vocab_size() const override { return vocab_; }

    std::vector<double> entropies(std::span<const TokenId> tokens, std::size_t window) const override;
    std::vector<double> conditional_entropy(std::span<const TokenId> prepend, std::span<const TokenId> seq,
                                            std::span<const std::size_t> positions) const override;
    std::vector<double> loss_at(std::span<const TokenId> prepend, std::span<const TokenId> seq,
                                std::span<const std::size_t> positions) const override;

private:
    std::vector<double> request(std::span<const TokenId> prefix, std::span<const TokenId> target,
                                std::span<const std::size_t> positions, const char* mode) const;

    RemoteEndpoint endpoint_;
    ScorerSnapshot snapshot_;
    std::size_t vocab_;
};

class RemoteEmbedder final : public Embedder {
public:
    /// Texts are produced from token lists with `tokenizer`.
    RemoteEmbedder(RemoteEndpoint endpoint, std::size_t dim, std::shared_ptr<const Tokenizer> tokenizer);

    std::size_t dim() const override { return dim_; }
    std::string fingerprint() const override;
    std::vector<float> embed(std::span<const TokenId> tokens) const override;
    std::vector<std::vector<float>> embed_batch(std::span<const std::span<const TokenId>> inputs) const override;

private:
    RemoteEndpoint endpoint_;
    std::size_t dim_;
    std::shared_ptr<const Tokenizer> tokenizer_;
};

}  // namespace lcsynth
