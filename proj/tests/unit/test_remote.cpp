#include <doctest.h>

#include <atomic>
#include <cmath>
#include <functional>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "lcsynth/errors.hpp"
#include "lcsynth/remote.hpp"
#include "lcsynth/util.hpp"

using namespace lcsynth;
using nlohmann::json;

namespace {

/// In-process HTTP server on an ephemeral port, stopped on destruction.
class MockServer {
public:
    using Handler = std::function<void(const json& body, httplib::Response& res)>;

    explicit MockServer(Handler handler) : handler_(std::move(handler)) {
        svr_.Post("/api", [this](const httplib::Request& req, httplib::Response& res) {
            ++requests;
            handler_(json::parse(req.body), res);
        });
        port_ = svr_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { svr_.listen_after_bind(); });
        svr_.wait_until_ready();
    }
    ~MockServer() {
        svr_.stop();
        thread_.join();
    }

    RemoteEndpoint endpoint(int retries = 2) const {
        RemoteEndpoint e;
        e.url = "http://127.0.0.1:" + std::to_string(port_) + "/api";
        e.timeout_s = 5.0;
        e.retries = retries;
        e.backoff_ms = 1;
        return e;
    }

    std::atomic<int> requests{0};

private:
    httplib::Server svr_;
    Handler handler_;
    int port_ = 0;
    std::thread thread_;
};

void reply(httplib::Response& res, const json& j) { res.set_content(j.dump(), "application/json"); }

/// Serves the built-in model over the wire protocol.
MockServer::Handler builtin_backend(std::shared_ptr<const BuiltinScorer> s) {
    return [s](const json& body, httplib::Response& res) {
        const auto prefix = body["prefix_tokens"].get<std::vector<TokenId>>();
        const auto target = body["target_tokens"].get<std::vector<TokenId>>();
        const auto pos = body["positions"].get<std::vector<std::size_t>>();
        const auto v = body["mode"] == "loss" ? s->loss_at(prefix, target, pos) : s->conditional_entropy(prefix, target, pos);
        reply(res, {{"values", v}});
    };
}

std::shared_ptr<const BuiltinScorer> trained_scorer() {
    Rng rng(4);
    std::vector<TokenId> data(3000);
    for (auto& t : data) t = static_cast<TokenId>(97 + uniform_below(rng, 6));
    auto m = std::make_shared<const CacheNgramModel>(CacheNgramModel().trained(std::vector<std::vector<TokenId>>{data}));
    return std::make_shared<const BuiltinScorer>(m, make_builtin_state(0, m).snapshot);
}

ScorerSnapshot snap() { return {"M0-remote", 0, ScorerBackend::remote}; }

}  // namespace

TEST_SUITE("remote") {

TEST_CASE("url parsing") {
    const auto u = parse_url("http://example.org:8080/v1/score");
    CHECK(u.host == "example.org");
    CHECK(u.port == 8080);
    CHECK(u.path == "/v1/score");
    CHECK(parse_url("http://h").path == "/");
    CHECK(parse_url("http://h").port == 80);
    CHECK_THROWS_AS(parse_url("https://h/"), ConfigError);
    CHECK_THROWS_AS(parse_url("http://h:99999/"), ConfigError);
    CHECK_THROWS_AS(parse_url("http://:80/"), ConfigError);
}

TEST_CASE("echoed entropies come back unchanged") {
    const std::vector<double> table{0.5, 1.25, 2.0, 0.0, 3.5};
    MockServer srv([&](const json& body, httplib::Response& res) {
        std::vector<double> v;
        for (auto p : body["positions"]) v.push_back(table.at(p.get<std::size_t>()));
        reply(res, {{"values", v}});
    });
    const RemoteScorer s(srv.endpoint(), snap(), 256);
    const TokenSequence seq{"d", {1, 2, 3, 4, 5}, {}};
    CHECK(entropy_profile(s, seq).entropies == table);
}

TEST_CASE("remote scoring equals the served model") {
    const auto local = trained_scorer();
    MockServer srv(builtin_backend(local));
    const RemoteScorer remote(srv.endpoint(), snap(), 256);
    Rng rng(6);
    std::vector<TokenId> x(300);
    for (auto& t : x) t = static_cast<TokenId>(97 + uniform_below(rng, 6));
    CHECK(remote.entropies(x, 0) == local->entropies(x, 0));
    CHECK(remote.entropies(x, 64) == local->entropies(x, 64));
    const std::vector<TokenId> pre(x.begin(), x.begin() + 40);
    const std::vector<std::size_t> pos{0, 7, 99};
    CHECK(remote.conditional_entropy(pre, x, pos) == local->conditional_entropy(pre, x, pos));
    CHECK(remote.loss_at(pre, x, pos) == local->loss_at(pre, x, pos));
}

TEST_CASE("a transient failure is retried to the successful result") {
    const auto local = trained_scorer();
    const auto backend = builtin_backend(local);
    std::atomic<int> calls{0};
    MockServer srv([&](const json& body, httplib::Response& res) {
        if (calls++ == 0) {
            res.status = 503;
            return;
        }
        backend(body, res);
    });
    const RemoteScorer remote(srv.endpoint(), snap(), 256);
    const std::vector<TokenId> x{97, 98, 99, 97, 98, 99};
    const std::vector<std::size_t> pos{1, 5};
    CHECK(remote.conditional_entropy({}, x, pos) == local->conditional_entropy({}, x, pos));
    CHECK(srv.requests == 2);
}

TEST_CASE("persistent failure surfaces attempts and last status") {
    MockServer srv([](const json&, httplib::Response& res) { res.status = 500; });
    const RemoteScorer remote(srv.endpoint(3), snap(), 256);
    const std::vector<TokenId> x{1, 2};
    const std::vector<std::size_t> pos{0};
    try {
        remote.loss_at({}, x, pos);
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.attempts() == 4);
        CHECK(e.last_status() == 500);
    }
    CHECK(srv.requests == 4);
}

TEST_CASE("client errors are not retried") {
    MockServer srv([](const json&, httplib::Response& res) { res.status = 400; });
    try {
        post_json(srv.endpoint(5), json::object());
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.attempts() == 1);
        CHECK(e.last_status() == 400);
    }
}

TEST_CASE("unreachable endpoint") {
    RemoteEndpoint e;
    e.url = "http://127.0.0.1:1/api";
    e.retries = 1;
    e.backoff_ms = 1;
    e.timeout_s = 1.0;
    try {
        post_json(e, json::object());
        FAIL("expected TransportError");
    } catch (const TransportError& err) {
        CHECK(err.attempts() == 2);
        CHECK(err.last_status() == -1);
    }
}

TEST_CASE("contract violations are protocol errors") {
    const std::vector<TokenId> x{1, 2, 3};
    const std::vector<std::size_t> pos{0, 1};
    auto check_bad = [&](json payload) {
        MockServer srv([&](const json&, httplib::Response& res) { reply(res, payload); });
        const RemoteScorer s(srv.endpoint(), snap(), 256);
        CHECK_THROWS_AS(s.conditional_entropy({}, x, pos), ProtocolError);
    };
    check_bad({{"values", {1.0}}});
    check_bad({{"values", {1.0, "x"}}});
    check_bad({{"values", {1.0, -0.5}}});
    check_bad({{"values", {1.0, 9.0}}});  // above ln 256
    check_bad({{"other", 1}});

    MockServer garbage([](const json&, httplib::Response& res) { res.set_content("not json", "text/plain"); });
    CHECK_THROWS_AS(post_json(garbage.endpoint(), json::object()), ProtocolError);
}

TEST_CASE("remote embedder normalizes and validates vectors") {
    MockServer srv([](const json& body, httplib::Response& res) {
        json vecs = json::array();
        for (const auto& t : body["texts"]) {
            std::vector<double> v(8, 0.0);
            v[t.get<std::string>().size() % 8] = 3.0;
            v[0] += 4.0;
            vecs.push_back(v);
        }
        reply(res, {{"vectors", vecs}});
    });
    const RemoteEmbedder e(srv.endpoint(), 8, std::make_shared<const ByteTokenizer>());
    const std::vector<TokenId> x{'a', 'b', 'c'};
    const auto v = e.embed(x);
    REQUIRE(v.size() == 8);
    double n = 0.0;
    for (float f : v) n += static_cast<double>(f) * f;
    CHECK(std::abs(n - 1.0) < 1e-6);
    CHECK(v[3] == doctest::Approx(0.6));

    const RemoteEmbedder wrong(srv.endpoint(), 16, std::make_shared<const ByteTokenizer>());
    CHECK_THROWS_AS(wrong.embed(x), ProtocolError);
}

}  // TEST_SUITE
