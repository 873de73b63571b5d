#include <doctest.h>

#include "lcsynth/config.hpp"
#include "lcsynth/errors.hpp"

using namespace lcsynth;
using nlohmann::json;

TEST_SUITE("config") {

TEST_CASE("flat toml subset with sections, arrays and comments") {
    const auto j = parse_toml_subset(R"(
# run
T = 3
N = 100000      # tokens
percentile_k = 2.5
mode = "pipelined"
stage_seeds = [7, 8, 9]

[scorer]
lambda = 0.5
endpoint = "http://127.0.0.1:9/score#x"

[paths]
store = "data/store.jsonl"
)");
    CHECK(j["T"] == 3);
    CHECK(j["percentile_k"] == 2.5);
    CHECK(j["stage_seeds"] == json::array({7, 8, 9}));
    CHECK(j["scorer"]["lambda"] == 0.5);
    CHECK(j["scorer"]["endpoint"] == "http://127.0.0.1:9/score#x");

    const auto c = config_from_tree(j, "/base");
    CHECK(c.stage.T == 3);
    CHECK(c.stage.mode == RunMode::pipelined);
    CHECK(c.stage.stage_seeds == std::vector<std::uint64_t>{7, 8, 9});
    CHECK(c.ngram.lambda == 0.5);
    CHECK(c.paths.store == std::filesystem::path("/base/data/store.jsonl"));
    REQUIRE(c.scorer_endpoint);
    CHECK(c.scorer_endpoint->url == "http://127.0.0.1:9/score#x");
}

TEST_CASE("malformed toml names the line") {
    try {
        parse_toml_subset("T = 1\nthis is wrong\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_toml_subset("T = 1\nT = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_toml_subset("[open\n"), ConfigError);
    CHECK_THROWS_AS(parse_toml_subset("x = [1, 2\n"), ConfigError);
}

TEST_CASE("json and toml give the same tree") {
    CHECK(parse_config_text(R"({"T": 2, "scorer": {"order": 4}})") == parse_config_text("T = 2\n[scorer]\norder = 4\n"));
}

TEST_CASE("dotted overrides") {
    json t = parse_config_text("T = 2\n");
    set_config_value(t, "scorer.lambda", "0.25");
    set_config_value(t, "mode", "pipelined");
    set_config_value(t, "T", "4");
    CHECK(t["scorer"]["lambda"] == 0.25);
    CHECK(t["mode"] == "pipelined");
    CHECK(t["T"] == 4);
    CHECK_THROWS_AS(set_config_value(t, "T.x", "1"), ConfigError);
    const auto c = config_from_tree(t);
    CHECK(c.stage.T == 4);
    CHECK(c.ngram.lambda == 0.25);
}

TEST_CASE("unknown keys and ill-typed values are rejected") {
    CHECK_THROWS_AS(config_from_tree(parse_config_text("bogus = 1\n")), ConfigError);
    CHECK_THROWS_AS(config_from_tree(parse_config_text("[scorer]\nbogus = 1\n")), ConfigError);
    CHECK_THROWS_AS(config_from_tree(parse_config_text("T = \"four\"\n")), ConfigError);
    CHECK_THROWS_AS(config_from_tree(parse_config_text("T = -1\n")), ConfigError);
    CHECK_THROWS_AS(config_from_tree(parse_config_text("mode = \"fast\"\n")), ConfigError);
    CHECK_THROWS_AS(config_from_tree(parse_config_text("[scorer]\nlambda = 2\n")), ConfigError);
    CHECK_THROWS_AS(config_from_tree(parse_config_text("[embedder]\ndim = 12\n")), ConfigError);
    CHECK_THROWS_AS(config_from_tree(parse_config_text("N = 10\n")), ConfigError);  // N < L
}

TEST_CASE("defaults") {
    const auto c = config_from_tree(json::object());
    CHECK(c.stage.T == 4);
    CHECK(c.stage.N == 200000);
    CHECK(c.stage.L == 4096);
    CHECK(c.stage.screening_length == 2048);
    CHECK(c.stage.percentile_k == 5.0);
    CHECK(c.stage.tau_pos == 0.3);
    CHECK(c.stage.K == 8);
    CHECK(c.stage.chunk_len == 512);
    CHECK(c.trainer == "builtin");
    CHECK(config_hash(json::object()) == config_hash(json::object()));
    CHECK(config_hash(json{{"T", 1}}) != config_hash(json{{"T", 2}}));
}

}  // TEST_SUITE
