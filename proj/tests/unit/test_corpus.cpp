#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "lcsynth/corpus.hpp"
#include "lcsynth/errors.hpp"
#include "lcsynth/util.hpp"

using namespace lcsynth;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("lcsynth_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

DocumentStore store_of(std::size_t n_source, std::size_t n_retrieval = 0) {
    DocumentStore s;
    for (std::size_t i = 0; i < n_source; ++i) s.add({"s" + std::to_string(i), "text " + std::to_string(i)});
    for (std::size_t i = 0; i < n_retrieval; ++i) {
        s.add({"r" + std::to_string(i), "ref " + std::to_string(i), CorpusKind::retrieval});
    }
    return s;
}

std::vector<std::string> ids_of(const std::vector<Document>& docs) {
    std::vector<std::string> out;
    for (const auto& d : docs) out.push_back(d.id);
    return out;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("ingest counts well-formed lines") {
    DocumentStore s;
    std::istringstream in(R"({"id":"a","text":"x"}
{"id":"b","text":"y"}
{"id":"c","text":"z"}
)");
    const auto r = s.ingest(in, CorpusKind::source);
    CHECK(r.accepted == 3);
    CHECK(r.errors.empty());
    CHECK(s.size() == 3);
}

TEST_CASE("ingest skips a record without text and reports it") {
    DocumentStore s;
    std::istringstream in(R"({"id":"a","text":"x"}
{"id":"b"}
{"id":"c","text":"z"}
)");
    const auto r = s.ingest(in, CorpusKind::source);
    CHECK(r.accepted == 2);
    REQUIRE(r.errors.size() == 1);
    CHECK(r.errors[0].line == 2);
}

TEST_CASE("ingest of an empty stream") {
    DocumentStore s;
    std::istringstream in("");
    const auto r = s.ingest(in, CorpusKind::source);
    CHECK(r.accepted == 0);
    CHECK(r.errors.empty());
}

TEST_CASE("ingest rejects duplicates, bad json, empty text and mismatched source") {
    DocumentStore s;
    std::istringstream in(R"({"id":"a","text":"x"}
{"id":"a","text":"again"}
not json
{"id":"e","text":""}
{"id":"f","text":"t","source":"retrieval"}
{"id":"g","text":"t","source":"bogus"}
{"id":"h","text":"t","source":"source_corpus"}
)");
    const auto r = s.ingest(in, CorpusKind::source);
    CHECK(r.accepted == 2);
    CHECK(r.errors.size() == 5);
    CHECK(s.find("a")->text == "x");
    CHECK(s.find("h") != nullptr);
}

TEST_CASE("file-backed store replays appended records") {
    const auto dir = temp_dir("store");
    {
        auto s = DocumentStore::open(dir / "store.jsonl");
        std::istringstream a(R"({"id":"a","text":"alpha"})");
        std::istringstream b(R"({"id":"b","text":"beta"})");
        s.ingest(a, CorpusKind::source);
        s.ingest(b, CorpusKind::retrieval);
    }
    auto s = DocumentStore::open(dir / "store.jsonl");
    REQUIRE(s.size() == 2);
    CHECK(s.at(0).id == "a");
    CHECK(s.at(1).source == CorpusKind::retrieval);
    CHECK(s.count(CorpusKind::source) == 1);
}

TEST_CASE("tokenize is byte identity") {
    const auto seq = tokenize({"d", "ab"});
    CHECK(seq.tokens == std::vector<TokenId>{97, 98});
    CHECK(seq.doc_id == "d");
    CHECK_THROWS_AS(tokenize({"d", ""}), ParameterError);
}

TEST_CASE("detokenize inverts tokenize on random UTF-8") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::string s;
        while (s.size() < 1024) {
            const auto cp = static_cast<std::uint32_t>(1 + uniform_below(rng, 0x10FFFF));
            if (cp >= 0xD800 && cp <= 0xDFFF) continue;
            if (cp < 0x80) {
                s += static_cast<char>(cp);
            } else if (cp < 0x800) {
                s += static_cast<char>(0xC0 | (cp >> 6));
                s += static_cast<char>(0x80 | (cp & 0x3F));
            } else if (cp < 0x10000) {
                s += static_cast<char>(0xE0 | (cp >> 12));
                s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
                s += static_cast<char>(0x80 | (cp & 0x3F));
            } else {
                s += static_cast<char>(0xF0 | (cp >> 18));
                s += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
                s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
                s += static_cast<char>(0x80 | (cp & 0x3F));
            }
        }
        const auto seq = tokenize({"r", s});
        CHECK(seq.tokens.size() == s.size());
        CHECK(detokenize(seq.tokens) == s);
    }
}

TEST_CASE("chunk lengths") {
    TokenSequence seq{"d", std::vector<TokenId>(10, 1), {}};
    std::vector<std::size_t> lens;
    for (const auto& c : chunk(seq, 4)) lens.push_back(c.length);
    CHECK(lens == std::vector<std::size_t>{4, 4, 2});

    seq.tokens.resize(4);
    const auto one = chunk(seq, 4);
    REQUIRE(one.size() == 1);
    CHECK(one[0].length == 4);
    CHECK_THROWS_AS(chunk(seq, 0), ParameterError);
}

TEST_CASE("chunk concatenation reproduces the sequence") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        TokenSequence seq{"d", {}, {}};
        const auto n = uniform_below(rng, 500);
        for (std::uint64_t i = 0; i < n; ++i) seq.tokens.push_back(static_cast<TokenId>(uniform_below(rng, 256)));
        const auto len = 1 + uniform_below(rng, 64);
        std::vector<TokenId> joined;
        std::size_t expect_start = 0;
        for (const auto& c : chunk(seq, len)) {
            CHECK(c.start == expect_start);
            CHECK(c.tokens.size() == c.length);
            CHECK(c.length <= len);
            CHECK(c.length > 0);
            expect_start += c.length;
            joined.insert(joined.end(), c.tokens.begin(), c.tokens.end());
        }
        CHECK(joined == seq.tokens);
    }
}

TEST_CASE("sampling every document returns a seed-determined permutation") {
    const auto s = store_of(10, 3);
    const auto a = sample_stage_docs(s, 10, 42, {});
    const auto b = sample_stage_docs(s, 10, 42, {});
    const auto c = sample_stage_docs(s, 10, 43, {});
    CHECK(ids_of(a) == ids_of(b));
    CHECK(ids_of(a) != ids_of(c));
    const auto ids = ids_of(a);
    std::set<std::string> got(ids.begin(), ids.end());
    CHECK(got.size() == 10);
    for (const auto& id : got) CHECK(id[0] == 's');
}

TEST_CASE("stages drawn through the ledger are disjoint") {
    const auto s = store_of(10);
    SampleLedger ledger;
    const auto first = ids_of(sample_stage_docs(s, 5, 1, ledger));
    ledger.record(first);
    const auto second = ids_of(sample_stage_docs(s, 5, 2, ledger));
    std::set<std::string> a(first.begin(), first.end());
    for (const auto& id : second) CHECK(a.count(id) == 0);
    CHECK(a.size() + second.size() == 10);
}

TEST_CASE("sampling reports the shortfall") {
    const auto s = store_of(10);
    SampleLedger ledger;
    ledger.record(ids_of(sample_stage_docs(s, 7, 1, ledger)));
    try {
        sample_stage_docs(s, 5, 2, ledger);
        FAIL("expected StageSetupError");
    } catch (const StageSetupError& e) {
        CHECK(e.shortfall() == 2);
    }
    SampleOptions repl;
    repl.with_replacement = true;
    CHECK(sample_stage_docs(s, 5, 2, ledger, repl).size() == 5);
}

}  // TEST_SUITE
