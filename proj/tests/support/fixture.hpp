#pragma once

#include <memory>

#include "lcsynth/corpus.hpp"
#include "lcsynth/diagnostics.hpp"
#include "lcsynth/retrieval.hpp"
#include "lcsynth/scorer.hpp"

namespace lcsynth::testing {

struct PlantedFixture {
    PlantedCorpus corpus;
    DocumentStore store;
    std::shared_ptr<const TokenizedCorpus> roots;
    RetrievalContext retrieval;
    ModelState m0;
};

inline PlantedFixture make_planted_fixture(const PlantedParams& params, std::size_t chunk_len = 512,
                                           NgramParams ngram = {}, TfidfParams tfidf = {}) {
    PlantedFixture f;
    f.corpus = generate_planted_corpus(params);
    for (const auto& d : f.corpus.source) f.store.add(d);
    for (const auto& d : f.corpus.retrieval) f.store.add(d);
    std::vector<TokenSequence> roots;
    for (const auto& d : f.corpus.source) roots.push_back(tokenize(d));
    f.roots = std::make_shared<const TokenizedCorpus>(std::move(roots));
    std::vector<TokenSequence> seqs;
    for (const auto& d : f.corpus.retrieval) seqs.push_back(tokenize(d));
    auto corpus = std::make_shared<const TokenizedCorpus>(std::move(seqs));
    std::vector<std::span<const TokenId>> docs;
    for (const auto& s : corpus->sequences()) docs.emplace_back(s.tokens);
    auto embedder = std::make_shared<const HashedTfidfEmbedder>(HashedTfidfEmbedder::fit(tfidf, docs));
    auto index = std::make_shared<const VectorIndex>(VectorIndex::build(*corpus, chunk_len, *embedder));
    f.retrieval = RetrievalContext::make(corpus, index, embedder);
    f.m0 = make_builtin_state(0, train_base_model(f.corpus.base, ngram));
    return f;
}

}  // namespace lcsynth::testing
