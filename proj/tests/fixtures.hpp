#pragma once

#include <string>
#include <vector>

#include "crerank/cfgen.hpp"
#include "crerank/corpus.hpp"
#include "crerank/rng.hpp"

namespace crerank::testing {

// Synthetic corpus where the generator's ranking is fixed by construction
// (anchor a ranks a+1, a+2, ... wrapping) and the target is planted at one
// candidate position with some probability, uniform over the other
// positions otherwise. Coverage is 1 by construction.
struct PlantedFixture {
  ProcessedCorpus corpus;
  SimilarityTable table;
  std::size_t planted_pos = 0;
};

inline PlantedFixture make_planted_rank_fixture(std::uint32_t items, std::uint32_t k,
                                                std::size_t train_n, std::size_t test_n,
                                                double planted_prob, std::size_t planted_pos,
                                                std::uint64_t seed) {
  PlantedFixture fx;
  fx.planted_pos = planted_pos;
  fx.table.alpha = 0.5;
  fx.table.width = k;
  fx.table.item_support.assign(items, 1);
  fx.table.neighbors.resize(items);
  for (ItemIndex a = 0; a < items; ++a) {
    auto& list = fx.table.neighbors[a];
    list.reserve(k);
    for (std::uint32_t j = 0; j < k; ++j)
      list.push_back({(a + 1 + j) % items, 1.0 - 0.001 * j});
  }
  fx.table.popularity.resize(items);
  for (ItemIndex i = 0; i < items; ++i) fx.table.popularity[i] = i;

  for (ItemIndex i = 0; i < items; ++i) fx.corpus.vocab.add("item" + std::to_string(i));
  fx.corpus.meta.dataset = "planted-rank";
  fx.corpus.meta.recipe = "generic";

  Rng rng(RngSeed{seed});
  auto make_examples = [&](std::size_t n, std::vector<SessionExample>& out) {
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      SessionExample ex;
      const ItemIndex anchor = static_cast<ItemIndex>(rng.below(items));
      const std::size_t len = 1 + rng.below(3);
      for (std::size_t j = 1; j < len; ++j)
        ex.history.push_back(static_cast<ItemIndex>(rng.below(items)));
      ex.history.push_back(anchor);
      std::size_t pos;
      if (rng.next_unit() < planted_prob) {
        pos = planted_pos;
      } else {
        pos = rng.below(k - 1);
        if (pos >= planted_pos) ++pos;
      }
      ex.target = fx.table.neighbors[anchor][pos].item;
      out.push_back(std::move(ex));
    }
  };
  make_examples(train_n, fx.corpus.train);
  make_examples(test_n, fx.corpus.test);
  return fx;
}

// Corpus following the deterministic rule next = (prev + 1) mod items.
inline ProcessedCorpus make_successor_corpus(std::uint32_t items, std::size_t train_sessions,
                                             std::size_t test_sessions, std::uint64_t seed) {
  ProcessedCorpus corpus;
  for (ItemIndex i = 0; i < items; ++i) corpus.vocab.add("item" + std::to_string(i));
  corpus.meta.dataset = "successor";
  corpus.meta.recipe = "generic";
  Rng rng(RngSeed{seed});
  auto make_sessions = [&](std::size_t n, std::vector<std::vector<ItemIndex>>& out) {
    out.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t len = 3 + rng.below(3);
      std::vector<ItemIndex> session(len);
      session[0] = static_cast<ItemIndex>(rng.below(items));
      for (std::size_t j = 1; j < len; ++j) session[j] = (session[j - 1] + 1) % items;
      out.push_back(std::move(session));
    }
  };
  make_sessions(train_sessions, corpus.train_sessions);
  make_sessions(test_sessions, corpus.test_sessions);
  corpus.rebuild_examples();
  return corpus;
}

}  // namespace crerank::testing
