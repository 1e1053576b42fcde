#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "crerank/cfgen.hpp"
#include "crerank/rng.hpp"

using namespace crerank;

namespace {

using Sessions = std::vector<std::vector<ItemIndex>>;

// O(|I|^2) recomputation from scratch: set-based membership per session,
// same similarity formula, same ordering rule. Used as the exact oracle.
SimilarityTable brute_force_table(const Sessions& sessions, std::uint32_t num_items,
                                  double alpha, std::uint32_t width) {
  std::vector<std::set<ItemIndex>> sets;
  sets.reserve(sessions.size());
  for (const auto& s : sessions) sets.emplace_back(s.begin(), s.end());

  auto support = [&](ItemIndex i) {
    std::uint32_t n = 0;
    for (const auto& s : sets) n += s.count(i);
    return n;
  };
  auto pair_support = [&](ItemIndex i, ItemIndex j) {
    std::uint32_t n = 0;
    for (const auto& s : sets) n += s.count(i) && s.count(j);
    return n;
  };

  SimilarityTable table;
  table.alpha = alpha;
  table.width = width;
  table.item_support.resize(num_items);
  for (ItemIndex i = 0; i < num_items; ++i) table.item_support[i] = support(i);
  table.neighbors.assign(num_items, {});
  for (ItemIndex i = 0; i < num_items; ++i) {
    for (ItemIndex j = 0; j < num_items; ++j) {
      if (i == j) continue;
      const std::uint32_t nij = pair_support(i, j);
      if (nij == 0) continue;
      const double sim = nij / (std::pow(static_cast<double>(table.item_support[i]), alpha) *
                                std::pow(static_cast<double>(table.item_support[j]), 1.0 - alpha));
      table.neighbors[i].push_back({j, sim});
    }
    auto& list = table.neighbors[i];
    std::sort(list.begin(), list.end(), [](const ScoredItem& a, const ScoredItem& b) {
      return a.score != b.score ? a.score > b.score : a.item < b.item;
    });
    if (list.size() > width) list.resize(width);
  }
  table.popularity.resize(num_items);
  for (ItemIndex i = 0; i < num_items; ++i) table.popularity[i] = i;
  std::sort(table.popularity.begin(), table.popularity.end(), [&](ItemIndex a, ItemIndex b) {
    return table.item_support[a] != table.item_support[b]
               ? table.item_support[a] > table.item_support[b]
               : a < b;
  });
  return table;
}

Sessions random_sessions(Rng& rng, std::uint32_t num_items, std::size_t count) {
  Sessions out;
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t len = 1 + rng.below(6);
    std::vector<ItemIndex> session;
    for (std::size_t e = 0; e < len; ++e)
      session.push_back(static_cast<ItemIndex>(rng.below(num_items)));
    out.push_back(std::move(session));
  }
  return out;
}

}  // namespace

TEST_CASE("build_counts matches brute-force enumeration on the toy fixture") {
  const Sessions sessions = {{0, 1}, {0, 1}, {0, 2}};  // {a,b},{a,b},{a,c}
  auto counts = build_counts(sessions, 3);
  CHECK(counts.item_support[0] == 3);
  CHECK(counts.item_support[1] == 2);
  CHECK(counts.item_support[2] == 1);
  CHECK(counts.pair(0, 1) == 2);
  CHECK(counts.pair(0, 2) == 1);
  CHECK(counts.pair(1, 2) == 0);
  CHECK(counts.pair(1, 0) == 2);  // symmetric lookup
}

TEST_CASE("build_counts on a single singleton session") {
  auto counts = build_counts({{0}}, 2);
  CHECK(counts.item_support[0] == 1);
  CHECK(counts.item_support[1] == 0);
  CHECK(counts.pair_support.empty());
}

TEST_CASE("build_counts deduplicates within a session") {
  auto counts = build_counts({{0, 0, 1}}, 2);  // [a,a,b]
  CHECK(counts.item_support[0] == 1);
  CHECK(counts.item_support[1] == 1);
  CHECK(counts.pair(0, 1) == 1);
}

TEST_CASE("asym_cosine hand values") {
  // Perfect overlap: n_i = n_j = n_ij = 4 -> sim 1 for any alpha.
  CooccurrenceCounts perfect;
  perfect.num_items = 2;
  perfect.item_support = {4, 4};
  perfect.pair_support[CooccurrenceCounts::pair_key(0, 1)] = 4;
  for (double alpha : {0.0, 0.3, 0.5, 1.0}) {
    auto table = asym_cosine(perfect, alpha);
    REQUIRE(table.neighbors[0].size() == 1);
    CHECK(table.neighbors[0][0].score == doctest::Approx(1.0).epsilon(1e-15));
  }

  // n_a=3, n_b=2, n_ab=2, alpha=0.5 -> 2/sqrt(6).
  CooccurrenceCounts c;
  c.num_items = 2;
  c.item_support = {3, 2};
  c.pair_support[CooccurrenceCounts::pair_key(0, 1)] = 2;
  auto table = asym_cosine(c, 0.5);
  CHECK(table.neighbors[0][0].score == doctest::Approx(2.0 / std::sqrt(6.0)).epsilon(1e-15));
  CHECK(table.neighbors[0][0].score == doctest::Approx(0.816497).epsilon(1e-6));

  CHECK_THROWS_AS(asym_cosine(c, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(asym_cosine(c, -0.1), std::invalid_argument);
}

TEST_CASE("alpha 0.5 gives a symmetric similarity") {
  Rng rng(RngSeed{404});
  auto sessions = random_sessions(rng, 20, 60);
  auto table = asym_cosine(build_counts(sessions, 20), 0.5);
  for (ItemIndex i = 0; i < 20; ++i) {
    for (const auto& [j, score] : table.neighbors[i]) {
      bool found = false;
      for (const auto& [back, back_score] : table.neighbors[j]) {
        if (back == i) {
          CHECK(back_score == score);
          found = true;
        }
      }
      CHECK(found);
    }
  }
}

TEST_CASE("similarity scores lie in (0,1] and lists are sorted") {
  Rng rng(RngSeed{99});
  for (double alpha : {0.0, 0.25, 0.7, 1.0}) {
    auto sessions = random_sessions(rng, 30, 80);
    auto table = asym_cosine(build_counts(sessions, 30), alpha);
    for (const auto& list : table.neighbors) {
      for (std::size_t i = 0; i < list.size(); ++i) {
        CHECK(list[i].score > 0.0);
        CHECK(list[i].score <= 1.0 + 1e-15);
        if (i > 0) {
          const bool ordered = list[i - 1].score > list[i].score ||
                               (list[i - 1].score == list[i].score &&
                                list[i - 1].item < list[i].item);
          CHECK(ordered);
        }
      }
    }
  }
}

TEST_CASE("asym_cosine equals brute force exactly on random corpora") {
  Rng rng(RngSeed{2024});
  for (int trial = 0; trial < 5; ++trial) {
    const std::uint32_t num_items = 5 + static_cast<std::uint32_t>(rng.below(46));
    auto sessions = random_sessions(rng, num_items, 40 + rng.below(80));
    const double alpha = rng.uniform(0.0, 1.0);
    auto fast = asym_cosine(build_counts(sessions, num_items), alpha, 10);
    auto slow = brute_force_table(sessions, num_items, alpha, 10);
    REQUIRE(fast.neighbors.size() == slow.neighbors.size());
    for (std::size_t i = 0; i < fast.neighbors.size(); ++i) {
      REQUIRE(fast.neighbors[i].size() == slow.neighbors[i].size());
      for (std::size_t j = 0; j < fast.neighbors[i].size(); ++j) {
        CHECK(fast.neighbors[i][j].item == slow.neighbors[i][j].item);
        CHECK(fast.neighbors[i][j].score == slow.neighbors[i][j].score);  // bitwise
      }
    }
    CHECK(fast.popularity == slow.popularity);
  }
}

TEST_CASE("generate looks up the anchor list") {
  SimilarityTable table;
  table.neighbors = {{{1, 0.9}, {2, 0.5}}, {}, {}};
  table.item_support = {3, 2, 1};
  table.popularity = {0, 1, 2};
  std::vector<ItemIndex> history = {2, 0};  // anchor 0
  auto out = generate(table, history, 2);
  CHECK(out == std::vector<ItemIndex>{1, 2});
}

TEST_CASE("generate falls back to popularity for unknown anchors") {
  SimilarityTable table;
  table.neighbors = {{}, {}, {}, {}};
  table.item_support = {1, 4, 3, 2};
  table.popularity = {1, 2, 3, 0};
  std::vector<ItemIndex> history = {0};
  auto out = generate(table, history, 3);
  CHECK(out == std::vector<ItemIndex>{1, 2, 3});

  // Anchor outside the table entirely.
  std::vector<ItemIndex> alien = {9};
  auto out2 = generate(table, alien, 2);
  CHECK(out2 == std::vector<ItemIndex>{1, 2});
}

TEST_CASE("generate pads a short neighbor list without duplicates") {
  SimilarityTable table;
  table.neighbors = {{{3, 0.8}}, {}, {}, {}};
  table.item_support = {5, 4, 3, 9};
  table.popularity = {3, 0, 1, 2};  // 3 is most popular but already listed; 0 is the anchor
  std::vector<ItemIndex> history = {0};
  auto out = generate(table, history, 3);
  CHECK(out == std::vector<ItemIndex>{3, 1, 2});
  std::set<ItemIndex> unique(out.begin(), out.end());
  CHECK(unique.size() == out.size());

  CHECK_THROWS_AS(generate(table, std::span<const ItemIndex>{}, 3), std::invalid_argument);
}

TEST_CASE("generate output has no duplicates and never invents items") {
  Rng rng(RngSeed{31337});
  auto sessions = random_sessions(rng, 25, 70);
  auto table = asym_cosine(build_counts(sessions, 25), 0.5, 8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ItemIndex> history = {static_cast<ItemIndex>(rng.below(25))};
    const std::size_t len = 1 + rng.below(24);
    auto out = generate(table, history, len);
    CHECK(out.size() == len);
    std::set<ItemIndex> unique(out.begin(), out.end());
    CHECK(unique.size() == out.size());
    for (ItemIndex item : out) {
      CHECK(item < 25);
      CHECK(item != history.back());
    }
  }
}
