#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "crerank/generator.hpp"
#include "crerank/types.hpp"

namespace crerank {

// Session-level co-occurrence statistics: a session contributes at most 1
// to any count (binarized visit vectors).
struct CooccurrenceCounts {
  std::uint32_t num_items = 0;
  std::vector<std::uint32_t> item_support;                      // n_i
  std::unordered_map<std::uint64_t, std::uint32_t> pair_support;  // n_ij, key i<j

  static std::uint64_t pair_key(ItemIndex i, ItemIndex j) {
    if (i > j) std::swap(i, j);
    return (static_cast<std::uint64_t>(i) << 32) | j;
  }

  std::uint32_t pair(ItemIndex i, ItemIndex j) const {
    auto it = pair_support.find(pair_key(i, j));
    return it == pair_support.end() ? 0 : it->second;
  }
};

struct ScoredItem {
  ItemIndex item;
  double score;
};

// Per-anchor neighbor lists sorted by score descending (ties by ascending
// item index), truncated to `width`; anchors never list themselves.
struct SimilarityTable {
  std::vector<std::vector<ScoredItem>> neighbors;
  std::vector<std::uint32_t> item_support;  // popularity source, n_i
  std::vector<ItemIndex> popularity;        // support desc, index asc
  double alpha = 0.5;
  std::uint32_t width = 500;

  std::size_t num_items() const { return neighbors.size(); }
};

// Counting is over distinct items per full session, not augmented prefixes.
CooccurrenceCounts build_counts(const std::vector<std::vector<ItemIndex>>& sessions,
                                std::uint32_t num_items);

// sim(i, j) = n_ij / (n_i^alpha * n_j^(1-alpha)), i the anchor.
SimilarityTable asym_cosine(const CooccurrenceCounts& counts, double alpha,
                            std::uint32_t width = 500);

// Ranked candidates for the last-seen item; unknown anchors or short lists
// fall back to global popularity (anchor and duplicates excluded).
std::vector<ItemIndex> generate(const SimilarityTable& table,
                                std::span<const ItemIndex> history, std::size_t len);

class CfGenerator : public Recommender {
 public:
  explicit CfGenerator(SimilarityTable table) : table_(std::move(table)) {}

  std::vector<ItemIndex> recommend(std::span<const ItemIndex> history,
                                   std::size_t len) const override {
    return generate(table_, history, len);
  }

  const SimilarityTable& table() const { return table_; }

 private:
  SimilarityTable table_;
};

}  // namespace crerank
