#include "crerank/cfgen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crerank {

CooccurrenceCounts build_counts(const std::vector<std::vector<ItemIndex>>& sessions,
                                std::uint32_t num_items) {
  CooccurrenceCounts counts;
  counts.num_items = num_items;
  counts.item_support.assign(num_items, 0);
  std::vector<ItemIndex> distinct;
  for (const auto& session : sessions) {
    distinct.assign(session.begin(), session.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (std::size_t a = 0; a < distinct.size(); ++a) {
      if (distinct[a] >= num_items) throw std::invalid_argument("build_counts: item out of range");
      ++counts.item_support[distinct[a]];
      for (std::size_t b = a + 1; b < distinct.size(); ++b)
        ++counts.pair_support[CooccurrenceCounts::pair_key(distinct[a], distinct[b])];
    }
  }
  return counts;
}

SimilarityTable asym_cosine(const CooccurrenceCounts& counts, double alpha,
                            std::uint32_t width) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("asym_cosine: alpha must be in [0,1]");
  SimilarityTable table;
  table.alpha = alpha;
  table.width = width;
  table.item_support = counts.item_support;
  table.neighbors.assign(counts.num_items, {});

  for (const auto& [key, nij] : counts.pair_support) {
    if (nij == 0) continue;
    const ItemIndex i = static_cast<ItemIndex>(key >> 32);
    const ItemIndex j = static_cast<ItemIndex>(key & 0xffffffffu);
    const double ni = counts.item_support[i];
    const double nj = counts.item_support[j];
    // Anchor-first exponent: sim(anchor, other) = n_ij / (n_a^alpha n_o^(1-alpha)).
    table.neighbors[i].push_back(
        {j, nij / (std::pow(ni, alpha) * std::pow(nj, 1.0 - alpha))});
    table.neighbors[j].push_back(
        {i, nij / (std::pow(nj, alpha) * std::pow(ni, 1.0 - alpha))});
  }

  for (auto& list : table.neighbors) {
    std::sort(list.begin(), list.end(), [](const ScoredItem& a, const ScoredItem& b) {
      return a.score != b.score ? a.score > b.score : a.item < b.item;
    });
    if (list.size() > width) list.resize(width);
  }

  table.popularity.resize(counts.num_items);
  for (ItemIndex i = 0; i < counts.num_items; ++i) table.popularity[i] = i;
  std::sort(table.popularity.begin(), table.popularity.end(), [&](ItemIndex a, ItemIndex b) {
    return counts.item_support[a] != counts.item_support[b]
               ? counts.item_support[a] > counts.item_support[b]
               : a < b;
  });
  return table;
}

std::vector<ItemIndex> generate(const SimilarityTable& table,
                                std::span<const ItemIndex> history, std::size_t len) {
  if (history.empty()) throw std::invalid_argument("generate: empty history");
  const ItemIndex anchor = history.back();
  std::vector<ItemIndex> out;
  out.reserve(len);
  std::vector<char> seen(table.num_items(), 0);
  if (anchor < table.num_items()) {
    seen[anchor] = 1;
    for (const ScoredItem& si : table.neighbors[anchor]) {
      if (out.size() >= len) return out;
      out.push_back(si.item);
      seen[si.item] = 1;
    }
  }
  for (ItemIndex item : table.popularity) {
    if (out.size() >= len) break;
    if (item < seen.size() && seen[item]) continue;
    if (item == anchor) continue;
    out.push_back(item);
  }
  return out;
}

}  // namespace crerank
