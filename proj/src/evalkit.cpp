#include "crerank/evalkit.hpp"

#include <chrono>

#include "crerank/concurrency.hpp"

namespace crerank {

std::size_t rank_of_target(std::span<const ItemIndex> list, ItemIndex target) {
  for (std::size_t i = 0; i < list.size(); ++i)
    if (list[i] == target) return i + 1;
  return 0;
}

EvalReport evaluate(const Recommender& model, std::span<const SessionExample> test, int n,
                    const std::string& model_id, const std::string& dataset_id, int threads) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  if (n < 1) throw std::invalid_argument("evaluate: n must be positive");
  const auto started = std::chrono::steady_clock::now();

  std::vector<std::size_t> ranks(test.size());
  parallel_for(test.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto list = model.recommend(test[i].history, static_cast<std::size_t>(n));
      ranks[i] = rank_of_target(list, test[i].target);
    }
  });

  EvalReport report;
  report.model_id = model_id;
  report.dataset_id = dataset_id;
  report.n = n;
  report.examples = test.size();
  report.rank_histogram.assign(static_cast<std::size_t>(n), 0);
  for (std::size_t r : ranks) {
    if (r >= 1 && r <= static_cast<std::size_t>(n))
      ++report.rank_histogram[r - 1];
    else
      ++report.misses;
  }
  for (std::size_t c : report.rank_histogram) report.hits += c;

  double mrr_sum = 0.0;
  for (int r = 1; r <= n; ++r)
    mrr_sum += static_cast<double>(report.rank_histogram[static_cast<std::size_t>(r - 1)]) *
               (1.0 / static_cast<double>(r));
  report.recall = static_cast<double>(report.hits) / static_cast<double>(report.examples);
  report.mrr = mrr_sum / static_cast<double>(report.examples);

  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace crerank
