#pragma once

#include <span>
#include <string>
#include <vector>

#include "crerank/corpus.hpp"
#include "crerank/generator.hpp"
#include "crerank/types.hpp"

namespace crerank {

struct EvalReport {
  std::string model_id;
  std::string dataset_id;
  int n = 20;
  std::size_t examples = 0;
  std::size_t hits = 0;    // rank <= n
  std::size_t misses = 0;  // target absent from the top n
  double recall = 0.0;
  double mrr = 0.0;
  // rank_histogram[r-1] counts targets found at rank r, r = 1..n.
  std::vector<std::size_t> rank_histogram;
  double wall_clock_seconds = 0.0;
};

// 1-based position of target in the list, 0 when absent.
std::size_t rank_of_target(std::span<const ItemIndex> list, ItemIndex target);

// recall@n = mean(rank <= n); mrr@n = mean(rank <= n ? 1/rank : 0); targets
// outside the list contribute 0 to both. Metrics are folded from the rank
// histogram in rank order, so they are exactly order-independent.
EvalReport evaluate(const Recommender& model, std::span<const SessionExample> test, int n,
                    const std::string& model_id, const std::string& dataset_id,
                    int threads = 1);

void write_eval_report_json(const EvalReport& report, const std::string& path);
void write_eval_report_csv(const EvalReport& report, const std::string& path);
std::string eval_report_json(const EvalReport& report);

struct CurveSeries {
  std::string name;
  std::vector<double> values;
};

void write_curve_csv(const std::string& path, const std::string& x_name,
                     const std::vector<double>& xs, const std::vector<CurveSeries>& series);

// Minimal line chart, one polyline per series.
void write_curve_svg(const std::string& path, const std::string& x_name,
                     const std::vector<double>& xs, const std::vector<CurveSeries>& series);

}  // namespace crerank
