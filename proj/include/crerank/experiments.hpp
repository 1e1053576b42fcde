#pragma once

#include <vector>

#include "crerank/evalkit.hpp"
#include "crerank/trainer.hpp"

namespace crerank {

// One re-ranker per k over a fixed generator; the curve is pipeline
// Recall@val_n on the test set.
struct SweepPoint {
  std::uint32_t k = 0;
  double recall = 0.0;
  std::size_t surviving_examples = 0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::size_t best_index = 0;        // first k reaching the maximum recall
  bool declines_after_best = false;  // plateau/decline region marker
};

inline SweepResult sweep_k(const Recommender& generator, const ProcessedCorpus& corpus,
                           const ModelConfig& mc, const TrainConfig& tc,
                           const std::vector<std::uint32_t>& k_values, int threads = 1) {
  if (k_values.empty()) throw ConfigError("sweep_k: no k values");
  SweepResult result;
  for (std::uint32_t k : k_values) {
    ModelConfig mck = mc;
    mck.k = k;
    auto trained = train_reranker(generator, corpus, mck, tc, threads);
    TwoStagePipeline<float> pipeline(generator, trained.params);
    auto report = evaluate(pipeline, corpus.test, tc.val_n, "rrcre", "sweep", threads);
    result.points.push_back({k, report.recall, trained.surviving_examples});
  }
  for (std::size_t i = 1; i < result.points.size(); ++i)
    if (result.points[i].recall > result.points[result.best_index].recall)
      result.best_index = i;
  for (std::size_t i = result.best_index + 1; i < result.points.size(); ++i)
    if (result.points[i].recall < result.points[result.best_index].recall)
      result.declines_after_best = true;
  return result;
}

// Two training runs differing only in cre_enabled, same seed, same
// generator, hence identical example filtering. The paired logs give the
// validation curves.
struct AblationResult {
  RerankerTrainResult with_cre;
  RerankerTrainResult without_cre;
};

inline AblationResult ablate_cre(const Recommender& generator, const ProcessedCorpus& corpus,
                                 const ModelConfig& mc, const TrainConfig& tc,
                                 int threads = 1) {
  AblationResult result;
  ModelConfig on = mc;
  on.cre_enabled = true;
  ModelConfig off = mc;
  off.cre_enabled = false;
  result.with_cre = train_reranker(generator, corpus, on, tc, threads);
  result.without_cre = train_reranker(generator, corpus, off, tc, threads);
  return result;
}

}  // namespace crerank
