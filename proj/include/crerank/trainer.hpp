#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "crerank/concurrency.hpp"
#include "crerank/config.hpp"
#include "crerank/corpus.hpp"
#include "crerank/errors.hpp"
#include "crerank/evalkit.hpp"
#include "crerank/numkit.hpp"
#include "crerank/reranker.hpp"
#include "crerank/stamp.hpp"

namespace crerank {

// Adam over every tensor in a parameter struct, in canonical visit order.
template <class P, class S = float>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(const P& params, S lr) {
    cfg_.lr = lr;
    P::visit([this](const char*, const auto& t) {
      using T = std::decay_t<decltype(t)>;
      if constexpr (std::is_same_v<T, Mat<S>>)
        mats_.push_back(AdamState<Mat<S>>::like(t));
      else
        vecs_.push_back(AdamState<Vec<S>>::like(t));
    }, params);
  }

  void step(P& params, const P& grads) {
    std::size_t mi = 0, vi = 0;
    P::visit([this, &mi, &vi](const char*, auto& param, const auto& grad) {
      using T = std::decay_t<decltype(param)>;
      if constexpr (std::is_same_v<T, Mat<S>>)
        adam_step(param, grad, mats_[mi++], cfg_);
      else
        adam_step(param, grad, vecs_[vi++], cfg_);
    }, params, grads);
  }

 private:
  AdamConfig<S> cfg_;
  std::vector<AdamState<Mat<S>>> mats_;
  std::vector<AdamState<Vec<S>>> vecs_;
};

template <class P, class S>
void scale_params(P& p, S factor) {
  P::visit([factor](const char*, auto& t) { t *= factor; }, p);
}

// Global-norm gradient clipping; no-op when the threshold is 0.
template <class P, class S>
void clip_gradients(P& grads, S threshold) {
  if (threshold <= S(0)) return;
  double sq = 0.0;
  P::visit([&sq](const char*, const auto& t) { sq += static_cast<double>(t.squaredNorm()); },
           grads);
  const double norm = std::sqrt(sq);
  if (norm > static_cast<double>(threshold))
    scale_params(grads, static_cast<S>(static_cast<double>(threshold) / norm));
}

struct TrainLogEntry {
  std::int64_t step = 0;
  double train_loss = 0.0;  // mean batch loss since the previous check
  double val_recall = 0.0;
  bool best = false;
};

namespace detail {

// Deterministic validation split: shuffled copy of [0, n), the first
// val_fraction slice (capped) becomes validation.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

inline Split split_examples(std::size_t n, double val_fraction, std::uint32_t val_cap,
                            Rng rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  Split s;
  const std::size_t val_n = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * val_fraction));
  s.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(val_n));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(val_n), order.end());
  if (s.val.size() > val_cap) s.val.resize(val_cap);
  return s;
}

}  // namespace detail

struct GeneratorTrainResult {
  StampParams<float> params;
  std::vector<TrainLogEntry> log;
};

// Mini-batch Adam over the full-assortment cross-entropy. The decoder is
// batched into two GEMMs; the encoder runs per example. Best checkpoint by
// validation Recall@val_n, checked every val_every steps and at the end.
inline GeneratorTrainResult train_generator(const ProcessedCorpus& corpus,
                                            const ModelConfig& mc, const TrainConfig& tc,
                                            int threads = 1) {
  if (corpus.train.empty()) throw TrainingError("train_generator: empty corpus");
  const EncoderKind kind = mc.generator == "stmo" ? EncoderKind::stmo : EncoderKind::stamp;
  const Index items = static_cast<Index>(corpus.vocab.size());
  Rng root(RngSeed{tc.seed});
  Rng init_rng = root.substream("init/generator");
  GeneratorTrainResult result;
  result.params = StampParams<float>::init(mc.d, items, init_rng);

  auto split = detail::split_examples(corpus.train.size(), tc.val_fraction,
                                      tc.val_max_examples, root.substream("split/generator"));

  auto validate = [&](const StampParams<float>& params) {
    if (split.val.empty()) return 0.0;
    std::vector<std::size_t> ranks(split.val.size());
    parallel_for(split.val.size(), threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto& ex = corpus.train[split.val[i]];
        VecF session = kind == EncoderKind::stamp
                           ? encode(params, ex.history, mc.attention_normalized).session
                           : encode_stmo(params, ex.history).session;
        VecF logits = score_full(params, session);
        auto top = top_items(logits, static_cast<std::size_t>(tc.val_n));
        ranks[i] = rank_of_target(top, ex.target);
      }
    });
    std::size_t hits = 0;
    for (std::size_t r : ranks) hits += r != 0;
    return static_cast<double>(hits) / static_cast<double>(split.val.size());
  };

  AdamOptimizer<StampParams<float>> optimizer(result.params, static_cast<float>(tc.lr));
  auto grads = StampParams<float>::zeros_like(result.params);
  std::optional<StampParams<float>> best;
  double best_recall = -1.0;
  std::int64_t step = 0;
  double loss_accum = 0.0;
  std::int64_t loss_batches = 0;

  auto run_check = [&]() {
    const double recall = validate(result.params);
    TrainLogEntry entry;
    entry.step = step;
    entry.train_loss = loss_batches > 0 ? loss_accum / static_cast<double>(loss_batches) : 0.0;
    entry.val_recall = recall;
    if (recall > best_recall) {
      best_recall = recall;
      best = result.params;
      entry.best = true;
    }
    result.log.push_back(entry);
    loss_accum = 0.0;
    loss_batches = 0;
  };

  const std::size_t B = tc.batch;
  MatF sessions;      // d x b
  MatF logits;        // b x |I|, rows are examples
  MatF grad_sessions; // d x b

  for (std::uint32_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    root.substream("shuffle/generator", epoch).shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t b = std::min(B, order.size() - start);
      sessions.resize(mc.d, static_cast<Index>(b));
      std::vector<SessionEncoding<float>> stamp_caches;
      std::vector<StmoEncoding<float>> stmo_caches;
      if (kind == EncoderKind::stamp) stamp_caches.resize(b);
      else stmo_caches.resize(b);
      for (std::size_t i = 0; i < b; ++i) {
        const auto& ex = corpus.train[order[start + i]];
        if (kind == EncoderKind::stamp) {
          stamp_caches[i] = encode(result.params, ex.history, mc.attention_normalized);
          sessions.col(static_cast<Index>(i)) = stamp_caches[i].session;
        } else {
          stmo_caches[i] = encode_stmo(result.params, ex.history);
          sessions.col(static_cast<Index>(i)) = stmo_caches[i].session;
        }
      }

      logits.resize(static_cast<Index>(b), items);
      logits.noalias() = sessions.transpose() * result.params.embed;

      double batch_loss = 0.0;
      const float inv_b = 1.0f / static_cast<float>(b);
      for (std::size_t i = 0; i < b; ++i) {
        auto row = logits.row(static_cast<Index>(i));
        const ItemIndex target = corpus.train[order[start + i]].target;
        const float mx = row.maxCoeff();
        row = (row.array() - mx).exp();
        const float z = row.sum();
        batch_loss += std::log(z) - std::log(row(target));
        // Rewrite the row in place as (probs - onehot) / b.
        row *= (inv_b / z);
        row(target) -= inv_b;
      }
      batch_loss /= static_cast<double>(b);
      if (!std::isfinite(batch_loss))
        throw TrainingError("generator training diverged at step " + std::to_string(step) +
                            " (non-finite loss)");

      grads.set_zero();
      grad_sessions.resize(mc.d, static_cast<Index>(b));
      grad_sessions.noalias() = result.params.embed * logits.transpose();
      grads.embed.noalias() += sessions * logits;
      for (std::size_t i = 0; i < b; ++i) {
        const auto& ex = corpus.train[order[start + i]];
        const VecF g_session = grad_sessions.col(static_cast<Index>(i));
        if (kind == EncoderKind::stamp)
          encode_backward(result.params, ex.history, stamp_caches[i], g_session,
                          mc.attention_normalized, grads);
        else
          encode_stmo_backward(result.params, ex.history, stmo_caches[i], g_session, grads);
      }
      clip_gradients(grads, static_cast<float>(tc.clip));
      optimizer.step(result.params, grads);

      loss_accum += batch_loss;
      ++loss_batches;
      ++step;
      if (step % tc.val_every == 0) run_check();
    }
  }
  if (tc.epochs > 0) run_check();
  if (best) result.params = std::move(*best);
  return result;
}

struct RerankerTrainResult {
  RerankerParams<float> params;
  std::vector<TrainLogEntry> log;
  std::size_t total_examples = 0;
  std::size_t surviving_examples = 0;
  double coverage = 0.0;  // fraction of training targets inside the top k
};

// Trains the re-ranker against a frozen generator. Examples whose target
// is outside the generator's top k are skipped. Candidate lists may come
// from a cache; the result is identical either way.
inline RerankerTrainResult train_reranker(
    const Recommender& generator, const ProcessedCorpus& corpus, const ModelConfig& mc,
    const TrainConfig& tc, int threads = 1,
    const std::vector<std::vector<ItemIndex>>* cached_candidates = nullptr) {
  if (corpus.train.empty()) throw TrainingError("train_reranker: empty corpus");
  const Index items = static_cast<Index>(corpus.vocab.size());

  // Candidate lists for every training example.
  std::vector<std::vector<ItemIndex>> candidates;
  if (cached_candidates) {
    if (cached_candidates->size() != corpus.train.size())
      throw FormatError("candidate cache size does not match the corpus");
    candidates = *cached_candidates;
  } else {
    candidates.resize(corpus.train.size());
    parallel_for(corpus.train.size(), threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i)
        candidates[i] = generator.recommend(corpus.train[i].history, mc.k);
    });
  }

  RerankerTrainResult result;
  result.total_examples = corpus.train.size();

  // Surviving examples: target within the candidate list.
  struct Survivor {
    std::size_t example;
    Index target_pos;
  };
  std::vector<Survivor> survivors;
  survivors.reserve(corpus.train.size());
  for (std::size_t i = 0; i < corpus.train.size(); ++i) {
    const std::size_t pos = rank_of_target(candidates[i], corpus.train[i].target);
    if (pos != 0) survivors.push_back({i, static_cast<Index>(pos - 1)});
  }
  result.surviving_examples = survivors.size();
  result.coverage =
      static_cast<double>(survivors.size()) / static_cast<double>(corpus.train.size());
  if (survivors.empty())
    throw TrainingError(
        "train_reranker: no training example has its target in the generator's top " +
        std::to_string(mc.k) + " (coverage 0)");

  Rng root(RngSeed{tc.seed});
  Rng init_rng = root.substream("init/reranker");
  result.params = RerankerParams<float>::init(mc.d, mc.cre_dim(), mc.k, items, mc.cre_stride,
                                              mc.cre_enabled, mc.attention_normalized,
                                              init_rng);

  auto split = detail::split_examples(survivors.size(), tc.val_fraction, tc.val_max_examples,
                                      root.substream("split/reranker"));

  // Validation candidates are frozen once; the generator does not change.
  const std::size_t val_window =
      std::max<std::size_t>(static_cast<std::size_t>(tc.val_n), mc.k);
  std::vector<std::vector<ItemIndex>> val_lists(split.val.size());
  parallel_for(split.val.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& ex = corpus.train[survivors[split.val[i]].example];
      val_lists[i] = generator.recommend(ex.history, val_window);
    }
  });

  auto validate = [&](const RerankerParams<float>& params) {
    if (split.val.empty()) return 0.0;
    std::vector<std::size_t> ranks(split.val.size());
    parallel_for(split.val.size(), threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto& ex = corpus.train[survivors[split.val[i]].example];
        const auto& generated = val_lists[i];
        const std::size_t take = std::min<std::size_t>(mc.k, generated.size());
        std::span<const ItemIndex> cand(generated.data(), take);
        auto cache = rerank_scores(params, ex.history, cand);
        auto order = rerank_order(cache.scores);
        std::vector<ItemIndex> reranked(take);
        for (std::size_t j = 0; j < take; ++j) reranked[j] = cand[order[j]];
        if (tc.val_on_composed) {
          auto composed = compose_final(generated, reranked);
          if (composed.size() > static_cast<std::size_t>(tc.val_n))
            composed.resize(static_cast<std::size_t>(tc.val_n));
          ranks[i] = rank_of_target(composed, ex.target);
        } else {
          if (reranked.size() > static_cast<std::size_t>(tc.val_n))
            reranked.resize(static_cast<std::size_t>(tc.val_n));
          ranks[i] = rank_of_target(reranked, ex.target);
        }
      }
    });
    std::size_t hits = 0;
    for (std::size_t r : ranks) hits += r != 0;
    return static_cast<double>(hits) / static_cast<double>(split.val.size());
  };

  AdamOptimizer<RerankerParams<float>> optimizer(result.params, static_cast<float>(tc.lr));
  auto grads = RerankerParams<float>::zeros_like(result.params);
  std::optional<RerankerParams<float>> best;
  double best_recall = -1.0;
  std::int64_t step = 0;
  double loss_accum = 0.0;
  std::int64_t loss_batches = 0;

  auto run_check = [&]() {
    const double recall = validate(result.params);
    TrainLogEntry entry;
    entry.step = step;
    entry.train_loss = loss_batches > 0 ? loss_accum / static_cast<double>(loss_batches) : 0.0;
    entry.val_recall = recall;
    if (recall > best_recall) {
      best_recall = recall;
      best = result.params;
      entry.best = true;
    }
    result.log.push_back(entry);
    loss_accum = 0.0;
    loss_batches = 0;
  };

  const std::size_t B = tc.batch;
  for (std::uint32_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    root.substream("shuffle/reranker", epoch).shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t b = std::min(B, order.size() - start);
      grads.set_zero();
      double batch_loss = 0.0;
      for (std::size_t i = 0; i < b; ++i) {
        const Survivor& sv = survivors[order[start + i]];
        const auto& ex = corpus.train[sv.example];
        batch_loss += static_cast<double>(reranker_example_grad(
            result.params, ex.history, candidates[sv.example], sv.target_pos, grads));
      }
      batch_loss /= static_cast<double>(b);
      if (!std::isfinite(batch_loss))
        throw TrainingError("re-ranker training diverged at step " + std::to_string(step) +
                            " (non-finite loss)");
      scale_params(grads, 1.0f / static_cast<float>(b));
      clip_gradients(grads, static_cast<float>(tc.clip));
      optimizer.step(result.params, grads);

      loss_accum += batch_loss;
      ++loss_batches;
      ++step;
      if (step % tc.val_every == 0) run_check();
    }
  }
  if (tc.epochs > 0) run_check();
  if (best) result.params = std::move(*best);
  return result;
}

}  // namespace crerank
