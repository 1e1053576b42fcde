#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "crerank/generator.hpp"
#include "crerank/numkit.hpp"
#include "crerank/stamp.hpp"

namespace crerank {

// Re-ranker parameters. The encoder is its own copy (no sharing with the
// candidate generator); its embedding table doubles as the candidate
// embeddings in the score. Two heads project the session vector: the item
// head predicts the target item embedding, the rank head predicts the
// candidate-rank embedding. rank_embed holds one row per rank position
// (or per `cre_stride`-wide bucket of positions).
template <class S>
struct RerankerParams {
  StampParams<S> enc;

  Mat<S> item_head_in;   // d x d, inner tanh layer
  Vec<S> item_head_in_bias;
  Mat<S> item_head_out;  // d x d, outer tanh layer
  Vec<S> item_head_out_bias;

  Mat<S> rank_head_in;   // d x d
  Vec<S> rank_head_in_bias;
  Mat<S> rank_head_out;  // d x d_cre
  Vec<S> rank_head_out_bias;

  Mat<S> rank_embed;     // cre_rows(k, stride) x d_cre

  std::uint32_t k = 0;
  std::uint32_t cre_stride = 1;
  bool cre_enabled = true;
  bool normalized_attention = false;

  Index dim() const { return enc.dim(); }
  Index cre_dim() const { return rank_embed.cols(); }
  Index items() const { return enc.items(); }

  static std::uint32_t cre_rows(std::uint32_t k, std::uint32_t stride) {
    return (k + stride - 1) / stride;
  }

  template <class F, class... Ps>
  static void visit(F&& f, Ps&&... ps) {
    StampParams<S>::visit(f, ps.enc...);
    f("item_head_in", ps.item_head_in...);
    f("item_head_in_bias", ps.item_head_in_bias...);
    f("item_head_out", ps.item_head_out...);
    f("item_head_out_bias", ps.item_head_out_bias...);
    f("rank_head_in", ps.rank_head_in...);
    f("rank_head_in_bias", ps.rank_head_in_bias...);
    f("rank_head_out", ps.rank_head_out...);
    f("rank_head_out_bias", ps.rank_head_out_bias...);
    f("rank_embed", ps.rank_embed...);
  }

  static RerankerParams init(Index d, Index d_cre, std::uint32_t k, Index items,
                             std::uint32_t stride, bool cre_enabled,
                             bool normalized_attention, Rng& rng) {
    if (k < 1 || d_cre < 1 || stride < 1)
      throw std::invalid_argument("RerankerParams: bad k/d_cre/stride");
    RerankerParams p;
    p.enc = StampParams<S>::init(d, items, rng);
    p.item_head_in = xavier_init<S>(d, d, rng);
    p.item_head_in_bias = Vec<S>::Zero(d);
    p.item_head_out = xavier_init<S>(d, d, rng);
    p.item_head_out_bias = Vec<S>::Zero(d);
    p.rank_head_in = xavier_init<S>(d, d, rng);
    p.rank_head_in_bias = Vec<S>::Zero(d);
    p.rank_head_out = xavier_init<S>(d, d_cre, rng);
    p.rank_head_out_bias = Vec<S>::Zero(d_cre);
    p.rank_embed = xavier_init<S>(cre_rows(k, stride), d_cre, rng);
    p.k = k;
    p.cre_stride = stride;
    p.cre_enabled = cre_enabled;
    p.normalized_attention = normalized_attention;
    return p;
  }

  static RerankerParams zeros_like(const RerankerParams& o) {
    RerankerParams p;
    visit([](const char*, auto& dst, const auto& src) {
      dst.setZero(src.rows(), src.cols());
    }, p, o);
    p.k = o.k;
    p.cre_stride = o.cre_stride;
    p.cre_enabled = o.cre_enabled;
    p.normalized_attention = o.normalized_attention;
    return p;
  }

  void set_zero() {
    visit([](const char*, auto& t) { t.setZero(); }, *this);
  }
};

template <class S>
struct RerankCache {
  SessionEncoding<S> enc;
  Vec<S> item_hidden;
  Vec<S> item_pred;  // projected session vector dotted with candidate embeddings
  Vec<S> rank_hidden;
  Vec<S> rank_pred;  // projected session vector dotted with rank embeddings
  Vec<S> scores;     // one per candidate
  Vec<S> probs;      // softmax over the candidates
};

// Candidate scores: score_i = V[c_i] . item_pred + rank_embed[row(i)] .
// rank_pred; the rank term is dropped when CREs are disabled. With fewer
// than k candidates only the leading rank rows participate.
template <class S>
RerankCache<S> rerank_scores(const RerankerParams<S>& p, std::span<const ItemIndex> history,
                             std::span<const ItemIndex> candidates) {
  if (candidates.empty()) throw std::invalid_argument("rerank_scores: empty candidate list");
  if (candidates.size() > p.k)
    throw std::invalid_argument("rerank_scores: more candidates than k");
  for (ItemIndex c : candidates)
    if (c >= p.items()) throw std::invalid_argument("rerank_scores: candidate out of range");

  RerankCache<S> out;
  out.enc = encode(p.enc, history, p.normalized_attention);
  out.item_hidden = affine_tanh(p.item_head_in, p.item_head_in_bias, out.enc.session);
  out.item_pred = affine_tanh(p.item_head_out, p.item_head_out_bias, out.item_hidden);
  if (p.cre_enabled) {
    out.rank_hidden = affine_tanh(p.rank_head_in, p.rank_head_in_bias, out.enc.session);
    out.rank_pred = affine_tanh(p.rank_head_out, p.rank_head_out_bias, out.rank_hidden);
  }

  const Index n = static_cast<Index>(candidates.size());
  out.scores.resize(n);
  for (Index i = 0; i < n; ++i) {
    S s = p.enc.embed.col(candidates[static_cast<std::size_t>(i)]).dot(out.item_pred);
    if (p.cre_enabled)
      s += p.rank_embed.row(static_cast<Index>(i) / p.cre_stride).dot(out.rank_pred);
    out.scores(i) = s;
  }
  out.probs = softmax(out.scores);
  return out;
}

// Accumulates into `grads` given dL/dscores (for cross-entropy training
// that is probs - onehot of the target's position).
template <class S>
void rerank_backward(const RerankerParams<S>& p, std::span<const ItemIndex> history,
                     std::span<const ItemIndex> candidates, const RerankCache<S>& cache,
                     const Vec<S>& g_scores, RerankerParams<S>& grads) {
  const Index d = p.dim();
  const Index n = static_cast<Index>(candidates.size());

  Vec<S> g_item_pred = Vec<S>::Zero(d);
  Vec<S> g_rank_pred;
  if (p.cre_enabled) g_rank_pred = Vec<S>::Zero(p.cre_dim());
  for (Index i = 0; i < n; ++i) {
    const ItemIndex c = candidates[static_cast<std::size_t>(i)];
    g_item_pred += g_scores(i) * p.enc.embed.col(c);
    grads.enc.embed.col(c) += g_scores(i) * cache.item_pred;
    if (p.cre_enabled) {
      const Index row = static_cast<Index>(i) / p.cre_stride;
      g_rank_pred += g_scores(i) * p.rank_embed.row(row).transpose();
      grads.rank_embed.row(row) += g_scores(i) * cache.rank_pred.transpose();
    }
  }

  auto g_item_out = affine_tanh_backward(p.item_head_out, cache.item_hidden,
                                         cache.item_pred, g_item_pred);
  grads.item_head_out += g_item_out.w;
  grads.item_head_out_bias += g_item_out.b;
  auto g_item_in = affine_tanh_backward(p.item_head_in, cache.enc.session,
                                        cache.item_hidden, g_item_out.x);
  grads.item_head_in += g_item_in.w;
  grads.item_head_in_bias += g_item_in.b;
  Vec<S> g_session = g_item_in.x;

  if (p.cre_enabled) {
    auto g_rank_out = affine_tanh_backward(p.rank_head_out, cache.rank_hidden,
                                           cache.rank_pred, g_rank_pred);
    grads.rank_head_out += g_rank_out.w;
    grads.rank_head_out_bias += g_rank_out.b;
    auto g_rank_in = affine_tanh_backward(p.rank_head_in, cache.enc.session,
                                          cache.rank_hidden, g_rank_out.x);
    grads.rank_head_in += g_rank_in.w;
    grads.rank_head_in_bias += g_rank_in.b;
    g_session += g_rank_in.x;
  }

  encode_backward(p.enc, history, cache.enc, g_session, p.normalized_attention, grads.enc);
}

// Per-example cross-entropy against the target's position in the
// candidate list; shared by the trainer and the gradient checker.
template <class S>
S reranker_example_loss(const RerankerParams<S>& p, std::span<const ItemIndex> history,
                        std::span<const ItemIndex> candidates, Index target_pos) {
  auto cache = rerank_scores(p, history, candidates);
  return softmax_xent(cache.scores, target_pos).loss;
}

template <class S>
S reranker_example_grad(const RerankerParams<S>& p, std::span<const ItemIndex> history,
                        std::span<const ItemIndex> candidates, Index target_pos,
                        RerankerParams<S>& grads) {
  auto cache = rerank_scores(p, history, candidates);
  auto sm = softmax_xent(cache.scores, target_pos);
  Vec<S> g_scores = softmax_xent_backward(sm.probs, target_pos);
  rerank_backward(p, history, candidates, cache, g_scores, grads);
  return sm.loss;
}

// Candidate positions ordered by (score desc, original rank asc).
template <class S>
std::vector<std::size_t> rerank_order(const Vec<S>& scores) {
  std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
    return scores(static_cast<Index>(a)) > scores(static_cast<Index>(b));
  });
  return order;
}

// L_Y = reranked head : untouched tail. The reranked list must be a
// permutation of the head of the generated list.
inline std::vector<ItemIndex> compose_final(const std::vector<ItemIndex>& generated,
                                            std::span<const ItemIndex> reranked) {
  if (reranked.size() > generated.size())
    throw std::logic_error("compose_final: reranked list longer than source");
  std::vector<ItemIndex> head(generated.begin(),
                              generated.begin() + static_cast<std::ptrdiff_t>(reranked.size()));
  std::vector<ItemIndex> perm(reranked.begin(), reranked.end());
  std::sort(head.begin(), head.end());
  std::sort(perm.begin(), perm.end());
  if (head != perm)
    throw std::logic_error("compose_final: reranked list is not a permutation of the head");

  std::vector<ItemIndex> out(reranked.begin(), reranked.end());
  out.insert(out.end(), generated.begin() + static_cast<std::ptrdiff_t>(reranked.size()),
             generated.end());
  return out;
}

// Generator + re-ranker composed end to end.
template <class S>
class TwoStagePipeline : public Recommender {
 public:
  TwoStagePipeline(const Recommender& generator, const RerankerParams<S>& params)
      : generator_(&generator), params_(&params) {}

  std::vector<ItemIndex> recommend(std::span<const ItemIndex> history,
                                   std::size_t len) const override {
    const std::size_t want = std::max<std::size_t>(len, params_->k);
    std::vector<ItemIndex> generated = generator_->recommend(history, want);
    if (generated.empty()) return generated;
    const std::size_t take = std::min<std::size_t>(params_->k, generated.size());
    std::span<const ItemIndex> candidates(generated.data(), take);
    auto cache = rerank_scores(*params_, history, candidates);
    auto order = rerank_order(cache.scores);
    std::vector<ItemIndex> reranked(take);
    for (std::size_t i = 0; i < take; ++i) reranked[i] = candidates[order[i]];
    auto out = compose_final(generated, reranked);
    if (out.size() > len) out.resize(len);
    return out;
  }

 private:
  const Recommender* generator_;
  const RerankerParams<S>* params_;
};

}  // namespace crerank
