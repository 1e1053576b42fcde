#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <stdexcept>

#include "crerank/generator.hpp"
#include "crerank/numkit.hpp"
#include "crerank/rng.hpp"
#include "crerank/types.hpp"

namespace crerank {

enum class EncoderKind { stamp, stmo };

inline const char* encoder_kind_name(EncoderKind k) {
  return k == EncoderKind::stamp ? "stamp" : "stmo";
}

// Session encoder parameters. The attention projections are applied as
// written (W v); the feed-forward layers follow the W'v + b convention of
// affine_tanh. Gradient containers reuse this struct (zeros_like).
template <class S>
struct StampParams {
  Mat<S> embed;       // d x |I| item embeddings, columns are items
  Mat<S> attn_item;   // d x d, projects each history item
  Mat<S> attn_last;   // d x d, projects the last-seen item
  Mat<S> attn_mean;   // d x d, projects the session mean
  Vec<S> attn_gate;   // d, turns the sigmoid gate into a scalar weight
  Vec<S> attn_bias;   // d
  Mat<S> ffn_session; // d x d, layer on the attention summary
  Vec<S> ffn_session_bias;
  Mat<S> ffn_last;    // d x d, layer on the last item (also the STMO weight)
  Vec<S> ffn_last_bias;

  Index dim() const { return attn_item.rows(); }
  Index items() const { return embed.cols(); }

  // Single canonical tensor listing: checkpoints, optimizers and the
  // flatteners all iterate in this order.
  template <class F, class... Ps>
  static void visit(F&& f, Ps&&... ps) {
    f("embed", ps.embed...);
    f("attn_item", ps.attn_item...);
    f("attn_last", ps.attn_last...);
    f("attn_mean", ps.attn_mean...);
    f("attn_gate", ps.attn_gate...);
    f("attn_bias", ps.attn_bias...);
    f("ffn_session", ps.ffn_session...);
    f("ffn_session_bias", ps.ffn_session_bias...);
    f("ffn_last", ps.ffn_last...);
    f("ffn_last_bias", ps.ffn_last_bias...);
  }

  static StampParams init(Index d, Index items, Rng& rng) {
    if (d < 1 || items < 1) throw std::invalid_argument("StampParams: bad dimensions");
    StampParams p;
    p.embed = xavier_init<S>(d, items, rng);
    p.attn_item = xavier_init<S>(d, d, rng);
    p.attn_last = xavier_init<S>(d, d, rng);
    p.attn_mean = xavier_init<S>(d, d, rng);
    p.attn_gate = xavier_init<S>(d, 1, rng);
    p.attn_bias = Vec<S>::Zero(d);
    p.ffn_session = xavier_init<S>(d, d, rng);
    p.ffn_session_bias = Vec<S>::Zero(d);
    p.ffn_last = xavier_init<S>(d, d, rng);
    p.ffn_last_bias = Vec<S>::Zero(d);
    return p;
  }

  static StampParams zeros_like(const StampParams& o) {
    StampParams p;
    visit([](const char*, auto& dst, const auto& src) {
      dst.setZero(src.rows(), src.cols());
    }, p, o);
    return p;
  }

  void set_zero() {
    visit([](const char*, auto& t) { t.setZero(); }, *this);
  }
};

// Attention over the history: per-item sigmoid gate turned into a scalar
// weight, weighted sum of item vectors. Weights are unnormalized unless
// `normalized` asks for a softmax over them.
template <class S>
struct AttentionOut {
  Vec<S> summary;       // weighted sum
  Vec<S> weights;       // raw per-position weights
  Vec<S> norm_weights;  // softmax of weights (normalized mode only)
  Mat<S> gates;         // d x l sigmoid activations, kept for backward
};

template <class S>
AttentionOut<S> attention(const StampParams<S>& p, const Mat<S>& hist, const Vec<S>& last,
                          const Vec<S>& mean, bool normalized) {
  const Index d = p.dim();
  const Index l = hist.cols();
  if (l < 1 || hist.rows() != d || last.size() != d || mean.size() != d)
    throw std::invalid_argument("attention: shape mismatch");
  AttentionOut<S> out;
  out.gates.resize(d, l);
  out.weights.resize(l);
  const Vec<S> ctx = p.attn_last * last + p.attn_mean * mean + p.attn_bias;
  for (Index i = 0; i < l; ++i) {
    Vec<S> z = p.attn_item * hist.col(i) + ctx;
    out.gates.col(i) = (S(1) / (S(1) + (-z.array()).exp())).matrix();
    out.weights(i) = p.attn_gate.dot(out.gates.col(i));
  }
  if (normalized) {
    const S mx = out.weights.maxCoeff();
    Vec<S> e = (out.weights.array() - mx).exp().matrix();
    out.norm_weights = e / e.sum();
    out.summary.noalias() = hist * out.norm_weights;
  } else {
    out.summary.noalias() = hist * out.weights;
  }
  return out;
}

template <class S>
struct SessionEncoding {
  Mat<S> hist;            // d x l gathered embeddings
  Vec<S> mean;            // average of history embeddings
  AttentionOut<S> attn;
  Vec<S> combined;        // attention summary + mean
  Vec<S> hidden_session;  // tanh layer over combined
  Vec<S> hidden_last;     // tanh layer over the last item
  Vec<S> session;         // hidden_session .* hidden_last
};

template <class S>
SessionEncoding<S> encode(const StampParams<S>& p, std::span<const ItemIndex> history,
                          bool normalized_attention = false) {
  if (history.empty()) throw std::invalid_argument("encode: empty history");
  const Index d = p.dim();
  const Index l = static_cast<Index>(history.size());
  SessionEncoding<S> enc;
  enc.hist.resize(d, l);
  for (Index i = 0; i < l; ++i) {
    if (history[static_cast<std::size_t>(i)] >= p.items())
      throw std::invalid_argument("encode: item index out of range");
    enc.hist.col(i) = p.embed.col(history[static_cast<std::size_t>(i)]);
  }
  enc.mean = enc.hist.rowwise().sum() / S(l);
  const Vec<S> last = enc.hist.col(l - 1);
  enc.attn = attention(p, enc.hist, last, enc.mean, normalized_attention);
  enc.combined = enc.attn.summary + enc.mean;
  enc.hidden_session = affine_tanh(p.ffn_session, p.ffn_session_bias, enc.combined);
  enc.hidden_last = affine_tanh(p.ffn_last, p.ffn_last_bias, last);
  enc.session = enc.hidden_session.cwiseProduct(enc.hidden_last);
  return enc;
}

// Accumulates into `grads` (same shapes as the parameters); embedding
// gradients are scattered onto the history columns only.
template <class S>
void encode_backward(const StampParams<S>& p, std::span<const ItemIndex> history,
                     const SessionEncoding<S>& enc, const Vec<S>& g_session,
                     bool normalized_attention, StampParams<S>& grads) {
  const Index d = p.dim();
  const Index l = static_cast<Index>(history.size());
  const Vec<S> last = enc.hist.col(l - 1);

  const Vec<S> g_hidden_session = g_session.cwiseProduct(enc.hidden_last);
  const Vec<S> g_hidden_last = g_session.cwiseProduct(enc.hidden_session);

  auto g_last_layer = affine_tanh_backward(p.ffn_last, last, enc.hidden_last, g_hidden_last);
  grads.ffn_last += g_last_layer.w;
  grads.ffn_last_bias += g_last_layer.b;
  Vec<S> g_last = g_last_layer.x;

  auto g_session_layer =
      affine_tanh_backward(p.ffn_session, enc.combined, enc.hidden_session, g_hidden_session);
  grads.ffn_session += g_session_layer.w;
  grads.ffn_session_bias += g_session_layer.b;
  const Vec<S>& g_combined = g_session_layer.x;

  const Vec<S>& g_summary = g_combined;
  Vec<S> g_mean = g_combined;

  Mat<S> g_hist = Mat<S>::Zero(d, l);
  Vec<S> g_weights(l);
  if (normalized_attention) {
    Vec<S> g_norm(l);
    for (Index i = 0; i < l; ++i) {
      g_norm(i) = g_summary.dot(enc.hist.col(i));
      g_hist.col(i) += enc.attn.norm_weights(i) * g_summary;
    }
    const S inner = enc.attn.norm_weights.dot(g_norm);
    g_weights = (enc.attn.norm_weights.array() * (g_norm.array() - inner)).matrix();
  } else {
    for (Index i = 0; i < l; ++i) {
      g_weights(i) = g_summary.dot(enc.hist.col(i));
      g_hist.col(i) += enc.attn.weights(i) * g_summary;
    }
  }

  for (Index i = 0; i < l; ++i) {
    const auto gate = enc.attn.gates.col(i);
    grads.attn_gate += g_weights(i) * gate;
    const Vec<S> g_gate = g_weights(i) * p.attn_gate;
    const Vec<S> g_z =
        (g_gate.array() * gate.array() * (S(1) - gate.array())).matrix();
    grads.attn_item.noalias() += g_z * enc.hist.col(i).transpose();
    grads.attn_last.noalias() += g_z * last.transpose();
    grads.attn_mean.noalias() += g_z * enc.mean.transpose();
    grads.attn_bias += g_z;
    g_hist.col(i).noalias() += p.attn_item.transpose() * g_z;
    g_last.noalias() += p.attn_last.transpose() * g_z;
    g_mean.noalias() += p.attn_mean.transpose() * g_z;
  }

  g_hist.colwise() += (g_mean / S(l)).eval();
  g_hist.col(l - 1) += g_last;

  for (Index i = 0; i < l; ++i)
    grads.embed.col(history[static_cast<std::size_t>(i)]) += g_hist.col(i);
}

// Short-Term Memory Only baseline: one tanh layer over the last item,
// sharing the embedding table and the last-item weight.
template <class S>
struct StmoEncoding {
  Vec<S> last;
  Vec<S> session;  // tanh(W' last)
};

template <class S>
StmoEncoding<S> encode_stmo(const StampParams<S>& p, std::span<const ItemIndex> history) {
  if (history.empty()) throw std::invalid_argument("encode_stmo: empty history");
  const ItemIndex anchor = history.back();
  if (anchor >= p.items()) throw std::invalid_argument("encode_stmo: item index out of range");
  StmoEncoding<S> enc;
  enc.last = p.embed.col(anchor);
  enc.session = (p.ffn_last.transpose() * enc.last).array().tanh().matrix();
  return enc;
}

template <class S>
void encode_stmo_backward(const StampParams<S>& p, std::span<const ItemIndex> history,
                          const StmoEncoding<S>& enc, const Vec<S>& g_session,
                          StampParams<S>& grads) {
  const Vec<S> g_u =
      (g_session.array() * (S(1) - enc.session.array().square())).matrix();
  grads.ffn_last.noalias() += enc.last * g_u.transpose();
  grads.embed.col(history.back()).noalias() += p.ffn_last * g_u;
}

// Dot-product decoder: logits over the whole assortment.
template <class S>
Vec<S> score_full(const StampParams<S>& p, const Vec<S>& session) {
  return p.embed.transpose() * session;
}

// Deterministic top-`len` by (score desc, item index asc).
template <class S>
std::vector<ItemIndex> top_items(const Vec<S>& scores, std::size_t len) {
  std::vector<ItemIndex> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0u);
  const std::size_t take = std::min(len, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                    order.end(), [&scores](ItemIndex a, ItemIndex b) {
                      const S sa = scores(a), sb = scores(b);
                      return sa != sb ? sa > sb : a < b;
                    });
  order.resize(take);
  return order;
}

// Per-example training objective: cross-entropy of the decoder over all
// items. Used directly by the gradient checker; the trainer batches the
// decoder part but shares encode/encode_backward.
template <class S>
S generator_example_loss(const StampParams<S>& p, std::span<const ItemIndex> history,
                         ItemIndex target, EncoderKind kind, bool normalized_attention) {
  Vec<S> session;
  if (kind == EncoderKind::stamp)
    session = encode(p, history, normalized_attention).session;
  else
    session = encode_stmo(p, history).session;
  return softmax_xent(Vec<S>(score_full(p, session)), static_cast<Index>(target)).loss;
}

template <class S>
S generator_example_grad(const StampParams<S>& p, std::span<const ItemIndex> history,
                         ItemIndex target, EncoderKind kind, bool normalized_attention,
                         StampParams<S>& grads) {
  if (kind == EncoderKind::stamp) {
    auto enc = encode(p, history, normalized_attention);
    auto sm = softmax_xent(Vec<S>(score_full(p, enc.session)), static_cast<Index>(target));
    Vec<S> g_logits = softmax_xent_backward(sm.probs, static_cast<Index>(target));
    Vec<S> g_session = p.embed * g_logits;
    grads.embed.noalias() += enc.session * g_logits.transpose();
    encode_backward(p, history, enc, g_session, normalized_attention, grads);
    return sm.loss;
  }
  auto enc = encode_stmo(p, history);
  auto sm = softmax_xent(Vec<S>(score_full(p, enc.session)), static_cast<Index>(target));
  Vec<S> g_logits = softmax_xent_backward(sm.probs, static_cast<Index>(target));
  Vec<S> g_session = p.embed * g_logits;
  grads.embed.noalias() += enc.session * g_logits.transpose();
  encode_stmo_backward(p, history, enc, g_session, grads);
  return sm.loss;
}

template <class S>
class StampGenerator : public Recommender {
 public:
  StampGenerator(StampParams<S> params, EncoderKind kind, bool normalized_attention)
      : params_(std::move(params)), kind_(kind), normalized_(normalized_attention) {}

  std::vector<ItemIndex> recommend(std::span<const ItemIndex> history,
                                   std::size_t len) const override {
    Vec<S> session;
    if (kind_ == EncoderKind::stamp)
      session = encode(params_, history, normalized_).session;
    else
      session = encode_stmo(params_, history).session;
    Vec<S> logits = score_full(params_, session);
    return top_items(logits, len);
  }

  const StampParams<S>& params() const { return params_; }
  EncoderKind kind() const { return kind_; }
  bool normalized_attention() const { return normalized_; }

 private:
  StampParams<S> params_;
  EncoderKind kind_;
  bool normalized_;
};

}  // namespace crerank
