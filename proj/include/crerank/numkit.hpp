#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "crerank/errors.hpp"
#include "crerank/rng.hpp"
#include "crerank/types.hpp"

namespace crerank {

// ---------------------------------------------------------------------------
// Initialization

// Uniform in +-sqrt(6 / (rows + cols)). Draws are taken in row-major order
// at double precision and narrowed to Scalar, so the float and double
// streams agree up to rounding.
template <class Scalar>
Mat<Scalar> xavier_init(Index rows, Index cols, Rng& rng) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("xavier_init: zero dimension");
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat<Scalar> m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      m(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
  return m;
}

template <class Scalar>
Mat<Scalar> xavier_init(Index rows, Index cols, RngSeed seed) {
  Rng rng(seed);
  return xavier_init<Scalar>(rows, cols, rng);
}

// ---------------------------------------------------------------------------
// Affine + tanh building block.
//
// Weights are stored (d_in x d_out) and applied transposed, y = tanh(W'x + b),
// so written shapes line up with the model equations.

template <class Scalar>
Vec<Scalar> affine_tanh(const Mat<Scalar>& W, const Vec<Scalar>& b, const Vec<Scalar>& x) {
  if (W.rows() != x.size() || W.cols() != b.size())
    throw std::invalid_argument("affine_tanh: shape mismatch");
  return (W.transpose() * x + b).array().tanh().matrix();
}

template <class Scalar>
struct AffineTanhGrads {
  Mat<Scalar> w;
  Vec<Scalar> b;
  Vec<Scalar> x;
};

// y must be the forward output for (W, b, x); gy is dL/dy.
template <class Scalar>
AffineTanhGrads<Scalar> affine_tanh_backward(const Mat<Scalar>& W, const Vec<Scalar>& x,
                                             const Vec<Scalar>& y, const Vec<Scalar>& gy) {
  if (W.rows() != x.size() || W.cols() != y.size() || y.size() != gy.size())
    throw std::invalid_argument("affine_tanh_backward: shape mismatch");
  // gu = gy * (1 - y^2), the tanh derivative through the cached output.
  Vec<Scalar> gu = (gy.array() * (Scalar(1) - y.array().square())).matrix();
  AffineTanhGrads<Scalar> g;
  g.w.noalias() = x * gu.transpose();
  g.b = gu;
  g.x.noalias() = W * gu;
  return g;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy, stabilized by max subtraction.

template <class Scalar>
struct SoftmaxXent {
  Scalar loss;
  Vec<Scalar> probs;
};

template <class Scalar>
SoftmaxXent<Scalar> softmax_xent(const Vec<Scalar>& logits, Index target) {
  if (logits.size() < 1) throw std::invalid_argument("softmax_xent: empty logits");
  if (target < 0 || target >= logits.size())
    throw std::invalid_argument("softmax_xent: target out of range");
  const Scalar mx = logits.maxCoeff();
  Vec<Scalar> e = (logits.array() - mx).exp().matrix();
  const Scalar z = e.sum();
  SoftmaxXent<Scalar> out;
  out.probs = e / z;
  out.loss = std::log(z) - (logits(target) - mx);
  return out;
}

template <class Scalar>
Vec<Scalar> softmax(const Vec<Scalar>& logits) {
  if (logits.size() < 1) throw std::invalid_argument("softmax: empty logits");
  const Scalar mx = logits.maxCoeff();
  Vec<Scalar> e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

// dL/dlogits = probs - onehot(target).
template <class Scalar>
Vec<Scalar> softmax_xent_backward(const Vec<Scalar>& probs, Index target) {
  if (target < 0 || target >= probs.size())
    throw std::invalid_argument("softmax_xent_backward: target out of range");
  Vec<Scalar> g = probs;
  g(target) -= Scalar(1);
  return g;
}

// ---------------------------------------------------------------------------
// Adam (bias-corrected), applied in place.

template <class Scalar>
struct AdamConfig {
  Scalar lr = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
};

template <class TensorT>
struct AdamState {
  TensorT m;
  TensorT v;
  std::int64_t step = 0;

  static AdamState like(const TensorT& p) {
    AdamState s;
    s.m = TensorT::Zero(p.rows(), p.cols());
    s.v = TensorT::Zero(p.rows(), p.cols());
    return s;
  }
};

template <class TensorT>
void adam_step(TensorT& param, const TensorT& grad, AdamState<TensorT>& state,
               const AdamConfig<typename TensorT::Scalar>& cfg) {
  using Scalar = typename TensorT::Scalar;
  if (param.rows() != grad.rows() || param.cols() != grad.cols() ||
      param.rows() != state.m.rows() || param.cols() != state.m.cols())
    throw std::invalid_argument("adam_step: shape mismatch");
  state.step += 1;
  const Scalar b1 = cfg.beta1, b2 = cfg.beta2;
  state.m = b1 * state.m + (Scalar(1) - b1) * grad;
  state.v = (b2 * state.v.array() + (Scalar(1) - b2) * grad.array().square()).matrix();
  const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(state.step));
  const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(state.step));
  param.array() -= cfg.lr * (state.m.array() / c1) /
                   ((state.v.array() / c2).sqrt() + cfg.eps);
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checker (64-bit only by construction).
//
// Returns max over coordinates of |analytic - central| / max(|analytic|,
// |central|, 1e-12). f must be pure and deterministic.

inline double grad_check(const std::function<double(const VecD&)>& f, const VecD& at,
                         const VecD& analytic, double eps) {
  if (analytic.size() != at.size())
    throw std::invalid_argument("grad_check: gradient size mismatch");
  VecD x = at;
  double worst = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + eps;
    const double fp = f(x);
    x(i) = keep - eps;
    const double fm = f(x);
    x(i) = keep;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("grad_check: non-finite objective");
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic(i);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace crerank
