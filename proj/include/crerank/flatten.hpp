#pragma once

#include "crerank/types.hpp"

namespace crerank {

// Round-trips a parameter struct through one flat double vector, visiting
// tensors in their canonical order, row-major within each tensor. Backs the
// finite-difference checks on whole models.

template <class P>
Index flat_size(const P& p) {
  Index n = 0;
  P::visit([&n](const char*, const auto& t) { n += t.size(); }, p);
  return n;
}

template <class P>
VecD flatten(const P& p) {
  VecD out(flat_size(p));
  Index k = 0;
  P::visit([&](const char*, const auto& t) {
    for (Index r = 0; r < t.rows(); ++r)
      for (Index c = 0; c < t.cols(); ++c) out(k++) = static_cast<double>(t(r, c));
  }, p);
  return out;
}

template <class P>
void unflatten(const VecD& flat, P& p) {
  Index k = 0;
  P::visit([&](const char*, auto& t) {
    using S = typename std::decay_t<decltype(t)>::Scalar;
    for (Index r = 0; r < t.rows(); ++r)
      for (Index c = 0; c < t.cols(); ++c) t(r, c) = static_cast<S>(flat(k++));
  }, p);
}

}  // namespace crerank
