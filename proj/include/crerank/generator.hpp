#pragma once

#include <span>
#include <vector>

#include "crerank/types.hpp"

namespace crerank {

// First-stage ranking surface shared by CF and the neural generators; the
// two-stage pipeline and the evaluation harness only see this.
class Recommender {
 public:
  virtual ~Recommender() = default;

  // Top-`len` ranked items for a click history (most recent item last).
  // Returns fewer than `len` only when the assortment is exhausted.
  virtual std::vector<ItemIndex> recommend(std::span<const ItemIndex> history,
                                           std::size_t len) const = 0;
};

}  // namespace crerank
