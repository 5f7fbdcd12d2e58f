#pragma once

#include <cmath>
#include <span>

#include "cafe/common.hpp"

namespace cafe {

struct ImportanceSignal {
  FeatureId feature = kEmptyFeature;
  double grad_l2 = 0.0;
};

// L2 norm of the pooled embedding gradient. The norm is taken before the
// gradient is scattered to shared rows, so collided features still get their
// own signal.
inline double score_from_gradient(std::span<const double> grad) {
  double sum = 0.0;
  for (double g : grad) {
    if (!std::isfinite(g)) throw NonFinite("score_from_gradient: non-finite component");
    sum += g * g;
  }
  return std::sqrt(sum);
}

// Frequency ablation: unit score per occurrence.
inline double score_from_frequency(double count_delta) { return count_delta; }

}  // namespace cafe
