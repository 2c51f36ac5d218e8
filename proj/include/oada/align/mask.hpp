#pragma once

#include <algorithm>

#include "oada/diffcore/tensor.hpp"
#include "oada/fcoslite/assign.hpp"
#include "oada/fcoslite/decode.hpp"

namespace oada::align {

// Source objectness: the ground-truth foreground indicator of one level.
inline diff::Tensor objectness_mask_source(const fcos::LevelTargets& t) { return t.fg; }

// Target objectness from C x H x W class logits: the highest class
// probability where it strictly exceeds rho, zero elsewhere.
inline diff::Tensor objectness_mask_target(const diff::Tensor& cls_logits, double rho) {
  const int c_n = cls_logits.dim(0), h = cls_logits.dim(1), w = cls_logits.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  diff::Tensor m({1, h, w});
  for (std::size_t i = 0; i < plane; ++i) {
    double best = 0.0;
    for (int c = 0; c < c_n; ++c) best = std::max(best, fcos::sigmoid(cls_logits[static_cast<std::size_t>(c) * plane + i]));
    m[i] = best > rho ? best : 0.0;
  }
  return m;
}

// Same rule applied to probabilities directly.
inline double objectness_weight(std::span<const double> p_cls, double rho) {
  const double best = p_cls.empty() ? 0.0 : *std::max_element(p_cls.begin(), p_cls.end());
  return best > rho ? best : 0.0;
}

inline int count_nonzero(const diff::Tensor& mask) {
  return static_cast<int>(std::count_if(mask.data().begin(), mask.data().end(), [](double v) { return v != 0.0; }));
}

}  // namespace oada::align
