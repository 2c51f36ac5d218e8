#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "oada/align/binning.hpp"
#include "oada/diffcore.hpp"

namespace oada::align {

using diff::Tape;
using diff::Tensor;
using diff::Var;

enum class Branch { left, top };

inline const char* to_string(Branch b) { return b == Branch::left ? "left" : "top"; }

// Offset channel for the branch and its opposite side in an l, t, r, b map.
inline int branch_channel(Branch b) { return b == Branch::left ? 0 : 1; }
inline int opposite_channel(Branch b) { return b == Branch::left ? 2 : 3; }

enum class Strategy { outer, concat, multiply, multiply_stack };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::outer: return "outer";
    case Strategy::concat: return "concat";
    case Strategy::multiply: return "multiply";
    case Strategy::multiply_stack: return "multiply_stack";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "outer") return Strategy::outer;
  if (s == "concat" || s == "concatenate") return Strategy::concat;
  if (s == "multiply") return Strategy::multiply;
  if (s == "multiply_stack") return Strategy::multiply_stack;
  throw std::invalid_argument("unknown conditioning strategy '" + s + "'");
}

inline int conditioned_channels(Strategy s, int d, int n_bin) {
  switch (s) {
    case Strategy::outer: return d * n_bin;
    case Strategy::concat: return d + n_bin;
    case Strategy::multiply: return d;
    case Strategy::multiply_stack: return 3 * d;
  }
  throw std::invalid_argument("unknown conditioning strategy");
}

// log2 offset mapped linearly from [lv - 1, lv + 2] onto [0, 1], clamped.
inline double normalized_log_offset(double z, int lv) {
  return std::clamp((std::log2(z) - (lv - 1)) / 3.0, 0.0, 1.0);
}

struct ConditionedMap {
  Var map;         // conditioned features, already multiplied by the mask
  Tensor q_tilde;  // blended bin probabilities, N x H x W
};

struct ConditionParams {
  BinSpec bins;
  double alpha = 1.0;
  int lv = 3;
  Strategy strategy = Strategy::outer;
  bool grad_to_q = false;
};

namespace detail {

inline void check_masked_offsets(const Tensor& offsets, const Tensor& mask, int channel) {
  const std::size_t plane = mask.size();
  for (std::size_t i = 0; i < plane; ++i) {
    if (mask[i] == 0.0) continue;
    const double z = offsets[static_cast<std::size_t>(channel) * plane + i];
    if (!(z > 0.0) || !std::isfinite(z)) {
      throw std::invalid_argument("build_conditioned_map: missing offset at masked location " + std::to_string(i));
    }
  }
}

// Blended bin probabilities as plain values; unmasked locations without a
// usable offset get the uniform vector.
inline Tensor blended_q(const Tensor& offsets, const Tensor& mask, int channel, const ConditionParams& p) {
  const int n = p.bins.n_bin();
  const int h = mask.dim(1), w = mask.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor q({n, h, w});
  const std::vector<double> uniform(static_cast<std::size_t>(n), 1.0 / n);
  for (std::size_t i = 0; i < plane; ++i) {
    const double z = offsets[static_cast<std::size_t>(channel) * plane + i];
    const std::vector<double> qi = (z > 0.0 && std::isfinite(z)) ? offset_to_prob(z, p.bins) : uniform;
    const std::vector<double> qt = blend_prob(qi, p.alpha);
    for (int k = 0; k < n; ++k) q[static_cast<std::size_t>(k) * plane + i] = qt[static_cast<std::size_t>(k)];
  }
  return q;
}

// Same quantity recorded on the tape so gradients can reach the offsets.
inline Var blended_q_var(Var offsets, int channel, const ConditionParams& p) {
  Tape& tape = *offsets.tape;
  Var z = diff::slice_channels(offsets, channel, channel + 1);
  Var log2z = diff::scale(diff::log(z), 1.0 / std::log(2.0));
  const diff::Shape shape = z.value().shape();
  std::vector<Var> logits;
  for (double m : p.bins.m) {
    Var d = diff::add(log2z, tape.constant(Tensor(shape, -m), "bin-center"));
    logits.push_back(diff::scale(diff::mul(d, d), -p.bins.sharpness()));
  }
  Var q = diff::softmax(diff::concat_channels(logits), 0);
  const diff::Shape q_shape = q.value().shape();
  return diff::add(diff::scale(q, 1.0 - p.alpha), tape.constant(Tensor(q_shape, p.alpha / p.bins.n_bin()), "uniform"));
}

}  // namespace detail

// Conditions a D x H x W feature map on one offset branch and applies the
// objectness mask (1 x H x W). `offsets` is the 4 x H x W (l, t, r, b) map:
// ground truth on the source, predictions on the target.
inline ConditionedMap build_conditioned_map(Var feature, Var offsets, const Tensor& mask, Branch branch,
                                            const ConditionParams& p) {
  p.bins.validate();
  const Tensor& f = feature.value();
  const Tensor& off = offsets.value();
  if (f.rank() != 3 || off.rank() != 3 || off.dim(0) != 4 || off.dim(1) != f.dim(1) || off.dim(2) != f.dim(2) ||
      mask.shape() != diff::Shape{1, f.dim(1), f.dim(2)}) {
    throw diff::ShapeError("build_conditioned_map: feature " + diff::shape_str(f.shape()) + ", offsets " +
                           diff::shape_str(off.shape()) + ", mask " + diff::shape_str(mask.shape()));
  }
  const int ch = branch_channel(branch);
  detail::check_masked_offsets(off, mask, ch);
  ConditionedMap out;
  out.q_tilde = detail::blended_q(off, mask, ch, p);
  Tape& tape = *feature.tape;
  Var g;
  switch (p.strategy) {
    case Strategy::outer: {
      Var q = p.grad_to_q ? detail::blended_q_var(offsets, ch, p) : tape.constant(out.q_tilde, "q_tilde");
      g = diff::outer_product_channels(feature, q, p.grad_to_q);
      break;
    }
    case Strategy::concat:
      g = diff::concat_channels({feature, tape.constant(out.q_tilde, "q_tilde")});
      break;
    case Strategy::multiply:
    case Strategy::multiply_stack: {
      const std::size_t plane = mask.size();
      auto scalar_map = [&](int channel) {
        detail::check_masked_offsets(off, mask, channel);
        Tensor s(mask.shape());
        for (std::size_t i = 0; i < plane; ++i) {
          const double z = off[static_cast<std::size_t>(channel) * plane + i];
          s[i] = z > 0.0 && std::isfinite(z) ? normalized_log_offset(z, p.lv) : 0.0;
        }
        return s;
      };
      if (p.strategy == Strategy::multiply) {
        g = diff::mask_mul(feature, scalar_map(ch));
      } else {
        g = diff::concat_channels({feature, diff::mask_mul(feature, scalar_map(ch)),
                                   diff::mask_mul(feature, scalar_map(opposite_channel(branch)))});
      }
      break;
    }
  }
  out.map = diff::mask_mul(g, mask);
  return out;
}

}  // namespace oada::align
