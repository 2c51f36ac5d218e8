#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "oada/diffcore.hpp"
#include "oada/fcoslite/model.hpp"

namespace oada::align {

using diff::Tape;
using diff::Tensor;
using diff::Var;

// Fully convolutional domain classifier: two 3x3 conv + ReLU layers, a 1x1
// conv and a sigmoid, giving a per-location source probability.
class Discriminator {
 public:
  Discriminator() = default;

  Discriminator(std::string name, int in_channels, int hidden, std::uint64_t seed) : name_(std::move(name)) {
    if (in_channels < 1 || hidden < 1) throw std::invalid_argument("discriminator: bad channel counts");
    std::mt19937_64 rng(seed);
    c1_ = fcos::make_conv(name_ + ".conv1", in_channels, hidden, 3, 1, rng);
    c2_ = fcos::make_conv(name_ + ".conv2", hidden, hidden, 3, 1, rng);
    c3_ = fcos::make_conv(name_ + ".out", hidden, 1, 1, 1, rng, 0.01);
  }

  int in_channels() const { return c1_.weight.dim(1); }

  Var operator()(Tape& tape, Var x) const {
    if (x.value().dim(0) != in_channels()) {
      throw diff::ShapeError(name_ + ": expected " + std::to_string(in_channels()) + " channels, got " +
                             diff::shape_str(x.value().shape()));
    }
    Var h = diff::relu(c1_(tape, x));
    h = diff::relu(c2_(tape, h));
    return diff::sigmoid(c3_(tape, h));
  }

  std::vector<fcos::NamedParam> parameters() {
    std::vector<fcos::NamedParam> out;
    for (fcos::ConvLayer* c : {&c1_, &c2_, &c3_}) {
      out.push_back({c->name + ".weight", &c->weight});
      out.push_back({c->name + ".bias", &c->bias});
    }
    return out;
  }

 private:
  std::string name_;
  fcos::ConvLayer c1_, c2_, c3_;
};

namespace detail {

// Sum over images of BCE toward `label`, with per-location weights.
inline Var domain_bce(Tape& tape, std::span<const Var> probs, std::span<const Tensor> weights, double label,
                      double normalizer) {
  Var total = tape.constant(Tensor::scalar(0.0), "zero");
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const Tensor target(probs[k].value().shape(), label);
    total = diff::add(total, diff::binary_cross_entropy(probs[k], target, weights[k], normalizer));
  }
  return total;
}

}  // namespace detail

// Image-level adversarial loss on backbone features: source labelled 1,
// target 0, each domain averaged over all of its locations. Features pass
// through a gradient-reversal layer of strength lambda before `disc`.
template <class Disc>
Var global_adv_loss(Tape& tape, const Disc& disc, std::span<const Var> source, std::span<const Var> target,
                    double lambda) {
  auto side = [&](std::span<const Var> feats, double label) {
    std::vector<Var> probs;
    std::vector<Tensor> weights;
    double count = 0.0;
    for (const Var& f : feats) {
      probs.push_back(disc(tape, diff::grad_reverse(f, lambda)));
      weights.emplace_back(probs.back().value().shape(), 1.0);
      count += static_cast<double>(probs.back().value().size());
    }
    return detail::domain_bce(tape, probs, weights, label, std::max(1.0, count));
  };
  return diff::add(side(source, 1.0), side(target, 0.0));
}

// Conditional adversarial loss on mask-weighted conditioned maps. Only
// locations with a nonzero mask contribute; each domain is averaged over its
// contributing locations (count clamped at 1).
template <class Disc>
Var conditional_adv_loss(Tape& tape, const Disc& disc, std::span<const Var> source,
                         std::span<const Tensor> source_masks, std::span<const Var> target,
                         std::span<const Tensor> target_masks, double lambda) {
  if (source.size() != source_masks.size() || target.size() != target_masks.size()) {
    throw std::invalid_argument("conditional_adv_loss: maps and masks differ in count");
  }
  auto side = [&](std::span<const Var> maps, std::span<const Tensor> masks, double label) {
    std::vector<Var> probs;
    std::vector<Tensor> weights;
    double count = 0.0;
    for (std::size_t k = 0; k < maps.size(); ++k) {
      Tensor w = masks[k];
      double n = 0.0;
      for (double& v : w.data()) {
        v = v != 0.0 ? 1.0 : 0.0;
        n += v;
      }
      if (n == 0.0) continue;  // contributes nothing
      count += n;
      probs.push_back(disc(tape, diff::grad_reverse(maps[k], lambda)));
      weights.push_back(std::move(w));
    }
    return detail::domain_bce(tape, probs, weights, label, std::max(1.0, count));
  };
  return diff::add(side(source, source_masks, 1.0), side(target, target_masks, 0.0));
}

struct LossWeights {
  double lambda_g = 0.01;
  double lambda_c = 0.1;
  double grl_g = 0.02;
  double grl_c = 0.2;
};

inline Var mean_of(Tape& tape, std::span<const Var> xs) {
  Var s = tape.constant(Tensor::scalar(0.0), "zero");
  for (const Var& x : xs) s = diff::add(s, x);
  return diff::scale(s, 1.0 / static_cast<double>(xs.size()));
}

// L_det + lambda_g * mean_levels(L_g) + lambda_c * (mean_levels(L_c_left) +
// mean_levels(L_c_top)); empty lists drop their term.
inline Var total_loss(Var l_det, std::span<const Var> l_g, std::span<const Var> l_c_left,
                      std::span<const Var> l_c_top, double lambda_g, double lambda_c) {
  Tape& tape = *l_det.tape;
  Var total = l_det;
  if (!l_g.empty()) total = diff::add(total, diff::scale(mean_of(tape, l_g), lambda_g));
  if (!l_c_left.empty()) total = diff::add(total, diff::scale(mean_of(tape, l_c_left), lambda_c));
  if (!l_c_top.empty()) total = diff::add(total, diff::scale(mean_of(tape, l_c_top), lambda_c));
  return total;
}

}  // namespace oada::align
