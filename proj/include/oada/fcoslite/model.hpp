#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "oada/diffcore.hpp"
#include "oada/fcoslite/config.hpp"
#include "oada/util/seed.hpp"

namespace oada::fcos {

using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;

struct ConvLayer {
  std::string name;
  Tensor weight;  // out x in x k x k
  Tensor bias;    // out
  int stride = 1;

  Var operator()(Tape& tape, Var x) const {
    // Parameters are bound by address; the tape never writes through them.
    return diff::conv2d(x, tape.param(const_cast<Tensor&>(weight)), tape.param(const_cast<Tensor&>(bias)),
                        stride);
  }
};

// Normal(0, std) weights; std defaults to He scaling sqrt(2 / fan_in).
inline ConvLayer make_conv(std::string name, int in, int out, int kernel, int stride, std::mt19937_64& rng,
                           double std = -1.0, double bias = 0.0) {
  ConvLayer c;
  c.name = std::move(name);
  c.stride = stride;
  c.weight = Tensor({out, in, kernel, kernel});
  c.bias = Tensor({out}, bias);
  if (std < 0.0) std = std::sqrt(2.0 / (in * kernel * kernel));
  std::normal_distribution<double> n(0.0, std);
  for (double& v : c.weight.data()) v = n(rng);
  c.weight.set_requires_grad(true);
  c.bias.set_requires_grad(true);
  return c;
}

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

// Differentiable per-level outputs of one forward pass.
struct LevelOutput {
  Var feature;     // D x H x W backbone feature F
  Var cls_logits;  // C x H x W
  Var ctr_logits;  // 1 x H x W
  Var reg;         // 4 x H x W offsets (l, t, r, b) in pixels, > 0
};

// Plain-value copy of a level's predictions.
struct LevelPrediction {
  int stride = 8;
  Tensor cls_logits;
  Tensor ctr_logits;
  Tensor reg;
};

// Small anchor-free detector: five-block convolutional backbone (stride 8,
// 16, 32 outputs) and a head shared across levels with classification,
// centerness and exp-mapped regression branches.
class Detector {
 public:
  Detector() = default;

  Detector(DetectorConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(derive_seed(init_seed, "detector-init"));
    const int s = cfg_.stem_channels, d = cfg_.feature_channels;
    backbone_.push_back(make_conv("backbone.block1", 3, s, 3, 2, rng));
    backbone_.push_back(make_conv("backbone.block2", s, 2 * s, 3, 2, rng));
    backbone_.push_back(make_conv("backbone.block3a", 2 * s, d, 3, 2, rng));
    backbone_.push_back(make_conv("backbone.block3b", d, d, 3, 1, rng));
    for (std::size_t l = 1; l < cfg_.levels.size(); ++l) {
      backbone_.push_back(make_conv("backbone.block" + std::to_string(3 + l), d, d, 3, 2, rng));
    }
    const double prior = 0.01;
    cls_tower_ = make_conv("head.cls_tower", d, d, 3, 1, rng);
    cls_out_ = make_conv("head.cls_out", d, cfg_.num_classes, 3, 1, rng, 0.01, -std::log((1.0 - prior) / prior));
    reg_tower_ = make_conv("head.reg_tower", d, d, 3, 1, rng);
    reg_out_ = make_conv("head.reg_out", d, 4, 3, 1, rng, 0.01);
    ctr_out_ = make_conv("head.ctr_out", d, 1, 3, 1, rng, 0.01);
  }

  const DetectorConfig& config() const { return cfg_; }

  std::vector<Var> backbone_forward(Tape& tape, Var image) const {
    const Tensor& img = image.value();
    if (img.rank() != 3 || img.dim(0) != 3 || img.dim(1) != cfg_.image_size || img.dim(2) != cfg_.image_size) {
      throw diff::ShapeError("backbone: expected 3x" + std::to_string(cfg_.image_size) + "x" +
                             std::to_string(cfg_.image_size) + " image, got " + diff::shape_str(img.shape()));
    }
    // Pixels in [0, 1] are recentred to [-1, 1].
    Var x = diff::scale(diff::add(image, tape.constant(Tensor(img.shape(), -0.5), "pixel-mean")), 2.0);
    for (std::size_t i = 0; i < 4; ++i) x = diff::relu(backbone_[i](tape, x));
    std::vector<Var> feats{x};
    for (std::size_t i = 4; i < backbone_.size(); ++i) {
      x = diff::relu(backbone_[i](tape, x));
      feats.push_back(x);
    }
    return feats;
  }

  LevelOutput head_forward(Tape& tape, Var feature, std::size_t level) const {
    LevelOutput out;
    out.feature = feature;
    Var ct = diff::relu(cls_tower_(tape, feature));
    out.cls_logits = cls_out_(tape, ct);
    Var rt = diff::relu(reg_tower_(tape, feature));
    out.ctr_logits = ctr_out_(tape, rt);
    out.reg = diff::scale(diff::exp(reg_out_(tape, rt)), cfg_.levels.at(level).stride());
    return out;
  }

  std::vector<LevelOutput> forward(Tape& tape, Var image) const {
    std::vector<LevelOutput> outs;
    const auto feats = backbone_forward(tape, image);
    for (std::size_t l = 0; l < feats.size(); ++l) outs.push_back(head_forward(tape, feats[l], l));
    return outs;
  }

  std::vector<LevelPrediction> predict(const Tensor& image) const {
    Tape tape(false);
    std::vector<LevelPrediction> preds;
    const auto outs = forward(tape, tape.constant(image, "image"));
    for (std::size_t l = 0; l < outs.size(); ++l) {
      preds.push_back({cfg_.levels[l].stride(), outs[l].cls_logits.value(), outs[l].ctr_logits.value(),
                       outs[l].reg.value()});
    }
    return preds;
  }

  std::vector<NamedParam> parameters() {
    std::vector<NamedParam> out;
    auto add = [&out](ConvLayer& c) {
      out.push_back({c.name + ".weight", &c.weight});
      out.push_back({c.name + ".bias", &c.bias});
    };
    for (ConvLayer& c : backbone_) add(c);
    for (ConvLayer* c : {&cls_tower_, &cls_out_, &reg_tower_, &reg_out_, &ctr_out_}) add(*c);
    return out;
  }

  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out;
    for (const NamedParam& p : const_cast<Detector*>(this)->parameters()) out.push_back(p.tensor);
    return out;
  }

  // Toggles gradient buffers on every parameter.
  void set_trainable(bool on) {
    for (NamedParam& p : parameters()) p.tensor->set_requires_grad(on);
  }

 private:
  DetectorConfig cfg_;
  std::vector<ConvLayer> backbone_;
  ConvLayer cls_tower_, cls_out_, reg_tower_, reg_out_, ctr_out_;
};

}  // namespace oada::fcos
