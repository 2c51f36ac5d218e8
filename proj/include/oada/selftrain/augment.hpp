#pragma once

#include <algorithm>
#include <cstdint>
#include <random>

#include "oada/diffcore/tensor.hpp"

namespace oada::selftrain {

// Photometric-only augmentation strengths; all zero gives the identity.
struct AugmentParams {
  double brightness = 0.2;  // additive shift drawn from [-b, b]
  double contrast = 0.3;    // gain drawn from [1 - c, 1 + c] around the image mean
  double color = 0.1;       // extra per-channel gain drawn from [1 - k, 1 + k]
  double noise_sigma = 0.03;
  int max_erase_patches = 2;
  int max_erase_side = 16;

  static AugmentParams none() { return {0.0, 0.0, 0.0, 0.0, 0, 0}; }
};

inline diff::Tensor strong_augment(const diff::Tensor& image, std::uint64_t seed, const AugmentParams& p = {}) {
  if (image.rank() != 3) throw diff::ShapeError("strong_augment: expected C x H x W image");
  diff::Tensor out = image;
  const int c_n = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double shift = p.brightness * u(rng);
  const double gain = 1.0 + p.contrast * u(rng);
  double mean = 0.0;
  for (double v : image.data()) mean += v;
  mean /= static_cast<double>(image.size());
  for (int c = 0; c < c_n; ++c) {
    const double cg = 1.0 + p.color * u(rng);
    for (std::size_t i = 0; i < plane; ++i) {
      double& v = out[static_cast<std::size_t>(c) * plane + i];
      v = (v + (gain - 1.0) * (v - mean)) * cg + shift;
    }
  }
  if (p.noise_sigma > 0.0) {
    std::normal_distribution<double> n(0.0, p.noise_sigma);
    for (double& v : out.data()) v += n(rng);
  }
  if (p.max_erase_patches > 0 && p.max_erase_side > 0) {
    std::uniform_int_distribution<int> count(0, p.max_erase_patches);
    std::uniform_int_distribution<int> side(1, std::min({p.max_erase_side, h, w}));
    std::uniform_real_distribution<double> fill(0.0, 1.0);
    const int n = count(rng);
    for (int k = 0; k < n; ++k) {
      const int ph = side(rng), pw = side(rng);
      const int y0 = std::uniform_int_distribution<int>(0, h - ph)(rng);
      const int x0 = std::uniform_int_distribution<int>(0, w - pw)(rng);
      const double val = fill(rng);
      for (int c = 0; c < c_n; ++c) {
        for (int y = y0; y < y0 + ph; ++y) {
          for (int x = x0; x < x0 + pw; ++x) out.at(c, y, x) = val;
        }
      }
    }
  }
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace oada::selftrain
