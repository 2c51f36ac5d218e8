#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "oada/scenegen/scene.hpp"
#include "oada/util/seed.hpp"

namespace oada::scene {

enum class ShiftKind { fog, style };

inline const char* to_string(ShiftKind k) { return k == ShiftKind::fog ? "fog" : "style"; }

inline ShiftKind parse_shift_kind(const std::string& s) {
  if (s == "fog") return ShiftKind::fog;
  if (s == "style") return ShiftKind::style;
  throw std::invalid_argument("unknown shift kind '" + s + "'");
}

struct DomainShift {
  ShiftKind kind = ShiftKind::fog;
  double beta = 0.4;         // fog intensity in [0, 1]
  double blur_radius = 1.0;  // pixels, fog only
  std::array<double, 3> gain{1.0, 1.0, 1.0};
  std::array<double, 3> bias{0.0, 0.0, 0.0};
  double noise_sigma = 0.0;

  void validate() const {
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("shift: beta must be in [0, 1]");
    if (!(blur_radius >= 0.0 && blur_radius <= 16.0)) {
      throw std::invalid_argument("shift: blur radius must be in [0, 16]");
    }
    for (double g : gain) {
      if (!(g >= 0.0 && g <= 4.0)) throw std::invalid_argument("shift: gain must be in [0, 4]");
    }
    for (double b : bias) {
      if (!(b >= -1.0 && b <= 1.0)) throw std::invalid_argument("shift: bias must be in [-1, 1]");
    }
    if (!(noise_sigma >= 0.0 && noise_sigma <= 1.0)) {
      throw std::invalid_argument("shift: noise sigma must be in [0, 1]");
    }
  }
};

namespace detail {

inline constexpr double kFogGray = 0.5;

// Separable Gaussian blur with sigma = radius / 2 and clamped borders.
inline void gaussian_blur(Tensor& img, double radius) {
  if (radius <= 0.0) return;
  const int half = static_cast<int>(std::ceil(radius));
  const double sigma = std::max(radius / 2.0, 1e-3);
  std::vector<double> k(static_cast<std::size_t>(2 * half + 1));
  double z = 0.0;
  for (int i = -half; i <= half; ++i) {
    k[static_cast<std::size_t>(i + half)] = std::exp(-0.5 * i * i / (sigma * sigma));
    z += k[static_cast<std::size_t>(i + half)];
  }
  for (double& v : k) v /= z;
  const int c_n = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor tmp(img.shape());
  for (int c = 0; c < c_n; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int i = -half; i <= half; ++i) {
          s += k[static_cast<std::size_t>(i + half)] * img.at(c, y, std::clamp(x + i, 0, w - 1));
        }
        tmp.at(c, y, x) = s;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int i = -half; i <= half; ++i) {
          s += k[static_cast<std::size_t>(i + half)] * tmp.at(c, std::clamp(y + i, 0, h - 1), x);
        }
        img.at(c, y, x) = s;
      }
    }
  }
}

}  // namespace detail

// Label-preserving appearance shift. Fog blends toward gray with a per-pixel
// amount beta^gamma; gamma is 1 on background and drops toward 0.5 inside
// small objects, so small (distant) objects fade more. Style applies a
// per-channel affine map plus Gaussian noise.
inline Scene apply_shift(const Scene& scene, const DomainShift& shift, std::uint64_t seed) {
  shift.validate();
  Scene out = scene;
  Tensor& img = out.image;
  const int h = img.dim(1), w = img.dim(2);
  if (shift.kind == ShiftKind::fog) {
    std::vector<double> gamma(static_cast<std::size_t>(h) * w, 1.0);
    for (const Box& b : scene.boxes) {
      const double size = std::max(b.width(), b.height());
      const double g = 0.5 + 0.5 * std::min(1.0, size / 64.0);
      for (int y = std::max(0, static_cast<int>(b.y1)); y < std::min(h, static_cast<int>(std::ceil(b.y2))); ++y) {
        for (int x = std::max(0, static_cast<int>(b.x1)); x < std::min(w, static_cast<int>(std::ceil(b.x2))); ++x) {
          double& cell = gamma[static_cast<std::size_t>(y) * w + x];
          cell = std::min(cell, g);
        }
      }
    }
    for (int c = 0; c < img.dim(0); ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double a = std::pow(shift.beta, gamma[static_cast<std::size_t>(y) * w + x]);
          double& px = img.at(c, y, x);
          px = (1.0 - a) * px + a * detail::kFogGray;
        }
      }
    }
    detail::gaussian_blur(img, shift.blur_radius);
  } else {
    std::mt19937_64 rng(derive_seed(seed, "style-noise"));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int c = 0; c < img.dim(0); ++c) {
      const auto ci = static_cast<std::size_t>(c);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double& px = img.at(c, y, x);
          px = shift.gain[ci] * px + shift.bias[ci];
          if (shift.noise_sigma > 0.0) px += shift.noise_sigma * noise(rng);
        }
      }
    }
  }
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace oada::scene
