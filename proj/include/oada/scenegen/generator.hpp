#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "oada/scenegen/scene.hpp"
#include "oada/util/seed.hpp"

namespace oada::scene {

namespace detail {

struct ObjectShape {
  Silhouette kind;
  Box box;
};

// Point-in-silhouette test in continuous pixel coordinates.
inline bool inside(const ObjectShape& s, double x, double y) {
  const Box& b = s.box;
  if (x < b.x1 || x > b.x2 || y < b.y1 || y > b.y2) return false;
  switch (s.kind) {
    case Silhouette::disc: {
      const double cx = 0.5 * (b.x1 + b.x2), cy = 0.5 * (b.y1 + b.y2);
      const double rx = 0.5 * b.width(), ry = 0.5 * b.height();
      const double dx = (x - cx) / rx, dy = (y - cy) / ry;
      return dx * dx + dy * dy <= 1.0;
    }
    case Silhouette::box:
      return true;
    case Silhouette::triangle: {
      const double cx = 0.5 * (b.x1 + b.x2);
      const double frac = (y - b.y1) / b.height();
      return std::abs(x - cx) <= 0.5 * b.width() * frac;
    }
  }
  return false;
}

inline double mean3(const std::array<double, 3>& c) { return (c[0] + c[1] + c[2]) / 3.0; }

}  // namespace detail

// Deterministic procedural scene: textured background plus 2x2-supersampled
// silhouettes, one silhouette per class.
inline Scene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  spec.validate();
  const int n = spec.image_size;
  std::mt19937_64 rng(derive_seed(seed, "scene"));
  std::mt19937_64 tex_rng(derive_seed(spec.texture_seed, "texture", seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Scene scene;
  scene.image = Tensor({3, n, n});

  std::array<double, 3> base{};
  for (double& b : base) b = 0.25 + 0.5 * unit(tex_rng);
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::array<Wave, 3> waves{};
  for (Wave& w : waves) {
    const double angle = 2.0 * M_PI * unit(tex_rng);
    const double freq = 2.0 * M_PI / (16.0 + 48.0 * unit(tex_rng));
    w = {freq * std::cos(angle), freq * std::sin(angle), 2.0 * M_PI * unit(tex_rng), 0.04 + 0.04 * unit(tex_rng)};
  }
  std::normal_distribution<double> grain(0.0, 0.015);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double t = 0.0;
      for (const Wave& w : waves) t += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
      for (int c = 0; c < 3; ++c) scene.image.at(c, y, x) = base[static_cast<std::size_t>(c)] + t + grain(tex_rng);
    }
  }

  std::uniform_int_distribution<int> count_dist(spec.min_objects, spec.max_objects);
  std::uniform_int_distribution<int> class_dist(0, spec.num_classes - 1);
  std::uniform_int_distribution<int> side_dist(spec.min_side, spec.max_side);
  const int count = count_dist(rng);
  for (int k = 0; k < count; ++k) {
    const int label = class_dist(rng);
    const int side = side_dist(rng);
    const double aspect = 0.6 + 0.4 * unit(rng);
    int w = side, h = side;
    if (label != static_cast<int>(Silhouette::disc) || unit(rng) < 0.5) {
      const int other = std::max(spec.min_side, static_cast<int>(std::lround(side * aspect)));
      if (unit(rng) < 0.5) w = other; else h = other;
    }
    // Find a placement that does not heavily overlap earlier objects.
    bool placed = false;
    Box box;
    for (int attempt = 0; attempt < 30 && !placed; ++attempt) {
      std::uniform_int_distribution<int> xd(0, n - w), yd(0, n - h);
      const int x1 = xd(rng), y1 = yd(rng);
      box = {static_cast<double>(x1), static_cast<double>(y1), static_cast<double>(x1 + w),
             static_cast<double>(y1 + h)};
      placed = true;
      for (const Box& other : scene.boxes) {
        if (iou(box, other) > 0.15) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) continue;

    std::array<double, 3> fill{};
    for (double& f : fill) f = unit(rng);
    // Keep the fill intensity at least 0.25 away from the background mean.
    const double gap = detail::mean3(fill) - detail::mean3(base);
    if (std::abs(gap) < 0.25) {
      const double shift = (gap >= 0 ? 1.0 : -1.0) * (0.25 + 0.2 * unit(rng)) - gap;
      for (double& f : fill) f = std::clamp(f + shift, 0.0, 1.0);
    }

    const detail::ObjectShape shape{static_cast<Silhouette>(label), box};
    for (int y = static_cast<int>(box.y1); y < static_cast<int>(box.y2); ++y) {
      for (int x = static_cast<int>(box.x1); x < static_cast<int>(box.x2); ++x) {
        int hits = 0;
        for (double sy : {0.25, 0.75}) {
          for (double sx : {0.25, 0.75}) hits += detail::inside(shape, x + sx, y + sy) ? 1 : 0;
        }
        if (hits == 0) continue;
        const double cover = hits / 4.0;
        for (int c = 0; c < 3; ++c) {
          double& px = scene.image.at(c, y, x);
          px = (1.0 - cover) * px + cover * fill[static_cast<std::size_t>(c)];
        }
      }
    }
    scene.boxes.push_back(box);
    scene.labels.push_back(label);
  }
  for (double& v : scene.image.data()) v = std::clamp(v, 0.0, 1.0);
  return scene;
}

}  // namespace oada::scene
