#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "oada/fcoslite/config.hpp"
#include "oada/scenegen/scene.hpp"
#include "oada/diffcore/tensor.hpp"

namespace oada::fcos {

using scene::Box;

// Image-space coordinate of feature cell index i at the given stride.
inline double location_coord(int i, int stride) { return static_cast<double>(i * stride + stride / 2); }

struct LevelTargets {
  int lv = 3;
  int stride = 8;
  int height = 0;
  int width = 0;
  std::vector<int> cls;       // class id, -1 for background
  std::vector<int> box_index; // assigned GT box, -1 for background
  diff::Tensor offsets;       // 4 x H x W: l*, t*, r*, b*
  diff::Tensor centerness;    // 1 x H x W
  diff::Tensor fg;            // 1 x H x W, 0 or 1
  int num_fg = 0;

  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
};

using AssignedTargets = std::vector<LevelTargets>;

inline double centerness_target(double l, double t, double r, double b) {
  return std::sqrt((std::min(l, r) / std::max(l, r)) * (std::min(t, b) / std::max(t, b)));
}

// FCOS-style assignment. A cell is foreground for a box when it lies strictly
// inside the box and the largest of its four offsets falls in the level's
// (previous max_offset, max_offset] band. Overlaps go to the smallest box.
inline AssignedTargets assign_targets(std::span<const Box> boxes, std::span<const int> labels,
                                      const DetectorConfig& cfg) {
  if (boxes.size() != labels.size()) throw std::invalid_argument("assign_targets: boxes/labels length differ");
  // Paint larger boxes first so smaller ones overwrite; equal areas keep the
  // lower box index.
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (boxes[a].area() != boxes[b].area()) return boxes[a].area() > boxes[b].area();
    return a > b;
  });

  AssignedTargets out;
  double lower = 0.0;
  for (std::size_t l = 0; l < cfg.levels.size(); ++l) {
    const LevelSpec& spec = cfg.levels[l];
    LevelTargets t;
    t.lv = spec.lv;
    t.stride = spec.stride();
    t.height = t.width = cfg.feature_size(l);
    const std::size_t plane = static_cast<std::size_t>(t.height) * t.width;
    t.cls.assign(plane, -1);
    t.box_index.assign(plane, -1);
    t.offsets = diff::Tensor({4, t.height, t.width});
    t.centerness = diff::Tensor({1, t.height, t.width});
    t.fg = diff::Tensor({1, t.height, t.width});
    for (std::size_t k : order) {
      const Box& b = boxes[k];
      // Cells whose centers fall strictly inside the box.
      const int x0 = std::max(0, static_cast<int>(std::floor((b.x1 - t.stride / 2) / t.stride)) + 1);
      const int x1 = std::min(t.width - 1, static_cast<int>(std::ceil((b.x2 - t.stride / 2) / t.stride)) - 1);
      const int y0 = std::max(0, static_cast<int>(std::floor((b.y1 - t.stride / 2) / t.stride)) + 1);
      const int y1 = std::min(t.height - 1, static_cast<int>(std::ceil((b.y2 - t.stride / 2) / t.stride)) - 1);
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double px = location_coord(x, t.stride), py = location_coord(y, t.stride);
          const double ol = px - b.x1, ot = py - b.y1, orr = b.x2 - px, ob = b.y2 - py;
          if (ol <= 0 || ot <= 0 || orr <= 0 || ob <= 0) continue;
          const double m = std::max({ol, ot, orr, ob});
          if (!(m > lower && m <= spec.max_offset)) continue;
          const std::size_t i = t.index(y, x);
          t.cls[i] = labels[k];
          t.box_index[i] = static_cast<int>(k);
          t.offsets[i] = ol;
          t.offsets[plane + i] = ot;
          t.offsets[2 * plane + i] = orr;
          t.offsets[3 * plane + i] = ob;
          t.centerness[i] = centerness_target(ol, ot, orr, ob);
          t.fg[i] = 1.0;
        }
      }
    }
    for (double v : t.fg.data()) t.num_fg += v > 0.0 ? 1 : 0;
    out.push_back(std::move(t));
    lower = spec.max_offset;
  }
  return out;
}

inline int total_foreground(const AssignedTargets& t) {
  int n = 0;
  for (const auto& l : t) n += l.num_fg;
  return n;
}

}  // namespace oada::fcos
