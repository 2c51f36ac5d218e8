#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "oada/diffcore/tensor.hpp"

namespace oada::scene {

using diff::Tensor;

// Axis-aligned box in pixels, origin top-left.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  bool well_ordered() const { return x1 < x2 && y1 < y2; }

  friend bool operator==(const Box&, const Box&) = default;
};

inline double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

enum class Silhouette { disc = 0, box = 1, triangle = 2 };

inline const char* silhouette_name(int label) {
  static constexpr std::array<const char*, 3> names{"disc", "box", "triangle"};
  return label >= 0 && label < 3 ? names[static_cast<std::size_t>(label)] : "unknown";
}

struct SceneSpec {
  int image_size = 128;
  int channels = 3;
  int num_classes = 3;
  int min_objects = 1;
  int max_objects = 6;
  int min_side = 6;
  int max_side = 56;
  std::uint64_t texture_seed = 7;

  void validate() const {
    if (image_size < 8) throw std::invalid_argument("scene spec: image_size must be >= 8");
    if (channels != 3) throw std::invalid_argument("scene spec: only 3-channel images are supported");
    if (num_classes < 1 || num_classes > 3) {
      throw std::invalid_argument("scene spec: num_classes must be in [1, 3]");
    }
    if (min_objects < 0 || min_objects > max_objects) {
      throw std::invalid_argument("scene spec: invalid object count range");
    }
    if (min_side < 2 || min_side > max_side) throw std::invalid_argument("scene spec: invalid side range");
    if (max_side > image_size) {
      throw std::invalid_argument("scene spec: object side " + std::to_string(max_side) +
                                  " exceeds image size " + std::to_string(image_size));
    }
  }
};

// Image is C x H x W with values in [0, 1].
struct Scene {
  Tensor image;
  std::vector<Box> boxes;
  std::vector<int> labels;

  int height() const { return image.dim(1); }
  int width() const { return image.dim(2); }
};

inline void validate_scene(const Scene& s, int num_classes) {
  if (s.boxes.size() != s.labels.size()) throw std::invalid_argument("scene: boxes/labels length differ");
  for (std::size_t i = 0; i < s.boxes.size(); ++i) {
    const Box& b = s.boxes[i];
    if (!b.well_ordered()) throw std::invalid_argument("scene: degenerate box");
    if (s.labels[i] < 0 || s.labels[i] >= num_classes) throw std::invalid_argument("scene: label out of range");
  }
}

}  // namespace oada::scene
