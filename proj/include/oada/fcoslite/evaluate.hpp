#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "oada/fcoslite/decode.hpp"
#include "oada/scenegen/scene.hpp"

namespace oada::fcos {

struct GroundTruth {
  std::vector<Box> boxes;
  std::vector<int> labels;
};

struct MapReport {
  double map = 0.0;
  std::vector<std::optional<double>> per_class_ap;  // empty optional: class absent from GT
  int classes_present = 0;
};

// Area under the all-point interpolated precision/recall curve.
inline double average_precision(std::span<const double> recall, std::span<const double> precision) {
  std::vector<double> r{0.0}, p{0.0};
  r.insert(r.end(), recall.begin(), recall.end());
  p.insert(p.end(), precision.begin(), precision.end());
  r.push_back(1.0);
  p.push_back(0.0);
  for (std::size_t i = p.size() - 1; i > 0; --i) p[i - 1] = std::max(p[i - 1], p[i]);
  double ap = 0.0;
  for (std::size_t i = 1; i < r.size(); ++i) ap += (r[i] - r[i - 1]) * p[i];
  return ap;
}

// Per-class AP at a single IoU threshold, averaged over classes that appear
// in the ground truth. Each detection matches the unmatched-or-not GT box of
// its class with highest IoU; a repeat hit on a matched box is a false
// positive.
inline MapReport evaluate_map(std::span<const std::vector<Detection>> detections,
                              std::span<const GroundTruth> gt, int num_classes, double iou_thresh = 0.5) {
  if (detections.size() != gt.size()) throw std::invalid_argument("evaluate_map: image counts differ");
  MapReport rep;
  rep.per_class_ap.assign(static_cast<std::size_t>(num_classes), std::nullopt);
  double sum_ap = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    int n_gt = 0;
    for (const auto& g : gt) n_gt += static_cast<int>(std::count(g.labels.begin(), g.labels.end(), c));
    if (n_gt == 0) continue;
    struct Entry {
      double score;
      std::size_t image;
      Box box;
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < detections.size(); ++i) {
      for (const Detection& d : detections[i]) {
        if (d.label == c) entries.push_back({d.score, i, d.box});
      }
    }
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.score > b.score; });
    std::vector<std::vector<bool>> matched(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) matched[i].assign(gt[i].boxes.size(), false);
    std::vector<double> recall, precision;
    int tp = 0, fp = 0;
    for (const Entry& e : entries) {
      const GroundTruth& g = gt[e.image];
      double best = 0.0;
      int best_k = -1;
      for (std::size_t k = 0; k < g.boxes.size(); ++k) {
        if (g.labels[k] != c) continue;
        const double v = scene::iou(e.box, g.boxes[k]);
        if (v > best) {
          best = v;
          best_k = static_cast<int>(k);
        }
      }
      if (best_k >= 0 && best >= iou_thresh && !matched[e.image][static_cast<std::size_t>(best_k)]) {
        matched[e.image][static_cast<std::size_t>(best_k)] = true;
        ++tp;
      } else {
        ++fp;
      }
      recall.push_back(static_cast<double>(tp) / n_gt);
      precision.push_back(static_cast<double>(tp) / (tp + fp));
    }
    const double ap = average_precision(recall, precision);
    rep.per_class_ap[static_cast<std::size_t>(c)] = ap;
    sum_ap += ap;
    ++rep.classes_present;
  }
  rep.map = rep.classes_present > 0 ? sum_ap / rep.classes_present : 0.0;
  return rep;
}

inline GroundTruth to_ground_truth(const scene::Scene& s) { return {s.boxes, s.labels}; }

}  // namespace oada::fcos
