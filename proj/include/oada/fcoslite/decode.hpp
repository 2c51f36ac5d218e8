#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "oada/fcoslite/assign.hpp"
#include "oada/fcoslite/model.hpp"
#include "oada/scenegen/scene.hpp"

namespace oada::fcos {

struct Detection {
  Box box;
  int label = 0;
  double score = 0.0;       // class probability x centerness
  double confidence = 0.0;  // class probability alone
};

struct DecodeParams {
  double score_thresh = 0.05;
  double nms_iou = 0.5;
  int max_dets = 100;
  int pre_nms_top_k = 1000;
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Box decode_box(double x, double y, double l, double t, double r, double b) {
  return {x - l, y - t, x + r, y + b};
}

// Greedy per-class NMS; candidates are visited by descending score with
// ties broken by input order.
inline std::vector<Detection> nms(std::vector<Detection> cands, double iou_thresh, int max_dets) {
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cands[a].score > cands[b].score; });
  std::vector<Detection> kept;
  for (std::size_t idx : order) {
    const Detection& d = cands[idx];
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.label == d.label && scene::iou(k.box, d.box) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (suppressed) continue;
    kept.push_back(d);
    if (static_cast<int>(kept.size()) >= max_dets) break;
  }
  return kept;
}

inline std::vector<Detection> decode_and_nms(std::span<const LevelPrediction> levels, int image_size,
                                             const DecodeParams& p = {}) {
  std::vector<Detection> cands;
  for (const LevelPrediction& lp : levels) {
    const int c_n = lp.cls_logits.dim(0), h = lp.cls_logits.dim(1), w = lp.cls_logits.dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<Detection> level_cands;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const double ctr = sigmoid(lp.ctr_logits[i]);
        for (int c = 0; c < c_n; ++c) {
          const double prob = sigmoid(lp.cls_logits[static_cast<std::size_t>(c) * plane + i]);
          const double score = prob * ctr;
          if (!(score > p.score_thresh)) continue;
          const double px = location_coord(x, lp.stride), py = location_coord(y, lp.stride);
          Box b = decode_box(px, py, lp.reg[i], lp.reg[plane + i], lp.reg[2 * plane + i], lp.reg[3 * plane + i]);
          b.x1 = std::max(0.0, b.x1);
          b.y1 = std::max(0.0, b.y1);
          b.x2 = std::min(static_cast<double>(image_size), b.x2);
          b.y2 = std::min(static_cast<double>(image_size), b.y2);
          level_cands.push_back({b, c, score, prob});
        }
      }
    }
    if (static_cast<int>(level_cands.size()) > p.pre_nms_top_k) {
      std::stable_sort(level_cands.begin(), level_cands.end(),
                       [](const Detection& a, const Detection& b) { return a.score > b.score; });
      level_cands.resize(static_cast<std::size_t>(p.pre_nms_top_k));
    }
    cands.insert(cands.end(), level_cands.begin(), level_cands.end());
  }
  return nms(std::move(cands), p.nms_iou, p.max_dets);
}

}  // namespace oada::fcos
