#pragma once

#include <span>
#include <vector>

#include "oada/diffcore.hpp"
#include "oada/fcoslite/assign.hpp"
#include "oada/fcoslite/model.hpp"

namespace oada::fcos {

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

struct DetectionLoss {
  Var total;
  double cls = 0.0;
  double reg = 0.0;
  double ctr = 0.0;
  int num_fg = 0;
};

inline Tensor one_hot_targets(const LevelTargets& t, int num_classes) {
  Tensor out({num_classes, t.height, t.width});
  const std::size_t plane = static_cast<std::size_t>(t.height) * t.width;
  for (std::size_t i = 0; i < plane; ++i) {
    if (t.cls[i] >= 0) out[static_cast<std::size_t>(t.cls[i]) * plane + i] = 1.0;
  }
  return out;
}

// Focal classification loss over every cell and class, plus IoU and
// centerness BCE over foreground cells; all three are divided by the batch
// foreground count (clamped at 1).
inline DetectionLoss detection_loss(Tape& tape, std::span<const std::vector<LevelOutput>> outputs,
                                    std::span<const AssignedTargets> targets, FocalParams focal = {}) {
  if (outputs.size() != targets.size()) throw std::invalid_argument("detection_loss: batch sizes differ");
  DetectionLoss out;
  for (const auto& t : targets) out.num_fg += total_foreground(t);
  const double norm = std::max(1, out.num_fg);
  std::vector<Var> terms;
  for (std::size_t b = 0; b < outputs.size(); ++b) {
    if (outputs[b].size() != targets[b].size()) throw std::invalid_argument("detection_loss: level counts differ");
    for (std::size_t l = 0; l < outputs[b].size(); ++l) {
      const LevelOutput& o = outputs[b][l];
      const LevelTargets& t = targets[b][l];
      const int num_classes = o.cls_logits.value().dim(0);
      Var cls = diff::focal_loss(o.cls_logits, one_hot_targets(t, num_classes), focal.alpha, focal.gamma, norm);
      out.cls += cls.value()[0];
      terms.push_back(cls);
      if (t.num_fg == 0) continue;
      Tensor safe_offsets = t.offsets;
      for (double& v : safe_offsets.data()) v = v > 0.0 ? v : 1.0;  // background cells carry zero weight
      Var reg = diff::iou_loss(o.reg, safe_offsets, t.fg, norm);
      Var ctr = diff::binary_cross_entropy(diff::sigmoid(o.ctr_logits), t.centerness, t.fg, norm);
      out.reg += reg.value()[0];
      out.ctr += ctr.value()[0];
      terms.push_back(reg);
      terms.push_back(ctr);
    }
  }
  if (terms.empty()) {
    out.total = tape.constant(Tensor::scalar(0.0), "zero");
    return out;
  }
  out.total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) out.total = diff::add(out.total, terms[i]);
  return out;
}

}  // namespace oada::fcos
