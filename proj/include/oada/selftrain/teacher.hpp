#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "oada/fcoslite.hpp"

namespace oada::selftrain {

using diff::Tensor;
using fcos::Detector;

struct SelfTrainParams {
  double ema_rate = 0.9999;
  int ema_interval = 1;
  double delta = 0.5;       // pseudo-label confidence threshold (strict >)
  double lambda_self = 2.0;

  void validate() const {
    if (!(ema_rate >= 0.0 && ema_rate <= 1.0)) throw std::invalid_argument("self-train: ema_rate outside [0, 1]");
    if (ema_interval < 1) throw std::invalid_argument("self-train: ema_interval must be >= 1");
    if (!(delta >= 0.0 && delta <= 1.0)) throw std::invalid_argument("self-train: delta outside [0, 1]");
    if (!(lambda_self >= 0.0)) throw std::invalid_argument("self-train: lambda_self must be nonnegative");
  }
};

// Shadow copy of the detector, updated only by EMA. Its parameters never
// carry gradient buffers.
class TeacherState {
 public:
  TeacherState() = default;
  TeacherState(const Detector& student, SelfTrainParams p) : params_(p), model_(student), initialized_(true) {
    params_.validate();
    model_.set_trainable(false);
  }

  bool initialized() const { return initialized_; }
  const SelfTrainParams& params() const { return params_; }
  const Detector& model() const { return model_; }
  Detector& model() { return model_; }

 private:
  SelfTrainParams params_;
  Detector model_;
  bool initialized_ = false;
};

// teacher <- rate * teacher + (1 - rate) * student, elementwise.
inline void ema_update(std::span<Tensor* const> teacher, std::span<const Tensor* const> student, double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("ema_update: rate outside [0, 1]");
  if (teacher.size() != student.size()) throw std::invalid_argument("ema_update: parameter counts differ");
  for (std::size_t k = 0; k < teacher.size(); ++k) {
    if (teacher[k]->shape() != student[k]->shape()) {
      throw diff::ShapeError("ema_update: shape mismatch at parameter " + std::to_string(k));
    }
  }
  for (std::size_t k = 0; k < teacher.size(); ++k) {
    auto t = teacher[k]->data();
    const auto s = student[k]->data();
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rate * t[i] + (1.0 - rate) * s[i];
  }
}

inline void ema_update(TeacherState& teacher, Detector& student) {
  if (!teacher.initialized()) throw std::logic_error("ema_update: teacher not initialized");
  std::vector<Tensor*> t;
  std::vector<const Tensor*> s;
  for (auto& p : teacher.model().parameters()) t.push_back(p.tensor);
  for (auto& p : student.parameters()) s.push_back(p.tensor);
  ema_update(t, s, teacher.params().ema_rate);
}

// Keeps post-NMS detections whose class confidence strictly exceeds delta.
inline fcos::GroundTruth pseudo_label(std::span<const fcos::Detection> dets, double delta) {
  fcos::GroundTruth out;
  for (const auto& d : dets) {
    if (d.confidence > delta) {
      out.boxes.push_back(d.box);
      out.labels.push_back(d.label);
    }
  }
  return out;
}

}  // namespace oada::selftrain
