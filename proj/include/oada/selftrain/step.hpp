#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "oada/fcoslite.hpp"
#include "oada/selftrain/augment.hpp"
#include "oada/selftrain/teacher.hpp"
#include "oada/util/seed.hpp"

namespace oada::selftrain {

struct SelfTrainLosses {
  double source = 0.0;
  double target = 0.0;
  double total = 0.0;
  int num_pseudo_boxes = 0;
  int images_with_pseudo = 0;
};

// One student update: L_det on the labelled source batch plus lambda_self
// times L_det on strongly augmented target images against the teacher's
// pseudo labels (computed on the un-augmented images). Target images with no
// surviving pseudo box are left out of the target term. The teacher then
// takes an EMA step when the interval divides iter + 1.
inline SelfTrainLosses self_train_step(Detector& student, TeacherState& teacher, fcos::Sgd& opt, double lr, int iter,
                                       std::span<const Tensor* const> source_images,
                                       std::span<const fcos::AssignedTargets> source_targets,
                                       std::span<const Tensor* const> target_images, std::uint64_t augment_seed,
                                       const AugmentParams& aug = {}, const fcos::DecodeParams& decode = {}) {
  if (!teacher.initialized()) throw std::logic_error("self_train_step: teacher not initialized");
  const SelfTrainParams& p = teacher.params();
  const fcos::DetectorConfig& cfg = student.config();
  SelfTrainLosses out;

  std::vector<Tensor> aug_images;
  std::vector<fcos::AssignedTargets> pseudo_targets;
  if (p.lambda_self > 0.0) {
    for (std::size_t k = 0; k < target_images.size(); ++k) {
      const auto dets = fcos::decode_and_nms(teacher.model().predict(*target_images[k]), cfg.image_size, decode);
      const fcos::GroundTruth pl = pseudo_label(dets, p.delta);
      out.num_pseudo_boxes += static_cast<int>(pl.boxes.size());
      if (pl.boxes.empty()) continue;
      ++out.images_with_pseudo;
      aug_images.push_back(strong_augment(*target_images[k], derive_seed(augment_seed, "strong", k), aug));
      pseudo_targets.push_back(fcos::assign_targets(pl.boxes, pl.labels, cfg));
    }
  }

  diff::Tape tape;
  std::vector<std::vector<fcos::LevelOutput>> src_out;
  for (const Tensor* img : source_images) src_out.push_back(student.forward(tape, tape.constant(*img, "source")));
  const fcos::DetectionLoss src = fcos::detection_loss(tape, src_out, source_targets);
  diff::Var total = src.total;
  out.source = src.total.value()[0];
  if (!aug_images.empty()) {
    std::vector<std::vector<fcos::LevelOutput>> tgt_out;
    for (const Tensor& img : aug_images) tgt_out.push_back(student.forward(tape, tape.constant(img, "target")));
    const fcos::DetectionLoss tgt = fcos::detection_loss(tape, tgt_out, pseudo_targets);
    out.target = tgt.total.value()[0];
    total = diff::add(total, diff::scale(tgt.total, p.lambda_self));
  }
  out.total = total.value()[0];
  tape.backward(total);
  opt.step(lr);
  if ((iter + 1) % p.ema_interval == 0) ema_update(teacher, student);
  return out;
}

}  // namespace oada::selftrain
