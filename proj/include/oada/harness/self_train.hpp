#pragma once

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "oada/harness/train.hpp"
#include "oada/selftrain.hpp"

namespace oada::harness {

// Mean-teacher stage started from a finished adaptation checkpoint. The
// teacher is the reported model: final.ckpt holds the teacher, and
// student_final.ckpt the student.
inline RunResult self_train_run(const ExperimentConfig& cfg, const RunOptions& opt) {
  cfg.validate();
  const fs::path dir = cfg.output_dir;
  const std::string hash = config_hash(cfg);
  if (opt.use_cache) {
    if (auto cached = load_cached_run(dir, hash)) {
      if (opt.log) opt.log("cached run " + dir.string());
      return *cached;
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  const fcos::Checkpoint init = fcos::load_checkpoint(cfg.init_checkpoint);
  if (init.config_hash != fcos::config_hash(cfg.detector)) {
    throw fcos::CheckpointError("self-train: init checkpoint was trained with a different detector config");
  }
  fs::create_directories(dir);
  fs::remove(dir / "result.json");
  write_json(dir / "config.json", resolved_config_json(cfg));

  const RunData data = build_run_data(cfg);
  fcos::Detector student = fcos::detector_from_checkpoint(init);
  selftrain::TeacherState teacher(student, cfg.self);
  std::vector<diff::Tensor*> params;
  for (auto& p : student.parameters()) params.push_back(p.tensor);
  fcos::Sgd sgd(std::move(params), cfg.sgd);

  const SubSeeds seeds = sub_seeds(cfg);
  EpochSampler src_sampler(data.train.source.size(), derive_seed(seeds.batch, "source"));
  EpochSampler tgt_sampler(data.train.target.size(), derive_seed(seeds.batch, "target"));

  RunResult res;
  res.dir = dir;
  res.config_hash = hash;
  res.metrics = MetricsTable(
      {"iter", "loss_det", "loss_self", "teacher_map", "student_map", "num_pseudo_boxes_mean", "lr"});
  const double init_map = evaluate_detector(student, data.eval).map;

  double w_det = 0.0, w_self = 0.0, w_boxes = 0.0;
  int w_n = 0;
  std::vector<const Tensor*> src_img(static_cast<std::size_t>(cfg.batch)), tgt_img(src_img.size());
  std::vector<fcos::AssignedTargets> src_tg(src_img.size());
  for (int iter = 0; iter < cfg.iters; ++iter) {
    for (std::size_t k = 0; k < src_img.size(); ++k) {
      const std::size_t i = src_sampler.next();
      src_img[k] = &data.train.source[i].image;
      src_tg[k] = data.source_targets[i];
    }
    for (auto& p : tgt_img) p = &data.train.target.image(tgt_sampler.next());
    const double lr = cfg.schedule.lr_at(iter, cfg.iters);
    selftrain::SelfTrainLosses s;
    try {
      s = selftrain::self_train_step(student, teacher, sgd, lr, iter, src_img, src_tg, tgt_img,
                                     derive_seed(seeds.augment, "iter", static_cast<std::uint64_t>(iter)), cfg.augment);
    } catch (const diff::NonFiniteError& e) {
      res.metrics.write_csv(dir / "metrics.csv");
      throw DivergenceError(iter, e.what());
    }
    w_det += s.source;
    w_self += s.target;
    w_boxes += static_cast<double>(s.num_pseudo_boxes) / static_cast<double>(tgt_img.size());
    ++w_n;
    if (iter % cfg.log_every == 0 || iter == cfg.iters - 1) {
      const double tmap = evaluate_detector(teacher.model(), data.eval).map;
      const double smap = evaluate_detector(student, data.eval).map;
      res.metrics.add({{"iter", iter},
                       {"loss_det", w_det / w_n},
                       {"loss_self", w_self / w_n},
                       {"teacher_map", tmap},
                       {"student_map", smap},
                       {"num_pseudo_boxes_mean", w_boxes / w_n},
                       {"lr", lr}});
      if (opt.log) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "[self_train] iter %d loss_det %.4f loss_self %.4f teacher %.4f student %.4f boxes %.2f",
                      iter, w_det / w_n, w_self / w_n, tmap, smap, w_boxes / w_n);
        opt.log(buf);
      }
      w_det = w_self = w_boxes = 0.0;
      w_n = 0;
    }
  }
  fcos::Checkpoint tck = fcos::make_checkpoint(teacher.model(), cfg.iters);
  tck.extra = {{"variant", "self_train"}, {"role", "teacher"}, {"experiment_hash", hash}};
  res.final_checkpoint = dir / "final.ckpt";
  fcos::save_checkpoint(res.final_checkpoint, tck);
  fcos::Checkpoint sck = fcos::make_checkpoint(student, cfg.iters);
  sck.extra = {{"variant", "self_train"}, {"role", "student"}, {"experiment_hash", hash}};
  fcos::save_checkpoint(dir / "student_final.ckpt", sck);
  res.metrics.write_csv(dir / "metrics.csv");
  res.target = evaluate_detector(teacher.model(), data.eval);
  res.extra = {{"init_map", init_map}, {"student_map", evaluate_detector(student, data.eval).map}};
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_result(res);
  return res;
}

}  // namespace oada::harness
