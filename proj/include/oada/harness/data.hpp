#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "oada/fcoslite.hpp"
#include "oada/harness/config.hpp"
#include "oada/scenegen.hpp"

namespace oada::harness {

// Training splits plus a held-out, shifted target split for evaluation.
struct RunData {
  scene::Dataset train;
  std::vector<scene::Scene> eval;
  std::vector<fcos::AssignedTargets> source_targets;
};

inline std::vector<scene::Scene> build_eval_split(const DataConfig& d, std::uint64_t data_seed) {
  std::vector<scene::Scene> out;
  out.reserve(static_cast<std::size_t>(d.n_eval));
  for (int i = 0; i < d.n_eval; ++i) {
    const auto k = static_cast<std::uint64_t>(i);
    scene::Scene clean = scene::generate_scene(derive_seed(data_seed, "eval", k), d.spec);
    out.push_back(scene::apply_shift(clean, d.shift, derive_seed(data_seed, "eval-shift", k)));
  }
  return out;
}

inline RunData build_run_data(const ExperimentConfig& c) {
  const std::uint64_t seed = sub_seeds(c).data;
  RunData r;
  r.train = scene::build_dataset(c.data.spec, c.data.shift, static_cast<std::size_t>(c.data.n_source),
                                 static_cast<std::size_t>(c.data.n_target), seed);
  r.eval = build_eval_split(c.data, seed);
  for (const auto& s : r.train.source) r.source_targets.push_back(fcos::assign_targets(s.boxes, s.labels, c.detector));
  return r;
}

// Endless stream of indices in [0, n): one fresh shuffle per pass.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    if (n == 0) throw std::invalid_argument("sampler: empty split");
    std::iota(order_.begin(), order_.end(), 0);
    pos_ = n;
  }

  std::size_t next() {
    if (pos_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

inline std::vector<std::vector<fcos::Detection>> detect_all(const fcos::Detector& det,
                                                            std::span<const scene::Scene> scenes,
                                                            const fcos::DecodeParams& p = {}) {
  std::vector<std::vector<fcos::Detection>> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(fcos::decode_and_nms(det.predict(s.image), det.config().image_size, p));
  return out;
}

inline fcos::MapReport evaluate_detector(const fcos::Detector& det, std::span<const scene::Scene> scenes) {
  if (scenes.empty()) throw std::invalid_argument("evaluate: empty split");
  const auto dets = detect_all(det, scenes);
  std::vector<fcos::GroundTruth> gt;
  for (const auto& s : scenes) gt.push_back(fcos::to_ground_truth(s));
  return fcos::evaluate_map(dets, gt, det.config().num_classes);
}

inline json to_json(const fcos::MapReport& r) {
  json per = json::array();
  for (const auto& ap : r.per_class_ap) per.push_back(ap ? json(*ap) : json(nullptr));
  return {{"map", r.map}, {"per_class_ap", per}, {"classes_present", r.classes_present}};
}

inline fcos::MapReport map_report_from_json(const json& j) {
  fcos::MapReport r;
  r.map = j.at("map").get<double>();
  for (const auto& v : j.at("per_class_ap")) r.per_class_ap.push_back(v.is_null() ? std::nullopt : std::optional(v.get<double>()));
  r.classes_present = j.at("classes_present").get<int>();
  return r;
}

}  // namespace oada::harness
