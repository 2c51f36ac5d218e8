#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "oada/align.hpp"
#include "oada/fcoslite.hpp"
#include "oada/harness/data.hpp"
#include "oada/harness/train.hpp"
#include "oada/scenegen.hpp"
#include "oada/svdstats.hpp"

namespace oada::harness {

inline fcos::Detector load_detector(const fs::path& checkpoint) {
  return fcos::detector_from_checkpoint(fcos::load_checkpoint(checkpoint));
}

// mAP report on a scene list; nothing is written when the split is empty.
inline fcos::MapReport evaluate_checkpoint(const fs::path& checkpoint, std::span<const scene::Scene> scenes,
                                           const fs::path& report_path = {}) {
  if (scenes.empty()) throw std::invalid_argument("evaluate: empty split");
  const fcos::MapReport r = evaluate_detector(load_detector(checkpoint), scenes);
  if (!report_path.empty()) {
    json j = to_json(r);
    j["checkpoint"] = checkpoint.string();
    j["images"] = scenes.size();
    json names = json::array();
    for (int c = 0; c < static_cast<int>(r.per_class_ap.size()); ++c) names.push_back(scene::silhouette_name(c));
    j["class_names"] = names;
    write_json(report_path, j);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Box overlays

inline void draw_box(Tensor& img, const scene::Box& b, const std::array<double, 3>& color, int thickness = 1) {
  const int h = img.dim(1), w = img.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  auto put = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    for (std::size_t c = 0; c < 3; ++c) img[c * plane + static_cast<std::size_t>(y) * w + x] = color[c];
  };
  const int x1 = static_cast<int>(std::floor(b.x1)), y1 = static_cast<int>(std::floor(b.y1));
  const int x2 = static_cast<int>(std::ceil(b.x2)) - 1, y2 = static_cast<int>(std::ceil(b.y2)) - 1;
  for (int t = 0; t < thickness; ++t) {
    for (int x = x1; x <= x2; ++x) {
      put(x, y1 + t);
      put(x, y2 - t);
    }
    for (int y = y1; y <= y2; ++y) {
      put(x1 + t, y);
      put(x2 - t, y);
    }
  }
}

inline const std::array<double, 3>& class_color(int label) {
  static const std::array<std::array<double, 3>, 3> colors{{{1.0, 0.1, 0.1}, {0.1, 0.9, 0.1}, {0.2, 0.4, 1.0}}};
  return colors[static_cast<std::size_t>(label) % colors.size()];
}

// Writes <out>/NNNNN.png with ground truth in white and detections above
// score_thresh in class colours, plus detections.json.
inline void dump_detections(const fs::path& checkpoint, std::span<const scene::Scene> scenes, const fs::path& out_dir,
                            double score_thresh = 0.3) {
  if (scenes.empty()) throw std::invalid_argument("dump_detections: no scenes");
  const fcos::Detector det = load_detector(checkpoint);
  fs::create_directories(out_dir);
  json all = json::array();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto dets = fcos::decode_and_nms(det.predict(scenes[i].image), det.config().image_size);
    Tensor img = scenes[i].image;
    for (const auto& b : scenes[i].boxes) draw_box(img, b, {1.0, 1.0, 1.0});
    json list = json::array();
    for (const auto& d : dets) {
      if (d.score < score_thresh) continue;
      draw_box(img, d.box, class_color(d.label));
      list.push_back({{"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
                      {"label", d.label},
                      {"score", d.score},
                      {"confidence", d.confidence}});
    }
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu.png", i);
    scene::write_png((out_dir / name).string(), img);
    all.push_back({{"file", name}, {"detections", list}});
  }
  write_json(out_dir / "detections.json", all);
}

// ---------------------------------------------------------------------------
// Feature analysis

struct SvdAnalysis {
  svd::SvdReport pooled;
  std::vector<std::optional<svd::SvdReport>> per_level;  // empty when a level lacks foreground
};

// Collects source and target features with the chosen mask, exports them and
// writes one report CSV for the pooled matrices and one per level, plus
// summary.json.
inline SvdAnalysis analyze_svd(const fs::path& checkpoint, std::span<const scene::Scene> source,
                               std::span<const scene::Scene> target, const fs::path& out_dir, int k = 20,
                               svd::CollectOptions opt = {}) {
  const fcos::Detector det = load_detector(checkpoint);
  opt.checkpoint_id = checkpoint.filename().string();
  fs::create_directories(out_dir);
  auto one = [&](int level, const std::string& tag) {
    svd::CollectOptions o = opt;
    o.level = level;
    const svd::FeatureMatrix fs_ = svd::collect_features(det, source, "source", o);
    const svd::FeatureMatrix ft_ = svd::collect_features(det, target, "target", o);
    svd::export_features(out_dir / ("features_source_" + tag + ".bin"), fs_);
    svd::export_features(out_dir / ("features_target_" + tag + ".bin"), ft_);
    const svd::SvdReport r = svd::analyze(fs_.data, ft_.data, k);
    svd::write_report_csv(out_dir / ("svd_" + tag + ".csv"), r);
    return r;
  };
  SvdAnalysis a;
  a.pooled = one(-1, "pooled");
  json levels = json::array();
  for (std::size_t l = 0; l < det.config().levels.size(); ++l) {
    const std::string tag = "lv" + std::to_string(det.config().levels[l].lv);
    try {
      a.per_level.push_back(one(static_cast<int>(l), tag));
    } catch (const std::runtime_error&) {  // no foreground on this level in one domain
      a.per_level.push_back(std::nullopt);
    }
  }
  auto summary = [](const svd::SvdReport& r) {
    std::vector<bool> deg = r.angles.degenerate;
    return json{{"spectrum_sum_source", r.spectrum_sum_s()},
                {"spectrum_sum_target", r.spectrum_sum_t()},
                {"mean_angle", r.mean_angle()},
                {"recon_error_source", r.recon_error_s},
                {"recon_error_target", r.recon_error_t},
                {"degenerate", deg}};
  };
  json j{{"checkpoint", checkpoint.string()}, {"k", k}, {"mask_source", svd::to_string(opt.mask_source)}};
  j["pooled"] = summary(a.pooled);
  for (std::size_t l = 0; l < a.per_level.size(); ++l) {
    const std::string tag = "lv" + std::to_string(det.config().levels[l].lv);
    j[tag] = a.per_level[l] ? summary(*a.per_level[l]) : json(nullptr);
  }
  write_json(out_dir / "summary.json", j);
  return a;
}

// ---------------------------------------------------------------------------
// Confidence diagnostics

inline std::vector<align::ConfidenceRow> diagnose_confidence(const fs::path& checkpoint,
                                                             std::span<const scene::Scene> scenes,
                                                             std::span<const double> thresholds,
                                                             const fs::path& csv_path = {}) {
  if (scenes.empty()) throw std::invalid_argument("diagnose_confidence: no scenes");
  const fcos::Detector det = load_detector(checkpoint);
  std::vector<std::vector<fcos::LevelPrediction>> preds;
  std::vector<fcos::AssignedTargets> targets;
  for (const auto& s : scenes) {
    preds.push_back(det.predict(s.image));
    targets.push_back(fcos::assign_targets(s.boxes, s.labels, det.config()));
  }
  const auto rows = align::confidence_diagnostics(preds, targets, thresholds);
  if (!csv_path.empty()) {
    if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("diagnose_confidence: cannot open " + csv_path.string());
    out << "threshold,selected,true_foreground,precision,offset_error\n";
    for (const auto& r : rows) {
      out << r.threshold << ',' << r.selected << ',' << r.true_foreground << ',';
      if (r.precision) out << *r.precision;
      out << ',';
      if (r.offset_error) out << *r.offset_error;
      out << '\n';
    }
  }
  return rows;
}

}  // namespace oada::harness
