#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "oada/align/mask.hpp"
#include "oada/fcoslite.hpp"
#include "oada/svdstats/svd.hpp"
#include "oada/util/le_io.hpp"

namespace oada::svd {

using diff::Tensor;

enum class MaskSource { gt, confidence };

inline const char* to_string(MaskSource m) { return m == MaskSource::gt ? "gt" : "confidence"; }

inline MaskSource parse_mask_source(const std::string& s) {
  if (s == "gt") return MaskSource::gt;
  if (s == "confidence") return MaskSource::confidence;
  throw std::invalid_argument("unknown mask source '" + s + "'");
}

// Foreground feature vectors as columns of a D x N matrix.
struct FeatureMatrix {
  Matrix data;
  std::string domain;
  int level = -1;  // index into the detector levels; -1 pools every level
  nlohmann::json meta = nlohmann::json::object();

  int dim() const { return static_cast<int>(data.rows()); }
  int count() const { return static_cast<int>(data.cols()); }
};

struct CollectOptions {
  MaskSource mask_source = MaskSource::gt;
  double rho = 0.5;  // confidence masks only
  int level = -1;
  std::string checkpoint_id;
};

// Columns are ordered scene-major, then level, then row-major location.
inline FeatureMatrix collect_features(const fcos::Detector& model, std::span<const scene::Scene> scenes,
                                      const std::string& domain, const CollectOptions& opt = {}) {
  const fcos::DetectorConfig& cfg = model.config();
  if (opt.level < -1 || opt.level >= static_cast<int>(cfg.levels.size())) {
    throw std::invalid_argument("collect_features: level index out of range");
  }
  std::vector<std::vector<double>> cols;
  const int d = cfg.feature_channels;
  for (const scene::Scene& s : scenes) {
    diff::Tape tape(false);
    const auto outs = model.forward(tape, tape.constant(s.image, "image"));
    fcos::AssignedTargets targets;
    if (opt.mask_source == MaskSource::gt) targets = fcos::assign_targets(s.boxes, s.labels, cfg);
    for (std::size_t l = 0; l < outs.size(); ++l) {
      if (opt.level >= 0 && static_cast<int>(l) != opt.level) continue;
      const Tensor mask = opt.mask_source == MaskSource::gt
                              ? align::objectness_mask_source(targets[l])
                              : align::objectness_mask_target(outs[l].cls_logits.value(), opt.rho);
      const Tensor& f = outs[l].feature.value();
      const std::size_t plane = mask.size();
      for (std::size_t i = 0; i < plane; ++i) {
        if (mask[i] == 0.0) continue;
        std::vector<double> col(static_cast<std::size_t>(d));
        for (int c = 0; c < d; ++c) col[static_cast<std::size_t>(c)] = f[static_cast<std::size_t>(c) * plane + i];
        cols.push_back(std::move(col));
      }
    }
  }
  if (cols.empty()) throw std::runtime_error("collect_features: no foreground locations in " + domain + " scenes");
  FeatureMatrix out;
  out.data.resize(d, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    for (int c = 0; c < d; ++c) out.data(c, static_cast<Eigen::Index>(j)) = cols[j][static_cast<std::size_t>(c)];
  }
  out.domain = domain;
  out.level = opt.level;
  out.meta = {{"checkpoint", opt.checkpoint_id},
              {"mask_source", to_string(opt.mask_source)},
              {"scenes", scenes.size()}};
  if (opt.mask_source == MaskSource::confidence) out.meta["rho"] = opt.rho;
  return out;
}

inline constexpr const char* kFeatureFormat = "oada-features-v1";

// One JSON header line {format, D, N, domain, level, meta}, then the
// column-major float64 payload in little-endian byte order.
inline void export_features(const std::filesystem::path& path, const FeatureMatrix& f) {
  if (!f.data.allFinite()) throw std::invalid_argument("export_features: non-finite entry");
  const nlohmann::json header{{"format", kFeatureFormat}, {"D", f.dim()},       {"N", f.count()},
                              {"domain", f.domain},       {"level", f.level}, {"meta", f.meta}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("export_features: cannot open " + path.string());
  out << header.dump() << '\n';
  const double* p = f.data.data();  // Eigen default storage is column-major
  for (Eigen::Index i = 0; i < f.data.size(); ++i) write_f64(out, p[i]);
  if (!out) throw std::runtime_error("export_features: write failed for " + path.string());
}

inline FeatureMatrix import_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("import_features: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("import_features: empty file " + path.string());
  const nlohmann::json h = nlohmann::json::parse(line);
  if (h.value("format", "") != kFeatureFormat) throw std::runtime_error("import_features: unknown format");
  FeatureMatrix f;
  const int d = h.at("D").get<int>(), n = h.at("N").get<int>();
  if (d < 0 || n < 0) throw std::runtime_error("import_features: negative extent");
  f.data.resize(d, n);
  double* p = f.data.data();
  for (Eigen::Index i = 0; i < f.data.size(); ++i) {
    if (!read_f64(in, p[i])) throw std::runtime_error("import_features: truncated payload");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("import_features: trailing bytes");
  f.domain = h.at("domain").get<std::string>();
  f.level = h.at("level").get<int>();
  f.meta = h.value("meta", nlohmann::json::object());
  return f;
}

}  // namespace oada::svd
