#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "oada/diffcore/tensor.hpp"
#include "oada/fcoslite/assign.hpp"
#include "oada/fcoslite/decode.hpp"
#include "oada/fcoslite/model.hpp"

namespace oada::align {

// Running mean of blended bin probabilities at masked locations, one
// accumulator per level. Reset at every logging window.
class BinOccupancy {
 public:
  BinOccupancy() = default;
  BinOccupancy(int num_levels, int n_bin)
      : n_bin_(n_bin),
        mean_(static_cast<std::size_t>(num_levels), std::vector<double>(static_cast<std::size_t>(n_bin), 0.0)),
        count_(static_cast<std::size_t>(num_levels), 0) {}

  int num_levels() const { return static_cast<int>(mean_.size()); }
  int n_bin() const { return n_bin_; }

  // q_tilde is N x H x W; mask 1 x H x W.
  void add(int level, const diff::Tensor& q_tilde, const diff::Tensor& mask) {
    auto& m = mean_.at(static_cast<std::size_t>(level));
    auto& n = count_.at(static_cast<std::size_t>(level));
    const std::size_t plane = mask.size();
    if (q_tilde.size() != plane * static_cast<std::size_t>(n_bin_)) {
      throw diff::ShapeError("bin occupancy: q_tilde does not match mask");
    }
    for (std::size_t i = 0; i < plane; ++i) {
      if (mask[i] == 0.0) continue;
      ++n;
      for (std::size_t k = 0; k < m.size(); ++k) m[k] += (q_tilde[k * plane + i] - m[k]) / static_cast<double>(n);
    }
  }

  std::optional<std::vector<double>> mean(int level) const {
    if (count_.at(static_cast<std::size_t>(level)) == 0) return std::nullopt;
    return mean_[static_cast<std::size_t>(level)];
  }

  long long count(int level) const { return count_.at(static_cast<std::size_t>(level)); }

  void reset() {
    for (auto& m : mean_) std::fill(m.begin(), m.end(), 0.0);
    std::fill(count_.begin(), count_.end(), 0);
  }

 private:
  int n_bin_ = 0;
  std::vector<std::vector<double>> mean_;
  std::vector<long long> count_;
};

struct ConfidenceRow {
  double threshold = 0.0;
  int selected = 0;
  int true_foreground = 0;
  std::optional<double> precision;     // absent when nothing is selected
  std::optional<double> offset_error;  // mean |pred - gt| over selected foreground, pixels
};

inline std::vector<double> default_confidence_thresholds() {
  return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
}

// For each threshold: locations whose highest class probability exceeds it;
// precision is the share of those that are assigned foreground, and the
// offset error averages |pred - gt| over the four sides of the foreground
// ones.
inline std::vector<ConfidenceRow> confidence_diagnostics(std::span<const std::vector<fcos::LevelPrediction>> preds,
                                                         std::span<const fcos::AssignedTargets> targets,
                                                         std::span<const double> thresholds) {
  if (preds.size() != targets.size()) throw std::invalid_argument("confidence_diagnostics: image counts differ");
  struct Loc {
    double conf;
    bool fg;
    double err;
  };
  std::vector<Loc> locs;
  for (std::size_t b = 0; b < preds.size(); ++b) {
    if (preds[b].size() != targets[b].size()) throw std::invalid_argument("confidence_diagnostics: level counts differ");
    for (std::size_t l = 0; l < preds[b].size(); ++l) {
      const auto& p = preds[b][l];
      const auto& t = targets[b][l];
      const std::size_t plane = static_cast<std::size_t>(t.height) * t.width;
      const int c_n = p.cls_logits.dim(0);
      for (std::size_t i = 0; i < plane; ++i) {
        double conf = 0.0;
        for (int c = 0; c < c_n; ++c) conf = std::max(conf, fcos::sigmoid(p.cls_logits[static_cast<std::size_t>(c) * plane + i]));
        const bool fg = t.fg[i] > 0.0;
        double err = 0.0;
        if (fg) {
          for (std::size_t k = 0; k < 4; ++k) err += std::abs(p.reg[k * plane + i] - t.offsets[k * plane + i]);
          err /= 4.0;
        }
        locs.push_back({conf, fg, err});
      }
    }
  }
  std::vector<ConfidenceRow> rows;
  for (double th : thresholds) {
    ConfidenceRow r;
    r.threshold = th;
    double err = 0.0;
    for (const Loc& loc : locs) {
      if (!(loc.conf > th)) continue;
      ++r.selected;
      if (loc.fg) {
        ++r.true_foreground;
        err += loc.err;
      }
    }
    if (r.selected > 0) r.precision = static_cast<double>(r.true_foreground) / r.selected;
    if (r.true_foreground > 0) r.offset_error = err / r.true_foreground;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace oada::align
