#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace oada::align {

// Soft binning of log2 offsets: bin centers m (log2 pixels), Gaussian width
// sigma and temperature tau.
struct BinSpec {
  std::vector<double> m;
  double sigma = 0.1;
  double tau = 0.1;

  int n_bin() const { return static_cast<int>(m.size()); }

  void validate() const {
    if (m.empty()) throw std::invalid_argument("bin spec: need at least one bin");
    for (std::size_t i = 1; i < m.size(); ++i) {
      if (!(m[i] > m[i - 1])) throw std::invalid_argument("bin spec: centers must be strictly increasing");
    }
    if (!(sigma > 0.0) || !(tau > 0.0)) throw std::invalid_argument("bin spec: sigma and tau must be positive");
  }

  // Coefficient c in q_i ∝ exp(-c (log2 z - m_i)^2).
  double sharpness() const { return tau / (2.0 * sigma * sigma); }
};

// Log-probabilities of the soft bin assignment for an offset z > 0.
inline std::vector<double> offset_to_log_prob(double z, const BinSpec& spec) {
  if (!(z > 0.0) || !std::isfinite(z)) {
    throw std::invalid_argument("offset_to_prob: offset must be positive and finite, got " + std::to_string(z));
  }
  const double x = std::log2(z), c = spec.sharpness();
  std::vector<double> e(spec.m.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = -c * (x - spec.m[i]) * (x - spec.m[i]);
  const double top = *std::max_element(e.begin(), e.end());
  double s = 0.0;
  for (double v : e) s += std::exp(v - top);
  const double log_z = top + std::log(s);
  for (double& v : e) v -= log_z;
  return e;
}

inline std::vector<double> offset_to_prob(double z, const BinSpec& spec) {
  std::vector<double> q = offset_to_log_prob(z, spec);
  for (double& v : q) v = std::exp(v);
  return q;
}

inline double kl_divergence(std::span<const double> log_p, std::span<const double> log_q) {
  if (log_p.size() != log_q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < log_p.size(); ++i) s += std::exp(log_p[i]) * (log_p[i] - log_q[i]);
  return s;
}

// alpha = max(1 - iter / I, alpha0); I = 0 means no warm-up.
struct BlendSchedule {
  int warmup_iters = 600;
  double alpha0 = 0.2;

  void validate() const {
    if (warmup_iters < 0) throw std::invalid_argument("blend schedule: negative warm-up");
    if (!(alpha0 >= 0.0 && alpha0 <= 1.0)) throw std::invalid_argument("blend schedule: alpha0 outside [0, 1]");
  }

  double alpha(int iter) const {
    if (warmup_iters == 0) return alpha0;
    return std::max(1.0 - static_cast<double>(iter) / warmup_iters, alpha0);
  }
};

inline std::vector<double> blend_prob(std::span<const double> q, double alpha) {
  const double u = 1.0 / static_cast<double>(q.size());
  std::vector<double> out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = (1.0 - alpha) * q[i] + alpha * u;
  return out;
}

// Bin centers per (n_bin, level). Three bins follow (lv - 1/2, lv + 1/2,
// lv + 3/2); two, four and five bins use fixed tables; a single bin sits at
// lv + 1/2.
inline std::vector<double> default_m_values(int n_bin, int lv) {
  auto unsupported = [&] {
    return std::invalid_argument("default_m_values: unsupported (n_bin=" + std::to_string(n_bin) +
                                 ", lv=" + std::to_string(lv) + ")");
  };
  if (n_bin == 1) return {lv + 0.5};
  if (n_bin == 3) return {lv - 0.5, lv + 0.5, lv + 1.5};
  if (lv < 3 || lv > 5) throw unsupported();
  switch (n_bin) {
    case 2: return {lv + 0.5, lv + 1.5};
    case 4: return {lv - 0.5, lv + 0.5, lv + 1.5, lv + 2.5};
    case 5: return {lv - 0.5, lv + 0.5, lv + 1.5, lv + 2.5, lv + 3.5};
    default: throw unsupported();
  }
}

inline BinSpec default_bin_spec(int n_bin, int lv) { return BinSpec{default_m_values(n_bin, lv)}; }

}  // namespace oada::align
