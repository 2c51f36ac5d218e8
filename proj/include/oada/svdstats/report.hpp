#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "oada/svdstats/features.hpp"
#include "oada/svdstats/spectrum.hpp"

namespace oada::svd {

struct SvdReport {
  std::vector<double> sigma_hat_s;
  std::vector<double> sigma_hat_t;
  AngleReport angles;
  double recon_error_s = 0.0;
  double recon_error_t = 0.0;

  double spectrum_sum_t() const { return std::accumulate(sigma_hat_t.begin(), sigma_hat_t.end(), 0.0); }
  double spectrum_sum_s() const { return std::accumulate(sigma_hat_s.begin(), sigma_hat_s.end(), 0.0); }
  double mean_angle() const {
    return angles.cosine.empty() ? 0.0
                                 : std::accumulate(angles.cosine.begin(), angles.cosine.end(), 0.0) /
                                       static_cast<double>(angles.cosine.size());
  }
};

// k is clamped to the smallest available extent so per-level reports on
// sparse levels still run; the clamp shows up as a shorter report.
inline SvdReport analyze(const Matrix& f_s, const Matrix& f_t, int k = 20) {
  if (f_s.rows() != f_t.rows()) throw std::invalid_argument("analyze: feature dimensions differ");
  const SvdResult s = jacobi_svd(f_s), t = jacobi_svd(f_t);
  const int kk = static_cast<int>(std::min<Eigen::Index>({k, s.sigma.size(), t.sigma.size()}));
  SvdReport r;
  r.sigma_hat_s = normalized_top_k(s.sigma, kk);
  r.sigma_hat_t = normalized_top_k(t.sigma, kk);
  r.angles = angles_from(s, t, kk);
  r.recon_error_s = reconstruction_error(f_s, s);
  r.recon_error_t = reconstruction_error(f_t, t);
  return r;
}

inline void write_report_csv(const std::filesystem::path& path, const SvdReport& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_report_csv: cannot open " + path.string());
  out << "index,sigma_hat_S,sigma_hat_T,angle\n";
  char buf[128];
  for (std::size_t i = 0; i < r.angles.cosine.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", i + 1, r.sigma_hat_s[i], r.sigma_hat_t[i],
                  r.angles.cosine[i]);
    out << buf;
  }
}

}  // namespace oada::svd
