#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "oada/svdstats/svd.hpp"

namespace oada::svd {

// Top-k singular values divided by the largest; an all-zero matrix gives zeros.
inline std::vector<double> normalized_top_k(const Vector& sigma, int k) {
  if (k < 1 || k > sigma.size()) {
    throw std::invalid_argument("singular_spectrum: k=" + std::to_string(k) + " exceeds min(D, N)=" +
                                std::to_string(sigma.size()));
  }
  std::vector<double> out(static_cast<std::size_t>(k), 0.0);
  if (sigma[0] == 0.0) return out;
  for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = sigma[i] / sigma[0];
  return out;
}

inline std::vector<double> singular_spectrum(const Matrix& f, int k = 20) {
  if (k < 1 || k > std::min(f.rows(), f.cols())) {
    throw std::invalid_argument("singular_spectrum: k=" + std::to_string(k) + " exceeds min(D, N)");
  }
  return normalized_top_k(jacobi_svd(f).sigma, k);
}

struct AngleReport {
  std::vector<double> cosine;    // |cos| between i-th left singular vectors
  std::vector<bool> degenerate;  // i-th singular value repeated (or zero) in either input
};

// Singular value i is flagged when it is zero or within rel_tol of a neighbour,
// since its singular vector is then not unique.
inline std::vector<bool> degenerate_flags(const Vector& sigma, int k, double rel_tol = 1e-8) {
  std::vector<bool> out(static_cast<std::size_t>(k), false);
  const double scale = sigma.size() > 0 ? sigma[0] : 0.0;
  for (int i = 0; i < k; ++i) {
    bool flag = sigma[i] <= 0.0;
    if (i > 0) flag = flag || sigma[i - 1] - sigma[i] <= rel_tol * scale;
    if (i + 1 < sigma.size()) flag = flag || sigma[i] - sigma[i + 1] <= rel_tol * scale;
    out[static_cast<std::size_t>(i)] = flag;
  }
  return out;
}

inline AngleReport angles_from(const SvdResult& s, const SvdResult& t, int k) {
  if (s.u.rows() != t.u.rows()) throw std::invalid_argument("corresponding_angles: feature dimensions differ");
  if (k < 1 || k > s.u.cols() || k > t.u.cols()) {
    throw std::invalid_argument("corresponding_angles: k=" + std::to_string(k) + " exceeds available directions");
  }
  AngleReport r;
  const auto ds = degenerate_flags(s.sigma, k), dt = degenerate_flags(t.sigma, k);
  for (int i = 0; i < k; ++i) {
    r.cosine.push_back(std::min(1.0, std::abs(s.u.col(i).dot(t.u.col(i)))));
    r.degenerate.push_back(ds[static_cast<std::size_t>(i)] || dt[static_cast<std::size_t>(i)]);
  }
  return r;
}

inline AngleReport corresponding_angles(const Matrix& f_s, const Matrix& f_t, int k = 20) {
  if (f_s.rows() != f_t.rows()) throw std::invalid_argument("corresponding_angles: feature dimensions differ");
  return angles_from(jacobi_svd(f_s), jacobi_svd(f_t), k);
}

}  // namespace oada::svd
