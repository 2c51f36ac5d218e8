#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

namespace oada::svd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Thin SVD: M = U diag(sigma) V^T with r = min(rows, cols) columns in U and V.
struct SvdResult {
  Matrix u;
  Vector sigma;  // nonnegative, descending
  Matrix v;
  int sweeps = 0;
};

namespace detail {

// Fills columns [from, r) of q with unit vectors orthogonal to every earlier
// column, trying the standard basis in order (two Gram-Schmidt passes). The
// first residual above 1/2 is taken, else the largest one seen.
inline void complete_orthonormal(Matrix& q, int from) {
  const int n = static_cast<int>(q.rows());
  for (int j = from; j < q.cols(); ++j) {
    Vector best;
    double best_norm = 0.0;
    for (int e = 0; e < n; ++e) {
      Vector c = Vector::Unit(n, e);
      for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i < j; ++i) c -= q.col(i).dot(c) * q.col(i);
      }
      const double norm = c.norm();
      if (norm > best_norm) {
        best = c;
        best_norm = norm;
      }
      if (norm > 0.5) break;
    }
    if (best_norm == 0.0) throw std::logic_error("complete_orthonormal: no independent direction left");
    q.col(j) = best / best_norm;
  }
}

// One-sided (Hestenes) Jacobi on the columns of a tall matrix (rows >= cols).
inline SvdResult jacobi_tall(const Matrix& m, int max_sweeps) {
  const int rows = static_cast<int>(m.rows()), cols = static_cast<int>(m.cols());
  Matrix a = m;
  Matrix v = Matrix::Identity(cols, cols);
  const double eps = std::numeric_limits<double>::epsilon();
  SvdResult out;
  for (out.sweeps = 0; out.sweeps < max_sweeps;) {
    ++out.sweeps;
    bool rotated = false;
    for (int p = 0; p < cols - 1; ++p) {
      for (int q = p + 1; q < cols; ++q) {
        const double alpha = a.col(p).squaredNorm();
        const double beta = a.col(q).squaredNorm();
        const double gamma = a.col(p).dot(a.col(q));
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t), s = c * t;
        for (int i = 0; i < rows; ++i) {
          const double x = a(i, p), y = a(i, q);
          a(i, p) = c * x - s * y;
          a(i, q) = s * x + c * y;
        }
        for (int i = 0; i < cols; ++i) {
          const double x = v(i, p), y = v(i, q);
          v(i, p) = c * x - s * y;
          v(i, q) = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }

  Vector norms(cols);
  for (int j = 0; j < cols; ++j) norms[j] = a.col(j).norm();
  std::vector<int> order(static_cast<std::size_t>(cols));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return norms[x] > norms[y]; });

  const double top = cols > 0 ? norms[order[0]] : 0.0;
  const double cutoff = top * eps * std::max(rows, cols);
  out.u = Matrix::Zero(rows, cols);
  out.v = Matrix::Zero(cols, cols);
  out.sigma = Vector::Zero(cols);
  int nonzero = 0;
  for (int j = 0; j < cols; ++j) {
    const int src = order[static_cast<std::size_t>(j)];
    out.v.col(j) = v.col(src);
    if (norms[src] > cutoff && norms[src] > 0.0) {
      out.sigma[j] = norms[src];
      out.u.col(j) = a.col(src) / norms[src];
      nonzero = j + 1;
    }
  }
  complete_orthonormal(out.u, nonzero);
  return out;
}

}  // namespace detail

inline SvdResult jacobi_svd(const Matrix& m, int max_sweeps = 60) {
  if (m.size() == 0) throw std::invalid_argument("jacobi_svd: empty matrix");
  if (!m.allFinite()) throw std::invalid_argument("jacobi_svd: non-finite entry");
  if (m.rows() >= m.cols()) return detail::jacobi_tall(m, max_sweeps);
  SvdResult t = detail::jacobi_tall(m.transpose(), max_sweeps);
  std::swap(t.u, t.v);
  return t;
}

// ||M - U diag(sigma) V^T||_F / ||M||_F (0 for a zero matrix reconstructed exactly).
inline double reconstruction_error(const Matrix& m, const SvdResult& s) {
  const double err = (m - s.u * s.sigma.asDiagonal() * s.v.transpose()).norm();
  const double ref = m.norm();
  return ref > 0.0 ? err / ref : err;
}

// max |Q^T Q - I| entry.
inline double orthonormality_error(const Matrix& q) {
  return (q.transpose() * q - Matrix::Identity(q.cols(), q.cols())).cwiseAbs().maxCoeff();
}

}  // namespace oada::svd
