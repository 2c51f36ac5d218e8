#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "oada/diffcore/tape.hpp"
#include "oada/diffcore/tensor.hpp"

// Differentiable primitives. Every op computes its forward value eagerly and
// records a closure that scatters the upstream gradient into its inputs.
namespace oada::diff {

inline constexpr double kLogEps = 1e-12;

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

inline Tape& tape_of(Var a) {
  if (!a.valid()) throw std::logic_error("op on an unbound variable");
  return *a.tape;
}

inline void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::logic_error("ops mix variables from different tapes");
}

inline void require_rank(const Tensor& t, int r, const char* op) {
  if (t.rank() != r) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                     shape_str(t.shape()));
  }
}

// Stable log(sigmoid(x)).
inline double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Var add(Var a, Var b) {
  detail::same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->record("add", std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, int self) {
    auto g = t.grad(self);
    for (int in : {ai, bi}) {
      if (!t.needs_grad(in)) continue;
      auto gi = t.grad(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

inline Var sub(Var a, Var b) {
  detail::same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape->record("sub", std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, int self) {
    auto g = t.grad(self);
    if (t.needs_grad(ai)) {
      auto ga = t.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(bi)) {
      auto gb = t.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

inline Var mul(Var a, Var b) {
  detail::same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record("mul", std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, int self) {
    auto g = t.grad(self);
    const auto& av = t.value(ai);
    const auto& bv = t.value(bi);
    if (t.needs_grad(ai)) {
      auto ga = t.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(bi)) {
      auto gb = t.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

inline Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  return detail::tape_of(a).record("scale", std::move(out), {a.id}, [ai = a.id, s](Tape& t, int self) {
    auto g = t.grad(self);
    auto ga = t.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

inline Var relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return detail::tape_of(a).record("relu", std::move(out), {a.id}, [ai = a.id](Tape& t, int self) {
    auto g = t.grad(self);
    const auto& x = t.value(ai);
    auto ga = t.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) ga[i] += g[i];
    }
  });
}

inline Var sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = detail::sigmoid(v);
  return detail::tape_of(a).record("sigmoid", std::move(out), {a.id}, [ai = a.id](Tape& t, int self) {
    auto g = t.grad(self);
    const auto& y = t.value(self);
    auto ga = t.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

inline Var exp(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::exp(v);
  return detail::tape_of(a).record("exp", std::move(out), {a.id}, [ai = a.id](Tape& t, int self) {
    auto g = t.grad(self);
    const auto& y = t.value(self);
    auto ga = t.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
}

// Natural log with inputs clamped from below at kLogEps.
inline Var log(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::log(std::max(v, kLogEps));
  return detail::tape_of(a).record("log", std::move(out), {a.id}, [ai = a.id](Tape& t, int self) {
    auto g = t.grad(self);
    const auto& x = t.value(ai);
    auto ga = t.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > kLogEps) ga[i] += g[i] / x[i];
    }
  });
}

// Softmax along `axis`.
inline Var softmax(Var a, int axis) {
  const Tensor& x = a.value();
  if (axis < 0 || axis >= x.rank()) throw ShapeError("softmax: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t n = x.dim(axis);
  Tensor out(x.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = x[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, x[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = std::exp(x[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] /= z;
    }
  }
  return a.tape->record("softmax", std::move(out), {a.id},
                        [ai = a.id, outer, inner, n](Tape& t, int self) {
    auto g = t.grad(self);
    const auto& y = t.value(self);
    auto ga = t.grad(ai);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += g[base + k * inner] * y[base + k * inner];
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t idx = base + k * inner;
          ga[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return detail::tape_of(a).record("sum", Tensor::scalar(s), {a.id}, [ai = a.id](Tape& t, int self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(ai)) v += g;
  });
}

inline Var mean(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const double n = static_cast<double>(a.value().size());
  return detail::tape_of(a).record("mean", Tensor::scalar(s / n), {a.id},
                                   [ai = a.id, n](Tape& t, int self) {
    const double g = t.grad(self)[0] / n;
    for (double& v : t.grad(ai)) v += g;
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(Var a, Var b) {
  detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require_rank(av, 2, "matmul");
  detail::require_rank(bv, 2, "matmul");
  const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ " + shape_str(av.shape()) + " * " +
                     shape_str(bv.shape()));
  }
  Tensor out({m, n});
  detail::MapMat(out.data().data(), m, n).noalias() =
      detail::CMapMat(av.data().data(), m, k) * detail::CMapMat(bv.data().data(), k, n);
  return a.tape->record("matmul", std::move(out), {a.id, b.id},
                        [ai = a.id, bi = b.id, m, k, n](Tape& t, int self) {
    detail::CMapMat g(t.grad(self).data(), m, n);
    if (t.needs_grad(ai)) {
      detail::MapMat(t.grad(ai).data(), m, k).noalias() +=
          g * detail::CMapMat(t.value(bi).data().data(), k, n).transpose();
    }
    if (t.needs_grad(bi)) {
      detail::MapMat(t.grad(bi).data(), k, n).noalias() +=
          detail::CMapMat(t.value(ai).data().data(), m, k).transpose() * g;
    }
  });
}

struct Conv2dGeometry {
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int kernel, stride, pad;
};

namespace detail {

inline void im2col(const double* x, const Conv2dGeometry& g, double* col) {
  const int k = g.kernel;
  const std::size_t plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  for (int c = 0; c < g.in_c; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          double* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::size_t>(c) * g.in_h + iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

inline void col2im(const double* col, const Conv2dGeometry& g, double* dx) {
  const int k = g.kernel;
  const std::size_t plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  for (int c = 0; c < g.in_c; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * g.out_w;
          double* dst = dx + (static_cast<std::size_t>(c) * g.in_h + iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2-D convolution of a C x H x W input with O x C x k x k weights and an
// O-length bias; zero padding of k/2, stride 1 or 2.
inline Var conv2d(Var x, Var weight, Var bias, int stride) {
  detail::same_tape(x, weight);
  detail::same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  detail::require_rank(xv, 3, "conv2d input");
  detail::require_rank(wv, 4, "conv2d weight");
  if (wv.dim(1) != xv.dim(0) || wv.dim(2) != wv.dim(3) || bv.size() != static_cast<std::size_t>(wv.dim(0))) {
    throw ShapeError("conv2d: incompatible input " + shape_str(xv.shape()) + ", weight " +
                     shape_str(wv.shape()) + ", bias " + shape_str(bv.shape()));
  }
  if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
  Conv2dGeometry g{};
  g.in_c = xv.dim(0);
  g.in_h = xv.dim(1);
  g.in_w = xv.dim(2);
  g.kernel = wv.dim(2);
  g.stride = stride;
  g.pad = g.kernel / 2;
  g.out_c = wv.dim(0);
  g.out_h = (g.in_h + 2 * g.pad - g.kernel) / stride + 1;
  g.out_w = (g.in_w + 2 * g.pad - g.kernel) / stride + 1;
  const int rows = g.in_c * g.kernel * g.kernel;
  const int cols = g.out_h * g.out_w;

  auto col = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows) * cols);
  detail::im2col(xv.data().data(), g, col->data());
  Tensor out({g.out_c, g.out_h, g.out_w});
  detail::MapMat y(out.data().data(), g.out_c, cols);
  y.noalias() = detail::CMapMat(wv.data().data(), g.out_c, rows) *
                detail::CMapMat(col->data(), rows, cols);
  for (int o = 0; o < g.out_c; ++o) y.row(o).array() += bv[o];

  Tape& t = *x.tape;
  if (!t.recording()) col.reset();
  return t.record("conv2d", std::move(out), {x.id, weight.id, bias.id},
                  [xi = x.id, wi = weight.id, bi = bias.id, g, rows, cols, col](Tape& t, int self) {
    detail::CMapMat gy(t.grad(self).data(), g.out_c, cols);
    if (t.needs_grad(wi)) {
      detail::MapMat(t.grad(wi).data(), g.out_c, rows).noalias() +=
          gy * detail::CMapMat(col->data(), rows, cols).transpose();
    }
    if (t.needs_grad(bi)) {
      auto gb = t.grad(bi);
      // plain loop: Eigen's vectorized redux peels by address, which makes
      // the rounding depend on heap alignment
      for (int o = 0; o < g.out_c; ++o) {
        const double* row = t.grad(self).data() + static_cast<std::size_t>(o) * cols;
        double s = 0.0;
        for (int j = 0; j < cols; ++j) s += row[j];
        gb[o] += s;
      }
    }
    if (t.needs_grad(xi)) {
      std::vector<double> dcol(static_cast<std::size_t>(rows) * cols);
      detail::MapMat(dcol.data(), rows, cols).noalias() =
          detail::CMapMat(t.value(wi).data().data(), g.out_c, rows).transpose() * gy;
      detail::col2im(dcol.data(), g, t.grad(xi).data());
    }
  });
}

// ---------------------------------------------------------------------------
// Channel plumbing (rank-3 C x H x W tensors)

inline Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  Tape& t = detail::tape_of(parts[0]);
  const Tensor& first = parts[0].value();
  detail::require_rank(first, 3, "concat_channels");
  int channels = 0;
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    detail::same_tape(parts[0], p);
    const Tensor& v = p.value();
    detail::require_rank(v, 3, "concat_channels");
    if (v.dim(1) != first.dim(1) || v.dim(2) != first.dim(2)) {
      throw ShapeError("concat_channels: spatial extents differ");
    }
    offsets.push_back(static_cast<std::size_t>(channels) * first.dim(1) * first.dim(2));
    channels += v.dim(0);
    ids.push_back(p.id);
  }
  Tensor out({channels, first.dim(1), first.dim(2)});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offsets[k]));
  }
  return t.record("concat_channels", std::move(out), ids, [ids, offsets](Tape& t, int self) {
    auto g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs_grad(ids[k])) continue;
      auto gk = t.grad(ids[k]);
      for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g[offsets[k] + i];
    }
  });
}

inline Var slice_channels(Var a, int begin, int end) {
  const Tensor& v = a.value();
  detail::require_rank(v, 3, "slice_channels");
  if (begin < 0 || end > v.dim(0) || begin >= end) throw ShapeError("slice_channels: bad range");
  const std::size_t plane = static_cast<std::size_t>(v.dim(1)) * v.dim(2);
  Tensor out({end - begin, v.dim(1), v.dim(2)});
  std::copy(v.data().begin() + static_cast<std::ptrdiff_t>(begin * plane),
            v.data().begin() + static_cast<std::ptrdiff_t>(end * plane), out.data().begin());
  return a.tape->record("slice_channels", std::move(out), {a.id},
                        [ai = a.id, off = begin * plane](Tape& t, int self) {
    auto g = t.grad(self);
    auto ga = t.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[off + i] += g[i];
  });
}

// Multiplies by a constant mask. The mask either matches `a` exactly or is
// 1 x H x W and broadcasts over the channels of a C x H x W input.
inline Var mask_mul(Var a, const Tensor& mask) {
  const Tensor& v = a.value();
  std::size_t plane = v.size();
  if (mask.shape() != v.shape()) {
    detail::require_rank(v, 3, "mask_mul");
    if (mask.rank() != 3 || mask.dim(0) != 1 || mask.dim(1) != v.dim(1) || mask.dim(2) != v.dim(2)) {
      throw ShapeError("mask_mul: mask " + shape_str(mask.shape()) + " does not fit " +
                       shape_str(v.shape()));
    }
    plane = static_cast<std::size_t>(v.dim(1)) * v.dim(2);
  }
  Tensor out = v;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i % plane];
  return a.tape->record("mask_mul", std::move(out), {a.id}, [ai = a.id, mask, plane](Tape& t, int self) {
    auto g = t.grad(self);
    auto ga = t.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i % plane];
  });
}

// out[d * N + i, u, v] = f[d, u, v] * q[i, u, v]. Gradient reaches q only
// when `grad_to_q` is set.
inline Var outer_product_channels(Var f, Var q, bool grad_to_q = false) {
  detail::same_tape(f, q);
  const Tensor& fv = f.value();
  const Tensor& qv = q.value();
  detail::require_rank(fv, 3, "outer_product_channels");
  detail::require_rank(qv, 3, "outer_product_channels");
  if (fv.dim(1) != qv.dim(1) || fv.dim(2) != qv.dim(2)) {
    throw ShapeError("outer_product_channels: spatial extents differ " + shape_str(fv.shape()) +
                     " vs " + shape_str(qv.shape()));
  }
  const int d_count = fv.dim(0), n_bin = qv.dim(0);
  const std::size_t plane = static_cast<std::size_t>(fv.dim(1)) * fv.dim(2);
  Tensor out({d_count * n_bin, fv.dim(1), fv.dim(2)});
  for (int d = 0; d < d_count; ++d) {
    for (int i = 0; i < n_bin; ++i) {
      double* dst = out.data().data() + (static_cast<std::size_t>(d) * n_bin + i) * plane;
      const double* fd = fv.data().data() + d * plane;
      const double* qi = qv.data().data() + i * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = fd[p] * qi[p];
    }
  }
  std::vector<int> inputs{f.id};
  if (grad_to_q) inputs.push_back(q.id);
  return f.tape->record("outer_product_channels", std::move(out), inputs,
                        [fi = f.id, qi_id = q.id, grad_to_q, d_count, n_bin, plane](Tape& t, int self) {
    auto g = t.grad(self);
    const auto& fv = t.value(fi);
    const auto& qv = t.value(qi_id);
    if (t.needs_grad(fi)) {
      auto gf = t.grad(fi);
      for (int d = 0; d < d_count; ++d) {
        for (int i = 0; i < n_bin; ++i) {
          const double* gp = g.data() + (static_cast<std::size_t>(d) * n_bin + i) * plane;
          const double* qp = qv.data().data() + i * plane;
          double* dst = gf.data() + d * plane;
          for (std::size_t p = 0; p < plane; ++p) dst[p] += gp[p] * qp[p];
        }
      }
    }
    if (grad_to_q && t.needs_grad(qi_id)) {
      auto gq = t.grad(qi_id);
      for (int d = 0; d < d_count; ++d) {
        for (int i = 0; i < n_bin; ++i) {
          const double* gp = g.data() + (static_cast<std::size_t>(d) * n_bin + i) * plane;
          const double* fp = fv.data().data() + d * plane;
          double* dst = gq.data() + i * plane;
          for (std::size_t p = 0; p < plane; ++p) dst[p] += gp[p] * fp[p];
        }
      }
    }
  });
}

// Identity forward; backward delivers -lambda times the upstream gradient.
inline Var grad_reverse(Var x, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("grad_reverse: lambda must be nonnegative");
  Tensor out = x.value();
  return detail::tape_of(x).record("grad_reverse", std::move(out), {x.id},
                                   [xi = x.id, lambda](Tape& t, int self) {
    auto g = t.grad(self);
    auto gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] -= lambda * g[i];
  });
}

// ---------------------------------------------------------------------------
// Losses. Each returns a scalar: the weighted sum divided by `normalizer`.

// Binary cross-entropy on probabilities with eps-clamped logs.
inline Var binary_cross_entropy(Var prob, const Tensor& target, const Tensor& weight,
                                double normalizer) {
  const Tensor& p = prob.value();
  require_same_shape(p, target, "binary_cross_entropy");
  require_same_shape(p, weight, "binary_cross_entropy");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (weight[i] == 0.0) continue;
    const double l = -(target[i] * std::log(std::max(p[i], kLogEps)) +
                       (1.0 - target[i]) * std::log(std::max(1.0 - p[i], kLogEps)));
    s += weight[i] * l;
  }
  return detail::tape_of(prob).record("binary_cross_entropy", Tensor::scalar(s / normalizer), {prob.id},
                                      [pi = prob.id, target, weight, normalizer](Tape& t, int self) {
    const double g = t.grad(self)[0] / normalizer;
    const auto& p = t.value(pi);
    auto gp = t.grad(pi);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (weight[i] == 0.0) continue;
      double d = 0.0;
      if (p[i] > kLogEps) d -= target[i] / p[i];
      if (1.0 - p[i] > kLogEps) d += (1.0 - target[i]) / (1.0 - p[i]);
      gp[i] += g * weight[i] * d;
    }
  });
}

// Sigmoid focal loss on logits with binary targets:
// t=1: -alpha (1-p)^gamma log p;  t=0: -(1-alpha) p^gamma log(1-p).
inline Var focal_loss(Var logits, const Tensor& target, double alpha, double gamma,
                      double normalizer) {
  const Tensor& x = logits.value();
  require_same_shape(x, target, "focal_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = detail::sigmoid(x[i]);
    if (target[i] > 0.5) {
      s += -alpha * std::pow(1.0 - p, gamma) * detail::log_sigmoid(x[i]);
    } else {
      s += -(1.0 - alpha) * std::pow(p, gamma) * detail::log_sigmoid(-x[i]);
    }
  }
  return detail::tape_of(logits).record(
      "focal_loss", Tensor::scalar(s / normalizer), {logits.id},
      [xi = logits.id, target, alpha, gamma, normalizer](Tape& t, int self) {
        const double g = t.grad(self)[0] / normalizer;
        const auto& x = t.value(xi);
        auto gx = t.grad(xi);
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double p = detail::sigmoid(x[i]);
          double d;
          if (target[i] > 0.5) {
            d = alpha * std::pow(1.0 - p, gamma) * (gamma * p * detail::log_sigmoid(x[i]) - (1.0 - p));
          } else {
            d = (1.0 - alpha) * std::pow(p, gamma) *
                (p - gamma * (1.0 - p) * detail::log_sigmoid(-x[i]));
          }
          gx[i] += g * d;
        }
      });
}

// -log IoU between predicted and target (l, t, r, b) offsets, both 4 x H x W
// and positive; `weight` is 1 x H x W.
inline Var iou_loss(Var pred, const Tensor& target, const Tensor& weight, double normalizer) {
  const Tensor& pv = pred.value();
  require_same_shape(pv, target, "iou_loss");
  detail::require_rank(pv, 3, "iou_loss");
  if (pv.dim(0) != 4 || weight.size() * 4 != pv.size()) {
    throw ShapeError("iou_loss: expected 4 x H x W offsets and 1 x H x W weights");
  }
  const std::size_t plane = weight.size();
  auto terms = [plane](const Tensor& p, const Tensor& tg, std::size_t i) {
    struct Terms {
      double wi, hi, inter, uni, area_p;
    } r{};
    const double l = p[i], tp = p[plane + i], rr = p[2 * plane + i], b = p[3 * plane + i];
    const double gl = tg[i], gt = tg[plane + i], gr = tg[2 * plane + i], gb = tg[3 * plane + i];
    r.wi = std::min(l, gl) + std::min(rr, gr);
    r.hi = std::min(tp, gt) + std::min(b, gb);
    r.inter = r.wi * r.hi;
    r.area_p = (l + rr) * (tp + b);
    r.uni = r.area_p + (gl + gr) * (gt + gb) - r.inter;
    return r;
  };
  double s = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    if (weight[i] == 0.0) continue;
    const auto r = terms(pv, target, i);
    s += -weight[i] * std::log(std::max(r.inter / r.uni, kLogEps));
  }
  return detail::tape_of(pred).record(
      "iou_loss", Tensor::scalar(s / normalizer), {pred.id},
      [pi = pred.id, target, weight, normalizer, plane, terms](Tape& t, int self) {
        const double g = t.grad(self)[0] / normalizer;
        const auto& p = t.value(pi);
        auto gp = t.grad(pi);
        for (std::size_t i = 0; i < plane; ++i) {
          if (weight[i] == 0.0) continue;
          const auto r = terms(p, target, i);
          if (r.inter / r.uni <= kLogEps) continue;
          const double w = g * weight[i];
          // loss = -log(inter) + log(union)
          const double l = p[i], tp = p[plane + i], rr = p[2 * plane + i], b = p[3 * plane + i];
          const double d_inter_l = l < target[i] ? r.hi : 0.0;
          const double d_inter_r = rr < target[2 * plane + i] ? r.hi : 0.0;
          const double d_inter_t = tp < target[plane + i] ? r.wi : 0.0;
          const double d_inter_b = b < target[3 * plane + i] ? r.wi : 0.0;
          auto grad = [&](double d_inter, double d_area) {
            return -d_inter / r.inter + (d_area - d_inter) / r.uni;
          };
          gp[i] += w * grad(d_inter_l, tp + b);
          gp[plane + i] += w * grad(d_inter_t, l + rr);
          gp[2 * plane + i] += w * grad(d_inter_r, tp + b);
          gp[3 * plane + i] += w * grad(d_inter_b, l + rr);
        }
      });
}

}  // namespace oada::diff
