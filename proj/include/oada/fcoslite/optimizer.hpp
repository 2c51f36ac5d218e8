#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "oada/diffcore/tensor.hpp"

namespace oada::fcos {

// Piecewise-constant schedule: lr is multiplied by `factor` once each
// milestone fraction of the total iteration count has been reached. The
// first `warmup_iters` iterations ramp linearly up to the base rate.
struct StepSchedule {
  double base_lr = 0.01;
  double factor = 0.1;
  std::vector<double> milestones{0.6, 0.9};
  int warmup_iters = 100;

  std::vector<int> milestone_iters(int total_iters) const {
    std::vector<int> out;
    for (double m : milestones) out.push_back(static_cast<int>(std::lround(m * total_iters)));
    return out;
  }

  double lr_at(int iter, int total_iters) const {
    double lr = base_lr;
    if (iter < warmup_iters) lr *= static_cast<double>(iter + 1) / warmup_iters;
    for (int m : milestone_iters(total_iters)) {
      if (iter >= m) lr *= factor;
    }
    return lr;
  }
};

struct SgdParams {
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double clip_norm = 0.0;  // 0 disables global gradient-norm clipping
};

// SGD with heavy-ball momentum and L2 weight decay folded into the gradient.
class Sgd {
 public:
  Sgd() = default;
  Sgd(std::vector<diff::Tensor*> params, SgdParams p) : params_(std::move(params)), p_(p) {
    for (diff::Tensor* t : params_) {
      if (t == nullptr) throw std::invalid_argument("sgd: null parameter");
      velocity_.emplace_back(t->shape());
    }
  }

  const SgdParams& params() const { return p_; }

  double grad_norm() const {
    double s = 0.0;
    for (const diff::Tensor* t : params_) {
      if (!t->has_grad()) continue;
      for (double g : t->grad()) s += g * g;
    }
    return std::sqrt(s);
  }

  // Applies one update with learning rate lr; returns the pre-clip grad norm.
  double step(double lr) {
    const double norm = grad_norm();
    const double clip = (p_.clip_norm > 0.0 && norm > p_.clip_norm) ? p_.clip_norm / norm : 1.0;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      diff::Tensor& t = *params_[k];
      if (!t.has_grad()) continue;
      auto w = t.data();
      auto g = t.grad();
      auto v = velocity_[k].data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double d = clip * g[i] + p_.weight_decay * w[i];
        v[i] = p_.momentum * v[i] + d;
        w[i] -= lr * v[i];
      }
    }
    return norm;
  }

  std::vector<diff::Tensor>& velocity() { return velocity_; }

 private:
  std::vector<diff::Tensor*> params_;
  std::vector<diff::Tensor> velocity_;
  SgdParams p_;
};

}  // namespace oada::fcos
