#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "oada/diffcore/ops.hpp"

namespace oada::diff {

using DiffOp = std::function<Var(Tape&, std::span<const Var>)>;

struct InputRange {
  double lo = -1.0;
  double hi = 1.0;
};

struct GradCheckReport {
  std::string op;
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;

  bool passed(double tol) const { return max_rel_error <= tol; }

  std::string describe() const {
    std::ostringstream oss;
    oss << "grad_check[" << op << "] max rel err " << max_rel_error << " at input "
        << worst_input << " entry " << worst_index << " (analytic " << analytic << ", numeric "
        << numeric << ")";
    return oss.str();
  }
};

class GradCheckFailure : public std::runtime_error {
 public:
  explicit GradCheckFailure(const GradCheckReport& r)
      : std::runtime_error(r.describe()), report(r) {}
  GradCheckReport report;
};

// Denominator floor of the relative error; below it the check is effectively
// absolute at floor * tol.
inline constexpr double kGradCheckFloor = 1e-4;

// Compares reverse-mode gradients of `op` against central finite differences.
// Non-scalar outputs are reduced with seeded random readout weights so every
// output entry participates. Throws GradCheckFailure when the error exceeds
// `tol`; otherwise returns the report. `numeric_scale` multiplies the
// finite-difference estimate: a gradient-reversal probe expects -lambda times
// the forward derivative.
inline GradCheckReport grad_check(const std::string& name, const DiffOp& op,
                                  const std::vector<Shape>& input_shapes, double eps, double tol,
                                  std::uint64_t seed = 1, std::vector<InputRange> ranges = {},
                                  double numeric_scale = 1.0) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw std::invalid_argument("grad_check: eps outside [1e-7, 1e-3]");
  std::mt19937_64 rng(seed);
  std::vector<Tensor> inputs;
  for (std::size_t k = 0; k < input_shapes.size(); ++k) {
    const InputRange r = k < ranges.size() ? ranges[k] : InputRange{};
    std::uniform_real_distribution<double> u(r.lo, r.hi);
    Tensor t(input_shapes[k]);
    for (double& v : t.data()) v = u(rng);
    t.set_requires_grad(true);
    inputs.push_back(std::move(t));
  }

  Tensor readout;
  auto evaluate = [&](Tape& tape) {
    std::vector<Var> vars;
    for (Tensor& t : inputs) vars.push_back(tape.param(t));
    Var y = op(tape, vars);
    if (y.value().size() == 1) return y;
    if (readout.empty()) {
      readout = Tensor(y.value().shape());
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (double& v : readout.data()) v = u(rng);
    }
    return sum(mul(y, tape.constant(readout)));
  };

  {
    Tape tape;
    tape.backward(evaluate(tape));
  }
  std::vector<std::vector<double>> analytic;
  for (Tensor& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  GradCheckReport report;
  report.op = name;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + eps;
      double fp, fm;
      {
        Tape tape(false);
        fp = evaluate(tape).value()[0];
      }
      inputs[k][i] = orig - eps;
      {
        Tape tape(false);
        fm = evaluate(tape).value()[0];
      }
      inputs[k][i] = orig;
      const double numeric = numeric_scale * (fp - fm) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      const double err = std::abs(a - numeric) / denom;
      ++report.entries_checked;
      if (err > report.max_rel_error || report.entries_checked == 1) {
        report.max_rel_error = err;
        report.worst_input = k;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  if (!report.passed(tol)) throw GradCheckFailure(report);
  return report;
}

}  // namespace oada::diff
