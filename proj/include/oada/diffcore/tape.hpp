#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "oada/diffcore/tensor.hpp"

namespace oada::diff {

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool needs_grad() const;
};

// Linear record of the forward computation. Backward walks the records in
// exact reverse order; records are appended in execution order so the list is
// topologically sorted by construction.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  struct Record {
    std::string op;
    std::vector<int> inputs;
    Tensor value;
    std::vector<double> grad;
    bool needs_grad = false;
    BackwardFn backward;
    Tensor* param = nullptr;
  };

  explicit Tape(bool record_grad = true) : record_grad_(record_grad) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_grad_; }

  Var constant(Tensor value, std::string name = "const") {
    check_finite(value, name);
    Record r;
    r.op = std::move(name);
    r.value = std::move(value);
    records_.push_back(std::move(r));
    return {this, static_cast<int>(records_.size()) - 1};
  }

  // Binds a parameter tensor. The first binding on a tape clears the
  // parameter's gradient, so every fresh forward pass starts from zero.
  Var param(Tensor& p) {
    if (auto it = bound_.find(&p); it != bound_.end()) return {this, it->second};
    check_finite(p, "param");
    Record r;
    r.op = "param";
    r.value = Tensor(p.shape(), std::vector<double>(p.data().begin(), p.data().end()));
    r.needs_grad = record_grad_ && p.requires_grad();
    if (r.needs_grad) {
      p.zero_grad();
      r.param = &p;
      r.backward = [](Tape& t, int self) {
        Record& rec = t.records_[self];
        auto g = rec.param->grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += rec.grad[i];
      };
    }
    records_.push_back(std::move(r));
    const int id = static_cast<int>(records_.size()) - 1;
    bound_.emplace(&p, id);
    return {this, id};
  }

  // Appends an op result. `fn` is kept only when some input needs a gradient.
  Var record(std::string op, Tensor value, std::vector<int> inputs, BackwardFn fn) {
    check_finite(value, op);
    Record r;
    r.op = std::move(op);
    r.value = std::move(value);
    if (record_grad_) {
      for (int in : inputs) r.needs_grad = r.needs_grad || records_[in].needs_grad;
    }
    if (r.needs_grad) r.backward = std::move(fn);
    r.inputs = std::move(inputs);
    records_.push_back(std::move(r));
    return {this, static_cast<int>(records_.size()) - 1};
  }

  const Tensor& value(int id) const { return records_.at(id).value; }
  bool needs_grad(int id) const { return records_.at(id).needs_grad; }
  const Record& record_at(int id) const { return records_.at(id); }
  std::size_t size() const { return records_.size(); }

  // Gradient buffer of record `id`, allocated on first use.
  std::span<double> grad(int id) {
    Record& r = records_[id];
    if (r.grad.empty()) r.grad.assign(r.value.size(), 0.0);
    return r.grad;
  }
  bool has_grad(int id) const { return !records_[id].grad.empty(); }

  void backward(Var loss) {
    if (loss.tape != this) throw std::logic_error("backward: variable belongs to another tape");
    if (!record_grad_) throw std::logic_error("backward: tape is not recording");
    if (ran_backward_) throw std::logic_error("backward: already ran on this tape");
    if (records_[loss.id].value.size() != 1) {
      throw ShapeError("backward: loss must be a scalar, got " +
                       shape_str(records_[loss.id].value.shape()));
    }
    ran_backward_ = true;
    if (!records_[loss.id].needs_grad) return;
    grad(loss.id)[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
      Record& r = records_[i];
      if (!r.needs_grad || r.grad.empty() || !r.backward) continue;
      r.backward(*this, i);
    }
    for (auto& [p, id] : bound_) {
      if (!p->has_grad()) continue;
      for (double g : p->grad()) {
        if (!std::isfinite(g)) {
          throw NonFiniteError("non-finite gradient reached a parameter");
        }
      }
    }
  }

 private:
  static void check_finite(const Tensor& t, const std::string& op) {
    if (!t.all_finite()) throw NonFiniteError("non-finite value produced by op '" + op + "'");
  }

  bool record_grad_;
  bool ran_backward_ = false;
  std::deque<Record> records_;  // stable references across appends
  std::unordered_map<const Tensor*, int> bound_;
};

inline const Tensor& Var::value() const { return tape->value(id); }
inline bool Var::needs_grad() const { return tape->needs_grad(id); }

}  // namespace oada::diff
