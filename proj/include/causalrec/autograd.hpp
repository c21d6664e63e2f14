#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "causalrec/rng.hpp"
#include "causalrec/tensor.hpp"

namespace causalrec {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// that produced it is alive and has not been cleared.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Ordered record of executed operations.
///
/// Each recorded node owns its forward value (parameters are referenced, not
/// copied) and, when any input needs a gradient, a closure that scatters the
/// node's adjoint into its inputs. backward() replays the closures in exact
/// reverse recording order. A tape supports a single backward pass; clear()
/// starts a new forward.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Binds a parameter by reference. If param.requires_grad(), backward()
  // accumulates d(loss)/d(param) into param.grad(). The parameter must
  // outlive the tape and must not be mutated until backward() finishes.
  Var parameter(Tensor& param);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

  const Tensor& value(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }
  // Adjoint buffer of a node; allocated (zeroed) on first access.
  std::span<Real> adjoint(std::size_t id);

  void backward(const Var& loss);
  void clear();

  std::size_t size() const noexcept { return nodes_.size(); }
  bool backward_done() const noexcept { return backward_done_; }
  const std::vector<std::size_t>& backward_order() const noexcept { return backward_order_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* bound = nullptr;
    Tensor* param = nullptr;
    bool needs_grad = false;
    BackwardFn backward;
    std::vector<Real> adjoint;
  };

  std::deque<Node> nodes_;
  bool backward_done_ = false;
  std::vector<std::size_t> backward_order_;
};

// ---- Differentiable operations ------------------------------------------
// All take and return Vars on the same tape. Forward outputs are checked for
// finiteness where the op can create non-finite values from finite input.

Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
// x[n x D] + bias[D] broadcast over rows.
Var add_bias(const Var& x, const Var& bias);
Var scale(const Var& a, Real s);
Var mul(const Var& a, const Var& b);
// Elementwise product / sum with a tensor that receives no gradient.
Var mul_const(const Var& a, const Tensor& c);
Var add_const(const Var& a, const Tensor& c);
Var relu(const Var& a);

/// Row-wise softmax, stabilized by row-max subtraction. Entries equal to
/// -infinity are masked positions and receive probability exactly 0; a row
/// that is entirely -infinity yields all zeros. NaN input is a NumericError.
Var softmax_rows(const Var& x);

/// theta1 * (x - mean) / sqrt(var + eps) + theta2 over the last dimension.
/// The last dimension must be at least 2.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, Real eps = 1e-8);

/// Inverted dropout: in training mode each element is kept with probability
/// 1 - p and scaled by 1 / (1 - p); identity otherwise. Requires 0 <= p < 1.
Var dropout(const Var& x, Real p, bool training, Rng& rng);

// Rows of table selected by idx; gradient scatter-adds back into the table.
Var gather_rows(const Var& table, std::span<const int> idx);
// out[i] = dot(a.row(i), b.row(i))
Var rowwise_dot(const Var& a, const Var& b);
Var sum(const Var& a);
Var weighted_sum(const Var& a, const Tensor& weights);
// Numerically stable log(sigmoid(x)).
Var log_sigmoid(const Var& a);
// Sum of same-shape Vars.
Var add_n(std::span<const Var> xs);

}  // namespace causalrec
