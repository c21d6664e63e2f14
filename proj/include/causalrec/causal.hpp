#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "causalrec/autograd.hpp"
#include "causalrec/tensor.hpp"

namespace causalrec::causal {

/// Augmented-Lagrangian state of the causal discovery block.
///
/// `beta_mult` is the Lagrange multiplier on the acyclicity violation and
/// `rho` the quadratic penalty weight. Both are updated once per epoch by
/// update_multipliers(); rho never decreases.
struct CausalState {
  Tensor W;  // running estimate used to derive R, [n x n]
  Tensor R;  // binary relation matrix, zero diagonal, [n x n]
  Real rho = 1.0;
  Real beta_mult = 0.0;
  Real kappa = 0.0;
  Real kappa_prev = 0.0;
  Real lambda = 1e-4;
  Real gamma1 = 10.0;
  Real gamma2 = 0.25;
  Real rho_max = 1e16;
  Real tau = 0.3;

  static CausalState initial(std::size_t n);
};

struct CovarianceEstimate {
  Tensor W;
  std::size_t sample_count = 0;
  bool centered = false;
};

/// Second-moment matrix over positions of a batch of representations.
///
/// Each representation is [n x D]; rows are positions (the variables) and
/// every (sequence, hidden-dim) pair is one sample:
///   W[i][j] = 1/(N*D) * sum_k sum_d Z_k[i][d] * Z_k[j][d]
/// With `centered` the per-position sample mean is subtracted first.
/// Throws ContractError on an empty batch, and in centered mode when N*D < 2.
CovarianceEstimate batch_covariance(std::span<const Tensor> reprs, bool centered = false);
// Recorded version; W is differentiable with respect to every repr.
Var batch_covariance(std::span<const Var> reprs, bool centered = false);

/// h(W) = trace(exp(W .* W)) - n. Zero exactly when the support of W is
/// acyclic; the gradient is exp(W .* W)^T .* 2W.
Real acyclicity_penalty(const Tensor& w);
Tensor acyclicity_gradient(const Tensor& w);
Var acyclicity_penalty(const Var& w);

/// Sum of |W_ij|; subgradient sign(W) with sign(0) = 0.
Real l1_penalty(const Tensor& w);
Var l1_penalty(const Var& w);

/// sum_k rho/2 * h_k^2 + beta_mult * |h_k|
Real dag_loss(std::span<const Real> h_values, const CausalState& state);
Var dag_loss(const Var& h, const CausalState& state);

/// W with its diagonal set to zero (self-loops are not edges).
Tensor off_diagonal(const Tensor& w);
Var off_diagonal(const Var& w);

/// Binary relation matrix: R_ij = 1 iff |W_ij| / max|W| > tau, diagonal 0.
/// An all-zero W yields R = 0. Requires tau > 0.
Tensor extract_relation_matrix(const Tensor& w, Real tau);

/// End-of-epoch multiplier schedule:
///   kappa = mean(h); beta_mult += rho * kappa;
///   rho *= gamma1 if kappa >= gamma2 * kappa_prev (capped at rho_max);
///   kappa_prev = kappa.
CausalState update_multipliers(CausalState state, std::span<const Real> epoch_h_values);

// One row per line, space separated, full round-trip precision.
void write_dense_matrix(std::ostream& os, const Tensor& m);
Tensor read_dense_matrix(std::istream& is);
// "i j weight" for every entry with R_ij = 1 (or every nonzero of W when R is empty).
void write_edge_list(std::ostream& os, const Tensor& w, const Tensor& r);

}  // namespace causalrec::causal
