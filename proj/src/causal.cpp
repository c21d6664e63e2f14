#include "causalrec/causal.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "causalrec/linalg.hpp"

namespace causalrec::causal {

CausalState CausalState::initial(std::size_t n) {
  CausalState s;
  s.W = Tensor::zeros({n, n});
  s.R = Tensor::zeros({n, n});
  return s;
}

namespace {

struct CovShape {
  std::size_t n = 0;
  std::size_t d = 0;
};

CovShape check_reprs(std::size_t count, const Tensor& first, bool centered, const char* op) {
  if (count == 0) throw ContractError(std::string(op) + ": need at least one representation");
  if (first.rank() != 2) throw DimensionError(std::string(op) + ": representations must be [n x D]");
  CovShape s{first.rows(), first.cols()};
  if (centered && count * s.d < 2)
    throw ContractError(std::string(op) + ": N*D < 2 samples, centered covariance is degenerate");
  return s;
}

std::vector<Real> position_means(std::span<const Tensor* const> reprs, std::size_t n, std::size_t d) {
  std::vector<Real> mean(n, 0.0);
  for (const Tensor* z : reprs)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) mean[i] += (*z)(i, k);
  const Real inv = 1.0 / static_cast<Real>(reprs.size() * d);
  for (Real& m : mean) m *= inv;
  return mean;
}

Tensor covariance_value(std::span<const Tensor* const> reprs, std::size_t n, std::size_t d, bool centered,
                        std::vector<Real>* means_out) {
  std::vector<Real> mean = centered ? position_means(reprs, n, d) : std::vector<Real>(n, 0.0);
  Tensor w({n, n});
  for (const Tensor* z : reprs) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) {
        Real s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += ((*z)(i, k) - mean[i]) * ((*z)(j, k) - mean[j]);
        w(i, j) += s;
      }
  }
  const Real inv = 1.0 / static_cast<Real>(reprs.size() * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      w(i, j) *= inv;
      w(j, i) = w(i, j);
    }
  if (means_out) *means_out = std::move(mean);
  return w;
}

}  // namespace

CovarianceEstimate batch_covariance(std::span<const Tensor> reprs, bool centered) {
  const CovShape s = check_reprs(reprs.size(), reprs.front(), centered, "batch_covariance");
  std::vector<const Tensor*> ptrs;
  for (const Tensor& z : reprs) {
    require_same_shape(z, reprs.front(), "batch_covariance");
    ptrs.push_back(&z);
  }
  CovarianceEstimate est;
  est.W = covariance_value(ptrs, s.n, s.d, centered, nullptr);
  est.sample_count = reprs.size() * s.d;
  est.centered = centered;
  return est;
}

Var batch_covariance(std::span<const Var> reprs, bool centered) {
  const CovShape s = check_reprs(reprs.size(), reprs.front().value(), centered, "batch_covariance");
  std::vector<const Tensor*> ptrs;
  std::vector<std::size_t> ids;
  for (const Var& z : reprs) {
    require_same_shape(z.value(), reprs.front().value(), "batch_covariance");
    ptrs.push_back(&z.value());
    ids.push_back(z.id());
  }
  std::vector<Real> mean;
  Tensor w = covariance_value(ptrs, s.n, s.d, centered, &mean);
  const std::size_t n = s.n, d = s.d;
  const Real inv = 1.0 / static_cast<Real>(reprs.size() * d);
  // dL/dZ_k[i][d] = inv * sum_j (G_ij + G_ji) (Z_k[j][d] - mean_j); the mean's
  // own derivative drops out because centered deviations sum to zero.
  return reprs.front().tape().record(
      std::move(w), reprs, [ids = std::move(ids), mean = std::move(mean), n, d, inv](Tape& t, std::size_t self) {
        const auto g = t.adjoint(self);
        for (std::size_t id : ids) {
          if (!t.needs_grad(id)) continue;
          const Tensor& z = t.value(id);
          auto gz = t.adjoint(id);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const Real gs = inv * (g[i * n + j] + g[j * n + i]);
              if (gs == 0.0) continue;
              for (std::size_t k = 0; k < d; ++k) gz[i * d + k] += gs * (z(j, k) - mean[j]);
            }
        }
      });
}

Real acyclicity_penalty(const Tensor& w) {
  require_square(w, "acyclicity_penalty");
  const Tensor e = expm(hadamard(w, w));
  return trace(e) - static_cast<Real>(w.rows());
}

Tensor acyclicity_gradient(const Tensor& w) {
  require_square(w, "acyclicity_gradient");
  const Tensor e = expm(hadamard(w, w));
  Tensor g(w.shape());
  const std::size_t n = w.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g(i, j) = e(j, i) * 2.0 * w(i, j);
  return g;
}

Var acyclicity_penalty(const Var& w) {
  const Tensor& W = w.value();
  require_square(W, "acyclicity_penalty");
  Tensor e = expm(hadamard(W, W));
  const Real h = trace(e) - static_cast<Real>(W.rows());
  if (!std::isfinite(h)) throw NumericError("acyclicity_penalty: overflow");
  const std::size_t iw = w.id(), n = W.rows();
  return w.tape().record(Tensor::scalar(h), {w}, [iw, n, e = std::move(e)](Tape& t, std::size_t self) {
    const Real g = t.adjoint(self)[0];
    const Tensor& W = t.value(iw);
    auto gw = t.adjoint(iw);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) gw[i * n + j] += g * e(j, i) * 2.0 * W(i, j);
  });
}

Real l1_penalty(const Tensor& w) {
  Real s = 0.0;
  for (Real v : w.data()) s += std::abs(v);
  return s;
}

Var l1_penalty(const Var& w) {
  const Real s = l1_penalty(w.value());
  const std::size_t iw = w.id();
  return w.tape().record(Tensor::scalar(s), {w}, [iw](Tape& t, std::size_t self) {
    const Real g = t.adjoint(self)[0];
    const Tensor& W = t.value(iw);
    auto gw = t.adjoint(iw);
    for (std::size_t i = 0; i < gw.size(); ++i) {
      const Real v = W[i];
      gw[i] += g * static_cast<Real>((v > 0.0) - (v < 0.0));
    }
  });
}

Real dag_loss(std::span<const Real> h_values, const CausalState& state) {
  Real total = 0.0;
  for (Real h : h_values) total += 0.5 * state.rho * h * h + state.beta_mult * std::abs(h);
  return total;
}

Var dag_loss(const Var& h, const CausalState& state) {
  const Real hv = h.value().item();
  const Real rho = state.rho, beta = state.beta_mult;
  const Real value = 0.5 * rho * hv * hv + beta * std::abs(hv);
  const std::size_t ih = h.id();
  return h.tape().record(Tensor::scalar(value), {h}, [ih, rho, beta](Tape& t, std::size_t self) {
    const Real g = t.adjoint(self)[0];
    const Real hv = t.value(ih)[0];
    t.adjoint(ih)[0] += g * (rho * hv + beta * static_cast<Real>((hv > 0.0) - (hv < 0.0)));
  });
}

Tensor off_diagonal(const Tensor& w) {
  require_square(w, "off_diagonal");
  Tensor out = w;
  for (std::size_t i = 0; i < w.rows(); ++i) out(i, i) = 0.0;
  return out;
}

Var off_diagonal(const Var& w) {
  require_square(w.value(), "off_diagonal");
  const std::size_t n = w.value().rows();
  Tensor mask = Tensor::ones({n, n});
  for (std::size_t i = 0; i < n; ++i) mask(i, i) = 0.0;
  return mul_const(w, mask);
}

Tensor extract_relation_matrix(const Tensor& w, Real tau) {
  require_square(w, "extract_relation_matrix");
  if (!(tau > 0.0)) throw ParameterError("extract_relation_matrix: tau must be positive");
  const std::size_t n = w.rows();
  Tensor r = Tensor::zeros({n, n});
  const Real scale = max_abs(w);
  if (scale == 0.0) return r;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (std::abs(w(i, j)) / scale > tau) r(i, j) = 1.0;
    }
  return r;
}

CausalState update_multipliers(CausalState state, std::span<const Real> epoch_h_values) {
  Real kappa = 0.0;
  for (Real h : epoch_h_values) kappa += h;
  if (!epoch_h_values.empty()) kappa /= static_cast<Real>(epoch_h_values.size());
  state.kappa = kappa;
  state.beta_mult += state.rho * kappa;
  if (kappa >= state.gamma2 * state.kappa_prev) state.rho = std::min(state.rho * state.gamma1, state.rho_max);
  state.kappa_prev = kappa;
  return state;
}

void write_dense_matrix(std::ostream& os, const Tensor& m) {
  if (m.rank() != 2) throw DimensionError("write_dense_matrix: expected matrix");
  const auto old = os.precision(std::numeric_limits<Real>::max_digits10);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) os << (j ? " " : "") << m(i, j);
    os << '\n';
  }
  os.precision(old);
}

Tensor read_dense_matrix(std::istream& is) {
  std::vector<Real> data;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::size_t count = 0;
    Real v;
    while (ls >> v) {
      data.push_back(v);
      ++count;
    }
    if (!ls.eof()) throw FormatError("read_dense_matrix: unparseable value on row " + std::to_string(rows));
    if (rows == 0) cols = count;
    if (count != cols) throw FormatError("read_dense_matrix: ragged row " + std::to_string(rows));
    ++rows;
  }
  if (rows == 0) throw FormatError("read_dense_matrix: empty input");
  return Tensor({rows, cols}, std::move(data));
}

void write_edge_list(std::ostream& os, const Tensor& w, const Tensor& r) {
  require_square(w, "write_edge_list");
  const bool use_r = !r.empty();
  if (use_r) require_same_shape(w, r, "write_edge_list");
  const auto old = os.precision(std::numeric_limits<Real>::max_digits10);
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) {
      const bool edge = use_r ? r(i, j) != 0.0 : (i != j && w(i, j) != 0.0);
      if (edge) os << i << ' ' << j << ' ' << w(i, j) << '\n';
    }
  os.precision(old);
}

}  // namespace causalrec::causal
