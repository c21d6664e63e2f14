#include "causalrec/scmlab.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "causalrec/causal.hpp"
#include "causalrec/errors.hpp"
#include "causalrec/linalg.hpp"

namespace causalrec::scm {

namespace {

std::vector<std::size_t> random_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  return order;
}

Real random_weight(Rng& rng, const WeightRange& range) {
  const Real mag = rng.uniform(range.lo, range.hi);
  return rng.bernoulli(0.5) ? mag : -mag;
}

void check_range(const WeightRange& range) {
  if (!(range.lo > 0.0) || !(range.hi >= range.lo)) throw ParameterError("weight range must satisfy 0 < lo <= hi");
}

ScmInstance empty_instance(std::size_t n, Rng& rng) {
  if (n < 2) throw ParameterError("SCM needs at least two variables");
  ScmInstance inst;
  inst.n = n;
  inst.B = Tensor::zeros({n, n});
  inst.lambda.assign(n, 1.0);
  inst.order = random_order(n, rng);
  return inst;
}

bool support_acyclic(const Tensor& s) { return causal::acyclicity_penalty(s) < 1e-12; }

Tensor centered(const Tensor& data) {
  const std::size_t rows = data.rows(), cols = data.cols();
  std::vector<Real> mean(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) mean[c] += data(r, c);
  for (Real& m : mean) m /= static_cast<Real>(rows);
  Tensor out(data.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = data(r, c) - mean[c];
  return out;
}

std::string fmt(Real v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

Tensor ScmInstance::support() const {
  Tensor s({n, n});
  for (std::size_t i = 0; i < B.size(); ++i) s[i] = B[i] != 0.0 ? 1.0 : 0.0;
  return s;
}

std::size_t ScmInstance::edge_count() const {
  return static_cast<std::size_t>(std::count_if(B.data().begin(), B.data().end(), [](Real v) { return v != 0.0; }));
}

ScmInstance generate_random_dag(std::size_t n, Real edge_prob, Rng& rng, WeightRange range) {
  if (!(edge_prob >= 0.0) || edge_prob > 1.0) throw ParameterError("generate_random_dag: edge_prob must be in [0, 1]");
  check_range(range);
  ScmInstance inst = empty_instance(n, rng);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (rng.bernoulli(edge_prob)) inst.B(inst.order[a], inst.order[b]) = random_weight(rng, range);
  return inst;
}

ScmInstance generate_dag_with_edges(std::size_t n, std::size_t edges, Rng& rng, WeightRange range) {
  check_range(range);
  if (edges > n * (n - 1) / 2) throw ParameterError("generate_dag_with_edges: more edges than a DAG can hold");
  ScmInstance inst = empty_instance(n, rng);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) pairs.emplace_back(a, b);
  for (std::size_t k = 0; k < edges; ++k) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(k), static_cast<std::int64_t>(pairs.size()) - 1));
    std::swap(pairs[k], pairs[j]);
    inst.B(inst.order[pairs[k].first], inst.order[pairs[k].second]) = random_weight(rng, range);
  }
  return inst;
}

Tensor propagate(const ScmInstance& inst, const Tensor& u) {
  if (u.rank() != 2 || u.cols() != inst.n) throw DimensionError("propagate: noise must be [N x n]");
  Tensor x(u.shape());
  for (std::size_t r = 0; r < u.rows(); ++r) {
    for (std::size_t j : inst.order) {
      Real v = inst.lambda[j] * u(r, j);
      for (std::size_t i = 0; i < inst.n; ++i)
        if (inst.B(i, j) != 0.0) v += inst.B(i, j) * x(r, i);
      x(r, j) = v;
    }
  }
  return x;
}

Tensor sample_scm(const ScmInstance& inst, std::size_t samples, Rng& rng) {
  if (samples < 1) throw ParameterError("sample_scm: need at least one sample");
  Tensor u({samples, inst.n});
  const Real sd = std::sqrt(inst.sigma2);
  for (Real& v : u.data()) v = sd * rng.normal();
  return propagate(inst, u);
}

Tensor closed_form_cov(const ScmInstance& inst) {
  Tensor i_minus_b = Tensor::identity(inst.n);
  for (std::size_t k = 0; k < i_minus_b.size(); ++k) i_minus_b[k] -= inst.B[k];
  Tensor t;
  try {
    t = inverse(i_minus_b);
  } catch (const NumericError&) {
    throw ContractError("closed_form_cov: I - B is singular");
  }
  for (std::size_t i = 0; i < inst.n; ++i)
    for (std::size_t j = 0; j < inst.n; ++j) t(i, j) *= inst.lambda[i];
  return scaled(matmul(t.transposed(), t), inst.sigma2);
}

CovarianceSample empirical_cov(const Tensor& data, bool center) {
  if (data.rank() != 2 || data.rows() < 2) throw ContractError("empirical_cov: need at least two samples");
  const Tensor x = center ? centered(data) : data;
  const std::size_t rows = x.rows(), n = x.cols();
  CovarianceSample out;
  out.samples = rows;
  out.cov = Tensor::zeros({n, n});
  out.std_error = Tensor::zeros({n, n});
  const Real denom = static_cast<Real>(center ? rows - 1 : rows);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      Real s = 0.0, s2 = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        const Real p = x(r, i) * x(r, j);
        s += p;
        s2 += p * p;
      }
      const Real mean = s / static_cast<Real>(rows);
      const Real var = std::max(0.0, s2 / static_cast<Real>(rows) - mean * mean);
      out.cov(i, j) = out.cov(j, i) = s / denom;
      out.std_error(i, j) = out.std_error(j, i) = std::sqrt(var / static_cast<Real>(rows));
    }
  }
  return out;
}

CovCheckReport compare_cov(const CovarianceSample& emp, const Tensor& expected, Real k) {
  require_same_shape(emp.cov, expected, "compare_cov");
  CovCheckReport rep;
  rep.empirical = emp.cov;
  rep.expected = expected;
  rep.z_scores = Tensor::zeros(expected.shape());
  const std::size_t n = expected.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const Real err = std::abs(emp.cov(i, j) - expected(i, j));
      const Real se = emp.std_error(i, j);
      const Real z = se > 0.0 ? err / se : (err == 0.0 ? 0.0 : std::numeric_limits<Real>::infinity());
      rep.z_scores(i, j) = rep.z_scores(j, i) = z;
      ++rep.entries;
      rep.within += z <= k;
      rep.max_z = std::max(rep.max_z, z);
      rep.max_abs_error = std::max(rep.max_abs_error, err);
    }
  }
  return rep;
}

AttentionCovReport attention_cov_check(const Tensor& a, const Tensor& v_samples, const Tensor& cov_v, Real k) {
  require_square(a, "attention_cov_check");
  if (v_samples.rank() != 2 || v_samples.cols() != a.rows())
    throw DimensionError("attention_cov_check: samples must be [N x n]");
  require_same_shape(a, cov_v, "attention_cov_check");
  const Tensor z = matmul(v_samples, a.transposed());
  const CovarianceSample cz = empirical_cov(z);
  AttentionCovReport rep;
  rep.check = compare_cov(cz, matmul(matmul(a, cov_v), a.transposed()), k);
  const Tensor via_v = matmul(matmul(a, empirical_cov(v_samples).cov), a.transposed());
  rep.exact_residual = max_abs_diff(cz.cov, via_v);
  return rep;
}

std::vector<Tensor> enumerate_dags(std::size_t n) {
  if (n < 1 || n > 5) throw ParameterError("enumerate_dags: n must be in 1..5");
  std::vector<std::pair<std::size_t, std::size_t>> slots;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) slots.emplace_back(i, j);
  // Each unordered pair is absent, i -> j or j -> i.
  std::size_t total = 1;
  for (std::size_t s = 0; s < slots.size(); ++s) total *= 3;
  std::vector<Tensor> out;
  for (std::size_t code = 0; code < total; ++code) {
    Tensor t = Tensor::zeros({n, n});
    std::size_t c = code;
    for (const auto& [i, j] : slots) {
      const std::size_t d = c % 3;
      c /= 3;
      if (d == 1) t(i, j) = 1.0;
      if (d == 2) t(j, i) = 1.0;
    }
    if (support_acyclic(t)) out.push_back(std::move(t));
  }
  return out;
}

std::size_t shd(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "shd");
  const std::size_t n = a.rows();
  std::size_t d = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool aij = a(i, j) != 0.0, aji = a(j, i) != 0.0;
      const bool bij = b(i, j) != 0.0, bji = b(j, i) != 0.0;
      d += (aij != bij) || (aji != bji);
    }
  return d;
}

Real equal_variance_score(const Tensor& cov, std::size_t samples, const Tensor& support, bool bic) {
  require_same_shape(cov, support, "equal_variance_score");
  const std::size_t n = cov.rows();
  Real rss = 0.0;
  std::size_t edges = 0;
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<std::size_t> parents;
    for (std::size_t i = 0; i < n; ++i)
      if (support(i, j) != 0.0) parents.push_back(i);
    edges += parents.size();
    Real r = cov(j, j);
    if (!parents.empty()) {
      Tensor spp({parents.size(), parents.size()});
      std::vector<Real> spj(parents.size());
      for (std::size_t a = 0; a < parents.size(); ++a) {
        spj[a] = cov(parents[a], j);
        for (std::size_t b = 0; b < parents.size(); ++b) spp(a, b) = cov(parents[a], parents[b]);
      }
      const std::vector<Real> beta = cholesky_solve(spp, spj);
      for (std::size_t a = 0; a < parents.size(); ++a) r -= beta[a] * spj[a];
    }
    rss += std::max(r, std::numeric_limits<Real>::min());
  }
  const Real nn = static_cast<Real>(samples) * static_cast<Real>(n);
  Real score = -0.5 * nn * std::log(rss / static_cast<Real>(n));
  if (bic) score -= 0.5 * std::log(static_cast<Real>(samples)) * static_cast<Real>(edges);
  return score;
}

IdentifiabilityResult brute_force_identify_cov(const Tensor& cov, std::size_t samples, const Tensor& truth, bool bic) {
  require_square(cov, "brute_force_identify");
  require_same_shape(cov, truth, "brute_force_identify");
  if (cov.rows() > 4) throw ParameterError("brute_force_identify: exhaustive search is limited to n <= 4");
  IdentifiabilityResult res;
  res.truth = truth;
  for (Tensor& dag : enumerate_dags(cov.rows())) {
    const Real s = equal_variance_score(cov, samples, dag, bic);
    res.scores.push_back({std::move(dag), s});
  }
  std::stable_sort(res.scores.begin(), res.scores.end(),
                   [](const CandidateScore& a, const CandidateScore& b) { return a.score > b.score; });
  res.recovered = res.scores.front().support;
  res.shd = shd(res.recovered, truth);
  return res;
}

IdentifiabilityResult brute_force_identify(const Tensor& data, const Tensor& truth, bool bic) {
  if (data.rank() != 2 || data.cols() != truth.rows()) throw DimensionError("brute_force_identify: data must be [N x n]");
  return brute_force_identify_cov(empirical_cov(data).cov, data.rows(), truth, bic);
}

ScmInstance nonidentifiable_pair() {
  ScmInstance inst;
  inst.n = 2;
  inst.B = Tensor::from_rows({{0.0, 0.6}, {0.0, 0.0}});
  inst.lambda = {1.0, 0.8};
  inst.order = {0, 1};
  return inst;
}

namespace {

struct Smooth {
  const Tensor& s;  // second-moment matrix of the centered data
  Real rho;
  Real beta;

  // 0.5 tr((I - W)^T S (I - W)) + rho/2 h^2 + beta h, and its gradient.
  Real value(const Tensor& w, Tensor* grad) const {
    const std::size_t n = w.rows();
    Tensor r = Tensor::identity(n);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] -= w[k];
    const Tensor sr = matmul(s, r);
    Real ls = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) ls += r[k] * sr[k];
    Real h = 0.0;
    try {
      h = causal::acyclicity_penalty(w);
    } catch (const NumericError&) {
      // Backtracking probes far-off points; treat overflow as an infinite objective.
      if (grad) throw;
      return std::numeric_limits<Real>::infinity();
    }
    if (grad) {
      const Tensor gh = causal::acyclicity_gradient(w);
      *grad = Tensor(w.shape());
      for (std::size_t k = 0; k < w.size(); ++k) (*grad)[k] = -sr[k] + (rho * h + beta) * gh[k];
    }
    return 0.5 * ls + 0.5 * rho * h * h + beta * h;
  }
};

Tensor soft_threshold(const Tensor& w, Real t) {
  Tensor out(w.shape());
  const std::size_t n = w.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const Real v = w(i, j);
      out(i, j) = v > t ? v - t : (v < -t ? v + t : 0.0);
    }
  return out;
}

Real l1(const Tensor& w) {
  Real s = 0.0;
  for (Real v : w.data()) s += std::abs(v);
  return s;
}

Real frob(const Tensor& w) {
  Real s = 0.0;
  for (Real v : w.data()) s += v * v;
  return std::sqrt(s);
}

// Accelerated proximal gradient with backtracking and function-value restart.
Tensor inner_solve(const Smooth& f, Tensor w, Real lambda, const NotearsConfig& cfg) {
  Tensor y = w;
  Real t_mom = 1.0;
  Real step = 1.0;
  Real obj = f.value(w, nullptr) + lambda * l1(w);
  for (std::size_t it = 0; it < cfg.max_inner; ++it) {
    Tensor g;
    const Real fy = f.value(y, &g);
    Tensor next;
    Real f_next = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      Tensor trial(y.shape());
      for (std::size_t k = 0; k < y.size(); ++k) trial[k] = y[k] - step * g[k];
      next = soft_threshold(trial, step * lambda);
      Real lin = 0.0, quad = 0.0;
      for (std::size_t k = 0; k < y.size(); ++k) {
        const Real d = next[k] - y[k];
        lin += g[k] * d;
        quad += d * d;
      }
      f_next = f.value(next, nullptr);
      if (f_next <= fy + lin + quad / (2.0 * step) + 1e-15 * std::abs(fy)) break;
      step *= 0.5;
    }
    const Real next_obj = f_next + lambda * l1(next);
    Tensor diff(w.shape());
    for (std::size_t k = 0; k < w.size(); ++k) diff[k] = next[k] - w[k];
    const Real moved = frob(diff);
    if (next_obj > obj) {
      // Restart momentum from the last accepted point.
      y = w;
      t_mom = 1.0;
      continue;
    }
    const Real t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
    y = Tensor(w.shape());
    for (std::size_t k = 0; k < w.size(); ++k) y[k] = next[k] + (t_mom - 1.0) / t_next * diff[k];
    t_mom = t_next;
    w = std::move(next);
    obj = next_obj;
    step *= 2.0;
    if (moved <= cfg.inner_tol * std::max(1.0, frob(w))) break;
  }
  return w;
}

}  // namespace

NotearsResult notears_recover(const Tensor& data, const NotearsConfig& cfg) {
  if (data.rank() != 2 || data.rows() < 2 || data.cols() < 2)
    throw ContractError("notears_recover: need an [N x n] matrix with N, n >= 2");
  if (!(cfg.threshold > 0.0) || !(cfg.lambda_l1 >= 0.0)) throw ParameterError("notears_recover: bad configuration");
  const std::size_t n = data.cols();
  const Tensor x = centered(data);
  Tensor s = matmul(x.transposed(), x);
  s = scaled(s, 1.0 / static_cast<Real>(x.rows()));

  causal::CausalState state = causal::CausalState::initial(n);
  state.rho_max = cfg.rho_max;
  NotearsResult res;
  Tensor w = Tensor::zeros({n, n});
  Real h = 0.0;
  for (std::size_t round = 0; round < cfg.max_rounds; ++round) {
    w = inner_solve(Smooth{s, state.rho, state.beta_mult}, std::move(w), cfg.lambda_l1, cfg);
    h = causal::acyclicity_penalty(w);
    res.rounds = round + 1;
    if (h <= cfg.h_tol) break;
    if (state.rho >= cfg.rho_max) break;
    const Real hv[] = {h};
    state = causal::update_multipliers(state, hv);
  }
  res.W = w;
  res.h_final = h;
  res.converged = h <= cfg.h_tol;

  res.support = Tensor::zeros({n, n});
  std::vector<std::pair<Real, std::size_t>> kept;
  for (std::size_t k = 0; k < w.size(); ++k)
    if (std::abs(w[k]) > cfg.threshold) {
      res.support[k] = 1.0;
      kept.emplace_back(std::abs(w[k]), k);
    }
  std::sort(kept.begin(), kept.end());
  for (const auto& [mag, k] : kept) {
    if (support_acyclic(res.support)) break;
    res.support[k] = 0.0;
    ++res.pruned;
  }
  return res;
}

CovTrial run_cov_trial(std::uint64_t seed, std::size_t n, std::size_t samples, Real k) {
  Rng rng(derive_seed(seed, "scmlab"));
  const ScmInstance inst = generate_random_dag(n, 0.5, rng);
  CovTrial t;
  t.scm = compare_cov(empirical_cov(sample_scm(inst, samples, rng)), closed_form_cov(inst), k);
  Tensor a({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    Real row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += a(i, j) = rng.uniform(0.05, 1.0);
    for (std::size_t j = 0; j < n; ++j) a(i, j) /= row;
  }
  t.attention = attention_cov_check(a, sample_scm(inst, samples, rng), closed_form_cov(inst), k);
  return t;
}

IdentifiabilityResult run_identify_trial(std::uint64_t seed, std::size_t n, std::size_t samples) {
  Rng rng(derive_seed(seed, "scmlab"));
  const ScmInstance inst = generate_random_dag(n, 0.5, rng);
  return brute_force_identify(sample_scm(inst, samples, rng), inst.support());
}

TrialRow run_notears_trial(std::uint64_t seed, std::size_t n, std::size_t edges, std::size_t samples,
                           const NotearsConfig& cfg) {
  Rng rng(derive_seed(seed, "scmlab"));
  const ScmInstance inst = generate_dag_with_edges(n, edges, rng);
  const NotearsResult r = notears_recover(sample_scm(inst, samples, rng), cfg);
  return {seed, n, shd(r.support, inst.support()), r.h_final, r.converged};
}

std::string trial_csv_header() { return "seed,n,shd,h_final,converged"; }

std::string to_csv(const TrialRow& row) {
  return std::to_string(row.seed) + "," + std::to_string(row.n) + "," + std::to_string(row.shd) + "," +
         fmt(row.h_final) + "," + (row.converged ? "1" : "0");
}

void write_graph(std::ostream& os, const Tensor& weights, const Tensor& support) {
  require_same_shape(weights, support, "write_graph");
  const auto old = os.precision(std::numeric_limits<Real>::max_digits10);
  for (std::size_t i = 0; i < support.rows(); ++i)
    for (std::size_t j = 0; j < support.cols(); ++j)
      if (support(i, j) != 0.0) os << i << ' ' << j << ' ' << weights(i, j) << '\n';
  os.precision(old);
}

}  // namespace causalrec::scm
