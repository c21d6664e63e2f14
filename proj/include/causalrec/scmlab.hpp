#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "causalrec/rng.hpp"
#include "causalrec/tensor.hpp"

namespace causalrec::scm {

/// Linear SCM with Gaussian noise. B(i, j) is the weight of edge i -> j and
/// each variable is x_j = sum_i B(i, j) x_i + lambda_j u_j, u_j ~ N(0, sigma2).
/// Samples are rows, so a batch satisfies X = X B + U diag(lambda).
struct ScmInstance {
  std::size_t n = 0;
  Tensor B;
  std::vector<Real> lambda;
  Real sigma2 = 1.0;
  std::vector<std::size_t> order;  // topological order

  Tensor support() const;
  std::size_t edge_count() const;
};

struct WeightRange {
  Real lo = 0.5;
  Real hi = 2.0;
};

/// Random permutation order; each forward pair gets an edge with probability
/// edge_prob and a weight of random sign with magnitude in the range.
ScmInstance generate_random_dag(std::size_t n, Real edge_prob, Rng& rng, WeightRange range = {});
/// Same, but with exactly `edges` forward pairs chosen uniformly.
ScmInstance generate_dag_with_edges(std::size_t n, std::size_t edges, Rng& rng, WeightRange range = {});

/// X from a given noise matrix U [N x n] by forward substitution in
/// topological order.
Tensor propagate(const ScmInstance& inst, const Tensor& u);
// Draws U ~ N(0, sigma2) and propagates it.
Tensor sample_scm(const ScmInstance& inst, std::size_t samples, Rng& rng);

/// sigma2 * T^T T with T = diag(lambda) (I - B)^-1.
Tensor closed_form_cov(const ScmInstance& inst);

/// Sample covariance and the Monte-Carlo standard error of every entry.
struct CovarianceSample {
  Tensor cov;
  Tensor std_error;
  std::size_t samples = 0;
};
// Columns are variables. With `centered` the column means are removed first.
CovarianceSample empirical_cov(const Tensor& data, bool centered = true);

struct CovCheckReport {
  Tensor empirical;
  Tensor expected;
  Tensor z_scores;  // |empirical - expected| / std_error
  std::size_t entries = 0;
  std::size_t within = 0;  // entries with z <= k
  Real max_z = 0.0;
  Real max_abs_error = 0.0;

  Real fraction_within() const { return entries ? static_cast<Real>(within) / static_cast<Real>(entries) : 1.0; }
};

CovCheckReport compare_cov(const CovarianceSample& emp, const Tensor& expected, Real k = 5.0);

/// Z = A V for each sample (rows of v_samples are V vectors). Compares the
/// empirical Cov(Z) with A cov_v A^T. `exact_residual` is the largest gap
/// between Cov(Z) and A Cov_emp(V) A^T, which is zero up to rounding.
struct AttentionCovReport {
  CovCheckReport check;
  Real exact_residual = 0.0;
};
AttentionCovReport attention_cov_check(const Tensor& a, const Tensor& v_samples, const Tensor& cov_v, Real k = 5.0);

/// Every DAG on n labelled nodes as a 0/1 support (25 for n = 3, 543 for n = 4).
std::vector<Tensor> enumerate_dags(std::size_t n);

// Edge additions, deletions and reversals needed to turn one support into the other.
std::size_t shd(const Tensor& a, const Tensor& b);

struct CandidateScore {
  Tensor support;
  Real score = 0.0;  // higher is better
};

struct IdentifiabilityResult {
  Tensor truth;
  Tensor recovered;
  std::size_t shd = 0;
  std::vector<CandidateScore> scores;  // best first
};

/// Equal-variance Gaussian profile log-likelihood of a DAG given second
/// moments `cov` over `samples` rows: -N n / 2 * log(sum_j RSS_j / (N n)),
/// RSS_j from the least-squares fit of x_j on its parents, minus a BIC
/// penalty of log(N) / 2 per edge.
Real equal_variance_score(const Tensor& cov, std::size_t samples, const Tensor& support, bool bic = true);

IdentifiabilityResult brute_force_identify_cov(const Tensor& cov, std::size_t samples, const Tensor& truth,
                                               bool bic = true);
// Centers the data and scores every DAG on its covariance. Requires n <= 4.
IdentifiabilityResult brute_force_identify(const Tensor& data, const Tensor& truth, bool bic = true);

/// Two-node edge with unequal noise (lambda = 1, 0.8; weight 0.6) whose
/// variables have equal marginal variance, so both orientations explain the
/// covariance equally well.
ScmInstance nonidentifiable_pair();

struct NotearsConfig {
  Real lambda_l1 = 0.1;
  Real threshold = 0.3;
  Real h_tol = 1e-8;
  Real rho_max = 1e16;
  std::size_t max_rounds = 100;
  std::size_t max_inner = 5000;
  Real inner_tol = 1e-10;
};

struct NotearsResult {
  Tensor W;        // continuous estimate
  Tensor support;  // thresholded, acyclic
  Real h_final = 0.0;
  bool converged = false;
  std::size_t rounds = 0;
  std::size_t pruned = 0;  // edges dropped after thresholding to break a cycle
};

/// min 1/(2N) ||X - X W||^2 + lambda ||W||_1 s.t. h(W) = 0, solved with the
/// augmented-Lagrangian multiplier rule of the causal module and an
/// accelerated proximal-gradient inner loop. Data are centered first.
NotearsResult notears_recover(const Tensor& data, const NotearsConfig& cfg = {});

struct TrialRow {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::size_t shd = 0;
  Real h_final = 0.0;
  bool converged = false;
};
std::string trial_csv_header();
std::string to_csv(const TrialRow& row);

// Seeded trials shared by the command line and the acceptance checks. Each
// trial draws from Rng(derive_seed(seed, "scmlab")).

struct CovTrial {
  CovCheckReport scm;            // empirical vs closed-form covariance
  AttentionCovReport attention;  // Cov(A V) vs A Cov(V) A^T, V drawn from the same SCM
};
CovTrial run_cov_trial(std::uint64_t seed, std::size_t n, std::size_t samples, Real k = 5.0);

// Random DAG with edge probability 1/2 and unit noise; brute-force recovery.
IdentifiabilityResult run_identify_trial(std::uint64_t seed, std::size_t n, std::size_t samples);

TrialRow run_notears_trial(std::uint64_t seed, std::size_t n, std::size_t edges, std::size_t samples,
                           const NotearsConfig& cfg = {});

// "i j weight" per edge of the support.
void write_graph(std::ostream& os, const Tensor& weights, const Tensor& support);

}  // namespace causalrec::scm
