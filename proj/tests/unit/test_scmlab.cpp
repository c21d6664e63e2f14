#include <gtest/gtest.h>

#include <cmath>

#include "causalrec/causal.hpp"
#include "causalrec/errors.hpp"
#include "causalrec/scmlab.hpp"
#include "oracles.hpp"

using namespace causalrec;
using namespace causalrec::scm;

TEST(RandomDag, Examples) {
  Rng rng(1);
  EXPECT_EQ(generate_random_dag(4, 0.0, rng).B, Tensor::zeros({4, 4}));
  const ScmInstance full = generate_random_dag(3, 1.0, rng);
  EXPECT_EQ(full.edge_count(), 3u);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b <= a; ++b) EXPECT_EQ(full.B(full.order[a], full.order[b]), 0.0);
  for (int k = 0; k < 100; ++k) {
    const ScmInstance inst = generate_random_dag(6, 0.5, rng);
    EXPECT_TRUE(oracle::is_acyclic(inst.support()));
    EXPECT_LT(causal::acyclicity_penalty(inst.support()), 1e-12);
    for (Real v : inst.B.data())
      if (v != 0.0) {
        EXPECT_GE(std::abs(v), 0.5);
        EXPECT_LE(std::abs(v), 2.0);
      }
  }
  EXPECT_EQ(generate_dag_with_edges(5, 8, rng).edge_count(), 8u);
  EXPECT_THROW(generate_dag_with_edges(3, 4, rng), ParameterError);
  EXPECT_THROW(generate_random_dag(1, 0.5, rng), ParameterError);
}

TEST(SampleScm, NoEdgesGivesNoise) {
  ScmInstance inst;
  inst.n = 3;
  inst.B = Tensor::zeros({3, 3});
  inst.lambda = {1, 1, 1};
  inst.order = {2, 0, 1};
  Rng rng(2);
  const Tensor u = oracle::random_tensor({10, 3}, rng);
  EXPECT_EQ(propagate(inst, u), u);
}

TEST(SampleScm, MatchesDenseSolve) {
  Rng rng(3);
  for (std::size_t n : {2u, 5u, 10u}) {
    ScmInstance inst = generate_random_dag(n, 0.4, rng);
    for (Real& l : inst.lambda) l = rng.uniform(0.5, 1.5);
    const Tensor u = oracle::random_tensor({20, n}, rng);
    // Row form: X = U diag(lambda) (I - B)^-1, computed by Gaussian elimination.
    Tensor m = Tensor::identity(n);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] -= inst.B[k];
    Tensor ul = u;
    for (std::size_t r = 0; r < 20; ++r)
      for (std::size_t j = 0; j < n; ++j) ul(r, j) *= inst.lambda[j];
    // Solve X M = UL row by row via the transposed system.
    const Tensor mt = m.transposed();
    const Tensor x = propagate(inst, u);
    for (std::size_t r = 0; r < 20; ++r) {
      for (std::size_t i = 0; i < n; ++i) {
        Real s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += mt(i, j) * x(r, j);
        EXPECT_NEAR(s, ul(r, i), 1e-10);
      }
    }
  }
}

TEST(SampleScm, ChainVarianceAndDeterminism) {
  ScmInstance inst;
  inst.n = 2;
  inst.B = Tensor::from_rows({{0, 1.5}, {0, 0}});
  inst.lambda = {0.7, 1.2};
  inst.order = {0, 1};
  Rng a(4), b(4);
  const Tensor x = sample_scm(inst, 100000, a);
  EXPECT_EQ(x, sample_scm(inst, 100000, b));
  const Real expected = 1.5 * 1.5 * 0.49 + 1.44;
  EXPECT_NEAR(empirical_cov(x).cov(1, 1), expected, 0.05 * expected);
  const Tensor c = closed_form_cov(inst);
  EXPECT_NEAR(c(0, 0), 0.49, 1e-12);
  EXPECT_NEAR(c(0, 1), 1.5 * 0.49, 1e-12);
  EXPECT_NEAR(c(1, 1), expected, 1e-12);
}

TEST(ClosedFormCov, IdentityAndMonteCarlo) {
  ScmInstance id;
  id.n = 3;
  id.B = Tensor::zeros({3, 3});
  id.lambda = {1, 1, 1};
  id.order = {0, 1, 2};
  EXPECT_EQ(closed_form_cov(id), Tensor::identity(3));
  Rng rng(5);
  const ScmInstance inst = generate_random_dag(4, 0.6, rng);
  const auto rep = compare_cov(empirical_cov(sample_scm(inst, 100000, rng)), closed_form_cov(inst));
  EXPECT_GE(rep.fraction_within(), 0.99);
}

TEST(AttentionCov, Examples) {
  Rng rng(6);
  const Tensor v = oracle::random_tensor({5000, 3}, rng);
  const Tensor cov_v = scaled(Tensor::identity(3), 1.0 / 3.0);
  const auto same = attention_cov_check(Tensor::identity(3), v, cov_v);
  EXPECT_LT(max_abs_diff(same.check.empirical, empirical_cov(v).cov), 1e-15);

  const Tensor avg = Tensor(Shape{3, 3}, 1.0 / 3.0);
  const auto rep = attention_cov_check(avg, v, cov_v);
  const Tensor cv = empirical_cov(v).cov;
  Real grand = 0.0;
  for (Real x : cv.data()) grand += x;
  grand /= 9.0;
  for (Real x : rep.check.empirical.data()) EXPECT_NEAR(x, grand, 1e-12);
  EXPECT_LT(rep.exact_residual, 1e-12);
}

TEST(Dags, CountsAndShd) {
  EXPECT_EQ(enumerate_dags(2).size(), 3u);
  EXPECT_EQ(enumerate_dags(3).size(), 25u);
  EXPECT_EQ(enumerate_dags(4).size(), 543u);
  const Tensor a = Tensor::from_rows({{0, 1, 0}, {0, 0, 1}, {0, 0, 0}});
  EXPECT_EQ(shd(a, a), 0u);
  EXPECT_EQ(shd(a, a.transposed()), 2u);
  EXPECT_EQ(shd(a, Tensor::zeros({3, 3})), 2u);
}

TEST(BruteForce, EmptyGraphAndChain) {
  Rng rng(7);
  ScmInstance empty = generate_random_dag(3, 0.0, rng);
  const auto r0 = brute_force_identify(sample_scm(empty, 10000, rng), empty.support());
  EXPECT_EQ(r0.shd, 0u);
  EXPECT_EQ(r0.scores.size(), 25u);

  ScmInstance chain = generate_random_dag(3, 0.0, rng);
  chain.B(0, 1) = 1.0;
  chain.B(1, 2) = -0.8;
  chain.order = {0, 1, 2};
  const auto r1 = brute_force_identify(sample_scm(chain, 10000, rng), chain.support());
  EXPECT_EQ(r1.shd, 0u);
  EXPECT_THROW(brute_force_identify(Tensor::zeros({10, 5}), Tensor::zeros({5, 5})), ParameterError);
}

TEST(BruteForce, UnequalVarianceTie) {
  const ScmInstance pair = nonidentifiable_pair();
  const Tensor c = closed_form_cov(pair);
  EXPECT_NEAR(c(0, 0), c(1, 1), 1e-15);
  const Tensor fwd = Tensor::from_rows({{0, 1}, {0, 0}});
  EXPECT_NEAR(equal_variance_score(c, 10000, fwd), equal_variance_score(c, 10000, fwd.transposed()), 1e-9);
  EXPECT_GT(equal_variance_score(c, 10000, fwd), equal_variance_score(c, 10000, Tensor::zeros({2, 2})));
}

TEST(Notears, EmptyDataGivesEmptyGraph) {
  Rng rng(8);
  const ScmInstance empty = generate_random_dag(4, 0.0, rng);
  const auto r = notears_recover(sample_scm(empty, 5000, rng));
  EXPECT_EQ(r.support, Tensor::zeros({4, 4}));
  EXPECT_TRUE(r.converged);
  EXPECT_LT(causal::acyclicity_penalty(r.support), 1e-6);
}

TEST(Notears, RecoversSimpleChain) {
  Rng rng(9);
  ScmInstance chain = generate_random_dag(3, 0.0, rng);
  chain.B(2, 0) = 1.2;
  chain.B(0, 1) = -0.9;
  chain.order = {2, 0, 1};
  const auto r = notears_recover(sample_scm(chain, 10000, rng));
  EXPECT_EQ(shd(r.support, chain.support()), 0u);
  EXPECT_LT(r.h_final, 1e-4);
  EXPECT_EQ(trial_csv_header(), "seed,n,shd,h_final,converged");
  EXPECT_EQ(to_csv({3, 3, 0, 0.0, true}), "3,3,0,0,1");
}
