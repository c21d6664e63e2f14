#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "causalrec/causal.hpp"
#include "causalrec/errors.hpp"
#include "oracles.hpp"

using namespace causalrec;
using namespace causalrec::causal;

TEST(BatchCovariance, Examples) {
  std::vector<Tensor> zero{Tensor::zeros({3, 4}), Tensor::zeros({3, 4})};
  EXPECT_EQ(batch_covariance(zero).W, Tensor::zeros({3, 3}));

  std::vector<Tensor> one{Tensor::from_rows({{1}, {2}})};
  EXPECT_EQ(batch_covariance(one).W, Tensor::from_rows({{1, 2}, {2, 4}}));
  EXPECT_THROW(batch_covariance(one, true), ContractError);
  EXPECT_THROW(batch_covariance(std::span<const Tensor>{}), ContractError);
  std::vector<Tensor> mixed{Tensor::zeros({2, 3}), Tensor::zeros({3, 3})};
  EXPECT_THROW(batch_covariance(mixed), DimensionError);
}

TEST(BatchCovariance, IndependentUnitPositions) {
  Rng rng(1);
  std::vector<Tensor> reprs;
  for (int k = 0; k < 1000; ++k) {
    Tensor z({4, 1});
    for (Real& v : z.data()) v = rng.normal();
    reprs.push_back(std::move(z));
  }
  const Tensor w = batch_covariance(reprs).W;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(w(i, j), i == j ? 1.0 : 0.0, 0.1);
}

TEST(Acyclicity, Examples) {
  EXPECT_EQ(acyclicity_penalty(Tensor::zeros({3, 3})), 0.0);
  EXPECT_NEAR(acyclicity_penalty(Tensor::from_rows({{0, 1}, {0, 0}})), 0.0, 1e-15);
  EXPECT_NEAR(acyclicity_penalty(Tensor::from_rows({{0, 1}, {1, 0}})), 2.0 * std::cosh(1.0) - 2.0, 1e-12);
}

TEST(Acyclicity, MatchesCycleOracleOnRandomSupports) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor w = Tensor::zeros({5, 5});
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        if (i != j && rng.bernoulli(0.25)) w(i, j) = (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.1, 1.0);
    const Real h = acyclicity_penalty(w);
    if (oracle::is_acyclic(w)) EXPECT_LT(h, 1e-10);
    else EXPECT_GT(h, 1e-6);
  }
}

TEST(L1, Examples) {
  EXPECT_EQ(l1_penalty(Tensor::zeros({2, 2})), 0.0);
  EXPECT_EQ(l1_penalty(Tensor::from_rows({{0, -2}, {3, 0}})), 5.0);
}

TEST(DagLoss, Examples) {
  CausalState s = CausalState::initial(2);
  s.rho = 7.0;
  s.beta_mult = 3.0;
  const Real zeros[] = {0.0, 0.0};
  EXPECT_EQ(dag_loss(zeros, s), 0.0);
  s.rho = 2.0;
  s.beta_mult = 0.5;
  const Real one[] = {1.0};
  EXPECT_DOUBLE_EQ(dag_loss(one, s), 1.5);
  s.rho = 1.0;
  s.beta_mult = 0.0;
  const Real two[] = {0.0, 0.2};
  EXPECT_NEAR(dag_loss(two, s), 0.02, 1e-15);
}

TEST(RelationMatrix, Thresholds) {
  EXPECT_EQ(extract_relation_matrix(Tensor::zeros({3, 3}), 0.3), Tensor::zeros({3, 3}));
  const Tensor w = Tensor::from_rows({{0, 0.95, 0.5}, {0.05, 0, 0}, {0, 0, 0}});
  const Tensor r = extract_relation_matrix(w, 0.9);
  EXPECT_EQ(r, Tensor::from_rows({{0, 1, 0}, {0, 0, 0}, {0, 0, 0}}));
  EXPECT_THROW(extract_relation_matrix(w, 0.0), ParameterError);

  Rng rng(3);
  const Tensor rw = oracle::random_tensor({6, 6}, rng);
  const Tensor all = extract_relation_matrix(rw, 1e-12);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(all(i, j), i != j && rw(i, j) != 0.0 ? 1.0 : 0.0);
}

TEST(Multipliers, HandComputedRules) {
  CausalState s = CausalState::initial(2);
  const Real zero[] = {0.0};
  CausalState a = update_multipliers(s, zero);
  EXPECT_EQ(a.beta_mult, 0.0);
  EXPECT_EQ(a.rho, 10.0);

  const Real k03[] = {0.3};
  CausalState b = update_multipliers(s, k03);
  EXPECT_DOUBLE_EQ(b.beta_mult, 0.3);

  s.kappa_prev = 1.0;
  const Real k01[] = {0.1};
  CausalState c = update_multipliers(s, k01);
  EXPECT_EQ(c.rho, 1.0);
  EXPECT_EQ(c.kappa_prev, 0.1);

  s.rho = 1e16;
  s.kappa_prev = 0.0;
  EXPECT_EQ(update_multipliers(s, k03).rho, 1e16);
}

TEST(OffDiagonal, ClearsDiagonalOnly) {
  const Tensor w = Tensor::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(off_diagonal(w), Tensor::from_rows({{0, 2}, {3, 0}}));
}

TEST(MatrixIo, DenseRoundTripAndEdgeList) {
  Rng rng(4);
  const Tensor w = oracle::random_tensor({3, 3}, rng);
  std::stringstream ss;
  write_dense_matrix(ss, w);
  EXPECT_EQ(read_dense_matrix(ss), w);
  std::ostringstream edges;
  Tensor r = Tensor::zeros({3, 3});
  r(0, 2) = 1.0;
  write_edge_list(edges, w, r);
  std::istringstream in(edges.str());
  std::size_t i = 9, j = 9;
  Real v = 0.0;
  in >> i >> j >> v;
  EXPECT_EQ(i, 0u);
  EXPECT_EQ(j, 2u);
  EXPECT_EQ(v, w(0, 2));
}
