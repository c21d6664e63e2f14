#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <cmath>
#include <limits>

#include "causalrec/autograd.hpp"
#include "causalrec/causal.hpp"
#include "causalrec/linalg.hpp"
#include "oracles.hpp"

using namespace causalrec;

namespace {

constexpr Real kInf = std::numeric_limits<Real>::infinity();

Tensor eval_op(const Tensor& x, const std::function<Var(const Var&)>& op) {
  Tape tape;
  return op(tape.constant(x)).value();
}

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t(i, j);
  return m;
}

}  // namespace

TEST(Tensor, ShapeInvariants) {
  EXPECT_THROW(Tensor({2, 0}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<Real>{1, 2, 3}), DimensionError);
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_THROW(t.grad(), ContractError);
  t.set_requires_grad(true);
  EXPECT_EQ(t.grad().size(), t.size());
}

TEST(Matmul, IdentityAndHandArithmetic) {
  const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(Tensor::identity(2), a), a);
  const Tensor r = matmul(Tensor::from_rows({{1, 2}}), Tensor::from_rows({{3}, {4}}));
  EXPECT_EQ(r.item(), 11.0);
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST(Matmul, SumGradientIsOnesTimesBTranspose) {
  Rng rng(11);
  Tensor a = oracle::random_tensor({4, 3}, rng);
  const Tensor b = oracle::random_tensor({3, 5}, rng);
  a.set_requires_grad(true);
  Tape tape;
  tape.backward(sum(matmul(tape.parameter(a), tape.constant(b))));
  const Tensor expected = matmul(Tensor::ones({4, 5}), b.transposed());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.grad()[i], expected[i], 1e-12);

  const Real rel = oracle::gradcheck(
      [&](Tape& t, const std::vector<Var>& v) { return sum(matmul(v[0], t.constant(b))); }, {a});
  EXPECT_LT(rel, 1e-4);
}

TEST(Softmax, ExamplesAndMasking) {
  const auto sm = [](const Var& v) { return softmax_rows(v); };
  Tensor uniform = eval_op(Tensor::from_rows({{0, 0, 0}}), sm);
  for (Real v : uniform.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);

  Tensor masked = eval_op(Tensor::from_rows({{-kInf, 0}}), sm);
  EXPECT_EQ(masked[0], 0.0);
  EXPECT_EQ(masked[1], 1.0);

  Tensor direct = eval_op(Tensor::from_rows({{1, 2, 3}}), sm);
  EXPECT_NEAR(direct[0], 0.09003, 1e-5);
  EXPECT_NEAR(direct[1], 0.24473, 1e-5);
  EXPECT_NEAR(direct[2], 0.66524, 1e-5);

  Tensor dead = eval_op(Tensor::from_rows({{-kInf, -kInf}, {2, -kInf}}), sm);
  EXPECT_EQ(dead[0], 0.0);
  EXPECT_EQ(dead[1], 0.0);
  EXPECT_EQ(dead[2], 1.0);

  EXPECT_THROW(eval_op(Tensor::from_rows({{std::nan(""), 0}}), sm), NumericError);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = oracle::random_tensor({5, 7}, rng, -20, 20);
    for (Real& v : x.data())
      if (rng.bernoulli(0.2)) v = -kInf;
    const Tensor y = eval_op(x, [](const Var& v) { return softmax_rows(v); });
    for (std::size_t i = 0; i < 5; ++i) {
      Real s = 0.0;
      bool any = false;
      for (std::size_t j = 0; j < 7; ++j) {
        EXPECT_GE(y(i, j), 0.0);
        s += y(i, j);
        any = any || x(i, j) != -kInf;
      }
      if (any) {
        EXPECT_NEAR(s, 1.0, 1e-6);
      } else {
        EXPECT_EQ(s, 0.0);
      }
    }
  }
}

TEST(LayerNorm, Examples) {
  auto ln = [](const Tensor& x, const Tensor& g, const Tensor& b, Real eps) {
    Tape t;
    return layer_norm(t.constant(x), t.constant(g), t.constant(b), eps).value();
  };
  const Tensor flat = ln(Tensor::from_rows({{1, 1, 1, 1}}), Tensor::ones({4}), Tensor::zeros({4}), 1e-8);
  for (Real v : flat.data()) EXPECT_EQ(v, 0.0);

  const Tensor unit = ln(Tensor::vector({-1, 1}), Tensor::ones({2}), Tensor::zeros({2}), 1e-14);
  EXPECT_NEAR(unit[0], -1.0, 1e-6);
  EXPECT_NEAR(unit[1], 1.0, 1e-6);

  const Tensor affine = ln(Tensor::vector({0, 2}), Tensor::vector({2, 2}), Tensor::vector({1, 1}), 1e-14);
  EXPECT_NEAR(affine[0], -1.0, 1e-6);
  EXPECT_NEAR(affine[1], 3.0, 1e-6);

  EXPECT_THROW(ln(Tensor::from_rows({{1}, {2}}), Tensor::ones({1}), Tensor::zeros({1}), 1e-8), ContractError);
}

TEST(LayerNorm, NormalizedMoments) {
  Rng rng(5);
  const Tensor x = oracle::random_tensor({6, 16}, rng, -3, 5);
  Tape t;
  const Tensor y = layer_norm(t.constant(x), t.constant(Tensor::ones({16})), t.constant(Tensor::zeros({16}))).value();
  for (std::size_t r = 0; r < 6; ++r) {
    Real mean = 0.0, var = 0.0;
    for (Real v : y.row(r)) mean += v;
    mean /= 16;
    for (Real v : y.row(r)) var += (v - mean) * (v - mean);
    var /= 16;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
}

TEST(Dropout, IdentityCasesAndInvertedScaling) {
  Rng rng(1);
  const Tensor x = oracle::random_tensor({3, 4}, rng);
  Tape t;
  const Var vx = t.constant(x);
  EXPECT_EQ(dropout(vx, 0.0, true, rng).value(), x);
  EXPECT_EQ(dropout(vx, 0.7, false, rng).value(), x);
  EXPECT_THROW(dropout(vx, 1.0, true, rng), ParameterError);

  const Tensor big = Tensor::ones({100000});
  const Tensor y = dropout(t.constant(big), 0.5, true, rng).value();
  Real mean = 0.0;
  for (Real v : y.data()) mean += v;
  mean /= static_cast<Real>(y.size());
  EXPECT_GE(mean, 0.98);
  EXPECT_LE(mean, 1.02);
}

TEST(Expm, ClosedForms) {
  EXPECT_EQ(expm(Tensor::zeros({3, 3})), Tensor::identity(3));
  EXPECT_EQ(expm(Tensor::from_rows({{0, 1}, {0, 0}})), Tensor::from_rows({{1, 1}, {0, 1}}));
  const Tensor e = expm(Tensor::from_rows({{0, 1}, {1, 0}}));
  EXPECT_NEAR(e(0, 0), std::cosh(1.0), 1e-6);
  EXPECT_NEAR(e(0, 1), std::sinh(1.0), 1e-6);
  EXPECT_NEAR(e(1, 0), std::sinh(1.0), 1e-6);
  EXPECT_NEAR(e(1, 1), std::cosh(1.0), 1e-6);
  EXPECT_THROW(expm(Tensor({2, 3})), DimensionError);
  EXPECT_THROW(expm(Tensor::from_rows({{1e6, 0}, {0, 1e6}})), NumericError);
}

TEST(Expm, MatchesEigenOnRandomMatrices) {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 7);
    const Tensor m = oracle::random_tensor({n, n}, rng, -3, 3);
    const Eigen::MatrixXd ref = to_eigen(m).exp();
    const Tensor got = expm(m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(got(i, j), ref(i, j), 1e-9 * (1.0 + std::abs(ref(i, j))));
  }
}

TEST(Expm, InverseProperty) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor m = oracle::random_tensor({5, 5}, rng);
    m = scaled(m, 2.0 / std::max(norm1(m), 1e-12));  // ||M||_1 = 2
    const Tensor prod = matmul(expm(m), expm(scaled(m, -1.0)));
    EXPECT_LT(max_abs_diff(prod, Tensor::identity(5)), 1e-5);
  }
}

TEST(Tape, BackwardContract) {
  Tensor x = Tensor::from_rows({{1, 2}, {3, 4}});
  x.set_requires_grad(true);
  Tape tape;
  const Var vx = tape.parameter(x);
  EXPECT_THROW(tape.backward(vx), ContractError);  // non-scalar
  const Var loss = sum(vx);
  tape.backward(loss);
  for (Real g : x.grad()) EXPECT_EQ(g, 1.0);
  EXPECT_THROW(tape.backward(loss), ContractError);
}

TEST(Tape, VisitsNodesInReverseOrder) {
  Tensor x = Tensor::vector({0.5, -1.0, 2.0});
  x.set_requires_grad(true);
  Tape tape;
  const Var a = tape.parameter(x);
  const Var b = scale(a, 2.0);
  const Var c = relu(b);
  const Var loss = sum(c);
  tape.backward(loss);
  const std::vector<std::size_t> expected{loss.id(), c.id(), b.id(), a.id()};
  EXPECT_EQ(tape.backward_order(), expected);
}

TEST(AcyclicityGradient, ZeroAtOriginAndFiniteDifferences) {
  Tensor w0 = Tensor::zeros({4, 4});
  w0.set_requires_grad(true);
  {
    Tape tape;
    tape.backward(causal::acyclicity_penalty(tape.parameter(w0)));
  }
  for (Real g : w0.grad()) EXPECT_EQ(g, 0.0);

  Rng rng(44);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor w = oracle::random_tensor({4, 4}, rng, -0.5, 0.5);
    const Real rel = oracle::gradcheck(
        [](Tape&, const std::vector<Var>& v) { return causal::acyclicity_penalty(v[0]); }, {w});
    EXPECT_LT(rel, 1e-3);
    // Closed-form gradient agrees with the recorded op.
    const Tensor g = causal::acyclicity_gradient(w);
    Tensor wg = w;
    wg.set_requires_grad(true);
    Tape tape;
    tape.backward(causal::acyclicity_penalty(tape.parameter(wg)));
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], wg.grad()[i], 1e-12);
  }
}
