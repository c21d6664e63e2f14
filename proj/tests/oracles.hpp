#pragma once

// Test-only reference implementations. Nothing here calls into the code path
// it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "causalrec/autograd.hpp"
#include "causalrec/rng.hpp"
#include "causalrec/tensor.hpp"

namespace oracle {

using causalrec::Real;
using causalrec::Tape;
using causalrec::Tensor;
using causalrec::Var;

using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline Tensor random_tensor(causalrec::Shape shape, causalrec::Rng& rng, Real lo = -1.0, Real hi = 1.0) {
  Tensor t(std::move(shape));
  for (Real& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline Real evaluate(const LossFn& f, std::vector<Tensor> inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (Tensor& t : inputs) vars.push_back(tape.constant(t));
  return f(tape, vars).value().item();
}

/// Relative error between the tape's gradient and central finite
/// differences, ||g_a - g_fd|| / max(||g_a||, ||g_fd||), pooled over all
/// inputs. Returns 0 when both gradients vanish.
inline Real gradcheck(const LossFn& f, std::vector<Tensor> inputs, Real step = 1e-4) {
  for (Tensor& t : inputs) t.set_requires_grad(true);
  {
    Tape tape;
    std::vector<Var> vars;
    for (Tensor& t : inputs) vars.push_back(tape.parameter(t));
    tape.backward(f(tape, vars));
  }
  Real diff2 = 0.0, an2 = 0.0, fd2 = 0.0;
  std::vector<Tensor> plain;
  for (const Tensor& t : inputs) plain.emplace_back(t.shape(), std::vector<Real>(t.data().begin(), t.data().end()));
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < plain[k].size(); ++i) {
      const Real orig = plain[k][i];
      plain[k][i] = orig + step;
      const Real up = evaluate(f, plain);
      plain[k][i] = orig - step;
      const Real down = evaluate(f, plain);
      plain[k][i] = orig;
      const Real fd = (up - down) / (2.0 * step);
      const Real an = inputs[k].grad()[i];
      diff2 += (an - fd) * (an - fd);
      an2 += an * an;
      fd2 += fd * fd;
    }
  }
  const Real denom = std::sqrt(std::max(an2, fd2));
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff2) / denom;
}

/// True iff the directed graph given by adjacency (i -> j when adj(i, j) != 0,
/// diagonal counts as a self-loop) has no directed cycle. Kahn's algorithm.
inline bool is_acyclic(const Tensor& adj) {
  const std::size_t n = adj.rows();
  std::vector<int> indeg(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (adj(i, j) != 0.0) ++indeg[j];
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < n; ++i)
    if (indeg[i] == 0) stack.push_back(i);
  std::size_t seen = 0;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    ++seen;
    for (std::size_t v = 0; v < n; ++v)
      if (adj(u, v) != 0.0 && --indeg[v] == 0) stack.push_back(v);
  }
  return seen == n;
}

/// Every off-diagonal support pattern on n nodes, as 0/1 matrices.
inline std::vector<Tensor> all_supports(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> slots;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) slots.emplace_back(i, j);
  std::vector<Tensor> out;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << slots.size()); ++mask) {
    Tensor t = Tensor::zeros({n, n});
    for (std::size_t b = 0; b < slots.size(); ++b)
      if (mask >> b & 1) t(slots[b].first, slots[b].second) = 1.0;
    out.push_back(std::move(t));
  }
  return out;
}

/// Rank of the ground truth by fully sorting all candidate scores with the
/// ground truth placed after every tied negative (pessimistic ties).
inline int sort_rank(Real gt, const std::vector<Real>& negatives) {
  std::vector<std::pair<Real, int>> all;
  for (Real s : negatives) all.emplace_back(s, 0);
  all.emplace_back(gt, 1);
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; i < all.size(); ++i)
    if (all[i].second == 1) return static_cast<int>(i) + 1;
  return -1;
}

}  // namespace oracle
