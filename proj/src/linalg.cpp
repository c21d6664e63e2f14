#include "causalrec/linalg.hpp"

#include <cmath>
#include <utility>

namespace causalrec {

namespace {

constexpr Real kScaledNormBound = 0.5;
constexpr int kMaxTaylorTerms = 40;

}  // namespace

int expm_squarings(const Tensor& m) {
  const Real norm = norm1(m);
  if (!std::isfinite(norm)) throw NumericError("expm: non-finite input");
  if (norm <= kScaledNormBound) return 0;
  return static_cast<int>(std::ceil(std::log2(norm / kScaledNormBound)));
}

Tensor expm(const Tensor& m) {
  require_square(m, "expm");
  const std::size_t n = m.rows();
  const int squarings = expm_squarings(m);
  const Tensor a = scaled(m, std::ldexp(1.0, -squarings));

  Tensor sum = Tensor::identity(n);
  Tensor term = Tensor::identity(n);
  for (int k = 1; k <= kMaxTaylorTerms; ++k) {
    term = scaled(matmul(term, a), 1.0 / k);
    const Real term_norm = max_abs(term);
    sum = add(sum, term);
    if (term_norm == 0.0 || term_norm <= 1e-18 * max_abs(sum)) break;
  }
  for (int s = 0; s < squarings; ++s) {
    sum = matmul(sum, sum);
    if (!sum.all_finite()) throw NumericError("expm: overflow during squaring");
  }
  if (!sum.all_finite()) throw NumericError("expm: non-finite result");
  return sum;
}

std::vector<Real> cholesky_solve(const Tensor& a, std::vector<Real> b) {
  require_square(a, "cholesky_solve");
  const std::size_t n = a.rows();
  if (b.size() != n) throw DimensionError("cholesky_solve: rhs length mismatch");
  Tensor l({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    Real d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) throw NumericError("cholesky_solve: matrix not positive definite");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      Real s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) b[i] -= l(i, k) * b[k];
    b[i] /= l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    for (std::size_t k = ii + 1; k < n; ++k) b[ii] -= l(k, ii) * b[k];
    b[ii] /= l(ii, ii);
  }
  return b;
}

Tensor inverse(const Tensor& a) {
  require_square(a, "inverse");
  const std::size_t n = a.rows();
  Tensor work = a;
  Tensor inv = Tensor::identity(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(work(r, col)) > std::abs(work(pivot, col))) pivot = r;
    }
    if (work(pivot, col) == 0.0) throw NumericError("inverse: singular matrix");
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(work(pivot, j), work(col, j));
        std::swap(inv(pivot, j), inv(col, j));
      }
    }
    const Real p = work(col, col);
    for (std::size_t j = 0; j < n; ++j) {
      work(col, j) /= p;
      inv(col, j) /= p;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const Real f = work(r, col);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        work(r, j) -= f * work(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }
  return inv;
}

}  // namespace causalrec
