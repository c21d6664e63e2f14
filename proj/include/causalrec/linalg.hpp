#pragma once

#include <vector>

#include "causalrec/tensor.hpp"

namespace causalrec {

/// Matrix exponential by scaling and squaring.
///
/// The argument is scaled by 2^-s until its 1-norm is at most 1/2, the
/// Taylor series is summed until the next term vanishes relative to the
/// partial sum, and the result is squared s times. For nilpotent input the
/// series terminates exactly. Throws NumericError if the result overflows.
Tensor expm(const Tensor& m);

/// Number of squarings expm() applies for the given matrix.
int expm_squarings(const Tensor& m);

/// Solves A x = b for symmetric positive definite A via Cholesky.
/// Throws NumericError when A is not positive definite.
std::vector<Real> cholesky_solve(const Tensor& a, std::vector<Real> b);

/// Inverse of a general square matrix by Gauss-Jordan with partial pivoting.
Tensor inverse(const Tensor& a);

}  // namespace causalrec
