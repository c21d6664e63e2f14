#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "causalrec/errors.hpp"

namespace causalrec {

// Every real-valued array in the library is stored at this width.
using Real = double;

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of Real with an optional gradient buffer.
///
/// Extents are always positive; a scalar is represented with shape {1}.
/// The gradient buffer exists iff requires_grad() is set and always has the
/// same element count as the data.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0.0);
  Tensor(Shape shape, std::vector<Real> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(Real v) { return Tensor({1}, v); }
  static Tensor identity(std::size_t n);
  static Tensor from_rows(std::initializer_list<std::initializer_list<Real>> rows);
  static Tensor vector(std::vector<Real> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Matrix view helpers; only valid for rank-2 tensors.
  std::size_t rows() const;
  std::size_t cols() const;

  Real& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  Real operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  std::span<Real> data() noexcept { return data_; }
  std::span<const Real> data() const noexcept { return data_; }
  std::span<Real> row(std::size_t i);
  std::span<const Real> row(std::size_t i) const;

  Real item() const;

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool flag);
  std::span<Real> grad();
  std::span<const Real> grad() const;
  void zero_grad();

  bool all_finite() const noexcept;
  Tensor transposed() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<Real> data_;
  bool requires_grad_ = false;
  std::vector<Real> grad_;
};

// Non-recorded dense helpers. Used where no gradient is needed.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scaled(const Tensor& a, Real s);
Real trace(const Tensor& a);
Real max_abs(const Tensor& a);
Real max_abs_diff(const Tensor& a, const Tensor& b);
Real norm1(const Tensor& a);  // max column abs sum

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);
void require_square(const Tensor& a, const char* op);

}  // namespace causalrec
