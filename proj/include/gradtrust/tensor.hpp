#pragma once
// Dense row-major f64 containers and the handful of numeric primitives the
// scoring code is built from. Containers validate on construction: non-empty,
// consistent shape, every entry finite. They are immutable afterwards.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace gradtrust {

class Vector {
 public:
  explicit Vector(std::vector<double> values);
  Vector(std::initializer_list<double> values);

  static Vector zeros(std::size_t n);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  const double* data() const noexcept { return values_.data(); }

  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> values_;
};

class Matrix {
 public:
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  // Nested-list form, one inner list per row.
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix zeros(std::size_t rows, std::size_t cols);
  static Matrix from_rows(const std::vector<Vector>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double at(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {values_.data() + r * cols_, cols_};
  }
  Vector row_vector(std::size_t r) const;
  Vector column(std::size_t c) const;
  std::span<const double> values() const noexcept { return values_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> values_;
};

// result(i, j) = u[i] * v[j]
Matrix outer(const Vector& u, const Vector& v);

// (1/n) sum (v_i - mean)^2; zero for a single entry.
double population_variance(std::span<const double> v);
inline double population_variance(const Vector& v) { return population_variance(v.values()); }

// Max-subtracted, so large logits do not overflow.
Vector softmax(const Vector& v);

// Wᵀ·x + b for a d×N matrix, d-vector x and N-vector b.
Vector affine_transposed(const Matrix& weights, std::span<const double> x, const Vector& bias);

}  // namespace gradtrust
