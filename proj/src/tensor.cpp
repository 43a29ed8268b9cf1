#include "gradtrust/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gradtrust/error.hpp"
#include "gradtrust/kernels.hpp"

namespace gradtrust {
namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::NonFinite,
                  std::string(what) + " entry " + std::to_string(i) + " is not finite");
    }
  }
}

}  // namespace

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Validation: return "Validation";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::DegenerateScore: return "DegenerateScore";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

Vector::Vector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw Error(ErrorCode::InvalidArgument, "vector must be nonempty");
  require_finite(values_, "vector");
}

Vector::Vector(std::initializer_list<double> values) : Vector(std::vector<double>(values)) {}

Vector Vector::zeros(std::size_t n) { return Vector(std::vector<double>(n, 0.0)); }

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (rows_ == 0 || cols_ == 0) {
    throw Error(ErrorCode::InvalidArgument, "matrix dimensions must be nonzero");
  }
  if (values_.size() != rows_ * cols_) {
    throw Error(ErrorCode::ShapeMismatch,
                "matrix " + std::to_string(rows_) + "x" + std::to_string(cols_) + " given " +
                    std::to_string(values_.size()) + " values");
  }
  require_finite(values_, "matrix");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  values_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorCode::ShapeMismatch, "ragged matrix rows");
    values_.insert(values_.end(), r.begin(), r.end());
  }
  *this = Matrix(rows_, cols_, std::move(values_));
}

Matrix Matrix::zeros(std::size_t rows, std::size_t cols) {
  return Matrix(rows, cols, std::vector<double>(rows * cols, 0.0));
}

Matrix Matrix::from_rows(const std::vector<Vector>& rows) {
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "matrix needs at least one row");
  const std::size_t cols = rows.front().size();
  std::vector<double> values;
  values.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw Error(ErrorCode::ShapeMismatch, "ragged matrix rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Matrix(rows.size(), cols, std::move(values));
}

Vector Matrix::row_vector(std::size_t r) const {
  const auto s = row(r);
  return Vector(std::vector<double>(s.begin(), s.end()));
}

Vector Matrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = at(r, c);
  return Vector(std::move(out));
}

Matrix outer(const Vector& u, const Vector& v) {
  const auto& k = kernels::active();
  std::vector<double> out(u.size() * v.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    k.scale(u[i], v.data(), out.data() + i * v.size(), v.size());
  }
  return Matrix(u.size(), v.size(), std::move(out));
}

double population_variance(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorCode::InvalidArgument, "variance of an empty sequence");
  if (v.size() == 1) return 0.0;
  const auto& k = kernels::active();
  const double n = static_cast<double>(v.size());
  const double mean = k.sum(v.data(), v.size()) / n;
  return k.sum_sq_dev(v.data(), mean, v.size()) / n;
}

Vector softmax(const Vector& v) {
  const auto& k = kernels::active();
  const double m = k.max(v.data(), v.size());
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [m](double x) { return std::exp(x - m); });
  const double z = k.sum(out.data(), out.size());
  k.scale(1.0 / z, out.data(), out.data(), out.size());
  return Vector(std::move(out));
}

Vector affine_transposed(const Matrix& weights, std::span<const double> x, const Vector& bias) {
  if (weights.rows() != x.size() || weights.cols() != bias.size()) {
    throw Error(ErrorCode::ShapeMismatch, "affine: weights " + std::to_string(weights.rows()) +
                                              "x" + std::to_string(weights.cols()) +
                                              " incompatible with input/bias");
  }
  const auto& k = kernels::active();
  std::vector<double> out(bias.begin(), bias.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    k.axpy(x[i], weights.row(i).data(), out.data(), out.size());
  }
  return Vector(std::move(out));
}

}  // namespace gradtrust
