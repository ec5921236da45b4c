#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "tmcdr/error.hpp"

namespace tmcdr {

using Vector = std::vector<double>;

/// Dense row-major matrix. Rows are embedding vectors.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Read-only view of a row-major table; converts implicitly from Matrix.
class RowsView {
 public:
  RowsView(const Matrix& m) : data_(m.data().data()), rows_(m.rows()), cols_(m.cols()) {}  // NOLINT
  RowsView(std::span<const double> data, std::size_t cols)
      : data_(data.data()), rows_(cols ? data.size() / cols : 0), cols_(cols) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const double> row(std::size_t i) const { return {data_ + i * cols_, cols_}; }

 private:
  const double* data_;
  std::size_t rows_;
  std::size_t cols_;
};

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ArgumentError(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                        " vs " + std::to_string(b) + ")");
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "squared_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same_dim(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline Vector to_vector(std::span<const double> xs) { return Vector(xs.begin(), xs.end()); }

}  // namespace tmcdr
