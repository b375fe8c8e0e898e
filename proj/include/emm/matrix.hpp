#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace emm {

// Dense row-major matrix of doubles. Batches of samples are stored one sample
// per row.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Matrix transpose(const Matrix& a);

// Row subset in the given order.
Matrix gather_rows(const Matrix& a, std::span<const std::size_t> indices);

// Rows of `a` followed by rows of `b`.
Matrix vstack(const Matrix& a, const Matrix& b);

// Columns [first, first + count) of every row.
Matrix column_slice(const Matrix& a, std::size_t first, std::size_t count);

// Products routed through the active SIMD kernel set.
Matrix matmul(const Matrix& a, const Matrix& b);      // A * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);   // A^T * B
Matrix matmul_nt(const Matrix& a, const Matrix& b);   // A * B^T

}  // namespace emm
