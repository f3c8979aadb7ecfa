#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace delta_audit {

// Dense row-major matrix of doubles. Rows are samples, columns are features
// (or classes, for score matrices).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> init);

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double> column(std::size_t c) const;
  void set_column(std::size_t c, std::span<const double> values);

  // Rows selected by index, in the given order.
  Matrix select_rows(std::span<const std::size_t> idx) const;
  void append_row(std::span<const double> values);

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Neumaier-compensated accumulator; reductions over samples go through this so
// that results do not depend on summation order beyond rounding of the total.
class CompensatedSum {
 public:
  void add(double v);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double compensated_mean(std::span<const double> values);
double l1_norm(std::span<const double> v);
double l2_norm(std::span<const double> v);

// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> v);

// Indices of the k largest entries of v (ties by lower index), in descending
// order of value. k is capped at v.size().
std::vector<std::size_t> top_k_indices(std::span<const double> v, std::size_t k);

}  // namespace delta_audit
