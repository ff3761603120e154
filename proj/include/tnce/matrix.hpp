#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "tnce/error.hpp"

namespace tnce {

// Dense row-major matrix of doubles. The only tensor carrier in the project;
// vectors are 1xN or Nx1 as convenient.
class Matrix {
 public:
  Matrix() = default;

  Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
    require(rows > 0 && cols > 0, "Matrix: dimensions must be positive, got ",
            rows, "x", cols);
    values_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    require(rows.size() > 0, "Matrix::from_rows: empty row list");
    const int r = static_cast<int>(rows.size());
    const int c = static_cast<int>(rows.begin()->size());
    Matrix m(r, c);
    int i = 0;
    for (const auto& row : rows) {
      require(static_cast<int>(row.size()) == c,
              "Matrix::from_rows: ragged rows (", row.size(), " vs ", c, ")");
      int j = 0;
      for (double v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(int i, int j) { return values_[static_cast<std::size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return values_[static_cast<std::size_t>(i) * cols_ + j]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  double* row(int i) { return values_.data() + static_cast<std::size_t>(i) * cols_; }
  const double* row(int i) const { return values_.data() + static_cast<std::size_t>(i) * cols_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) {
    for (double& x : values_) x = v;
  }

  double max_abs_diff(const Matrix& o) const {
    require(same_shape(o), "max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i)
      m = std::max(m, std::abs(values_[i] - o.values_[i]));
    return m;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.values_ == b.values_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> values_;
};

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace tnce
