#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace clipcp {

/// Dense row-major sample matrix: one input per row.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  bool empty() const { return rows == 0; }

  static Matrix column(const std::vector<double>& values) {
    Matrix m(values.size(), 1);
    m.data = values;
    return m;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

}  // namespace clipcp
