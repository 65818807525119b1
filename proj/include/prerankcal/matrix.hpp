#pragma once

#include <span>
#include <vector>

#include "prerankcal/errors.hpp"

namespace prerankcal {

/// Dense row-major matrix; rows are handed out as spans.
struct RowMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  RowMatrix() = default;
  RowMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  void append_row(std::span<const double> values) {
    require(values.size() == cols, "RowMatrix: row width mismatch");
    data.insert(data.end(), values.begin(), values.end());
    ++rows;
  }

  /// Rows picked by index, in the order given.
  RowMatrix select(std::span<const std::size_t> indices) const {
    RowMatrix out(0, cols);
    out.data.reserve(indices.size() * cols);
    for (std::size_t i : indices) out.append_row(row(i));
    return out;
  }
};

}  // namespace prerankcal
