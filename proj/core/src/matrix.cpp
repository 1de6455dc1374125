#include "fedpca/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "fedpca/error.hpp"

namespace fedpca {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  require(values_.size() == rows * cols, "Matrix: values length must equal rows * cols");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  values_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require(r.size() == cols_, "Matrix: ragged initializer");
    values_.insert(values_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < rows_, "Matrix::select_rows: index out of range");
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols_), cols_,
                out.values_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
  }
  return out;
}

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  require(values.size() == cols_, "Matrix::append_row: width mismatch");
  values_.insert(values_.end(), values.begin(), values.end());
  ++rows_;
}

bool Matrix::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace fedpca
