#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace duet {

/// Dense row-major matrix of doubles. All numeric kernels in this project
/// reduce in fixed ascending index order so results are reproducible across
/// runs and shard counts.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

/// v / ||v||. Throws NumericError when the norm underflows.
void normalize_in_place(std::span<double> v);

/// True when every entry is finite.
bool all_finite(std::span<const double> v);

/// Row-wise concatenation; all inputs must share the column count.
Matrix vstack(std::span<const Matrix> parts);

}  // namespace duet
