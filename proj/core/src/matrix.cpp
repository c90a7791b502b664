#include "duet/matrix.hpp"

#include <cmath>

#include "duet/errors.hpp"

namespace duet {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

void normalize_in_place(std::span<double> v) {
  double norm = l2_norm(v);
  if (!(norm > 1e-300)) throw NumericError("cannot normalize zero-norm vector");
  for (double& x : v) x /= norm;
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Matrix vstack(std::span<const Matrix> parts) {
  if (parts.empty()) return {};
  std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Matrix& p : parts) {
    if (p.cols() != cols) throw DataError("vstack: mismatched column counts");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t r = 0;
  for (const Matrix& p : parts) {
    for (std::size_t i = 0; i < p.rows(); ++i, ++r) {
      auto src = p.row(i);
      auto dst = out.row(r);
      for (std::size_t c = 0; c < cols; ++c) dst[c] = src[c];
    }
  }
  return out;
}

}  // namespace duet
