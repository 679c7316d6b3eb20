#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "moef/types.hpp"

namespace moef::linalg {

inline Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DomainError("multiply: shape mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline Matrix scaled(const Matrix& a, double s) {
  Matrix c = a;
  for (std::size_t i = 0; i < c.rows(); ++i)
    for (double& x : c.row(i)) x *= s;
  return c;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DomainError("add: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.rows(); ++i)
    for (std::size_t j = 0; j < c.cols(); ++j) c(i, j) += b(i, j);
  return c;
}

inline Matrix subtract(const Matrix& a, const Matrix& b) { return add(a, scaled(b, -1.0)); }

// Operator infinity-norm: maximum absolute row sum.
inline double inf_norm(const Matrix& a) {
  double best = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double x : a.row(i)) s += std::abs(x);
    best = std::max(best, s);
  }
  return best;
}

inline double trace(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) s += a(i, i);
  return s;
}

// y = A^T x
inline std::vector<double> transpose_times(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size()) throw DomainError("transpose_times: shape mismatch");
  std::vector<double> y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += a(i, j) * x[i];
  return y;
}

// Matrix exponential by scaling and squaring of the truncated Taylor series.
// The argument is scaled until its inf-norm is <= 1/2, where 20 terms leave a
// remainder far below double precision.
inline Matrix expm(const Matrix& a) {
  if (!a.square()) throw DomainError("expm: matrix must be square");
  const std::size_t n = a.rows();
  const double norm = inf_norm(a);
  if (!std::isfinite(norm)) throw NumericalFailure("expm: non-finite input");

  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Matrix x = scaled(a, std::ldexp(1.0, -squarings));

  Matrix result = Matrix::identity(n);
  Matrix term = Matrix::identity(n);
  for (int k = 1; k <= 20; ++k) {
    term = scaled(multiply(term, x), 1.0 / k);
    result = add(result, term);
  }
  for (int s = 0; s < squarings; ++s) result = multiply(result, result);
  return result;
}

}  // namespace moef::linalg
