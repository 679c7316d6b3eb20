#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace moef {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

// An argument is outside the domain of the operation (bad alpha, N < 1, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A computation produced a non-finite value that cannot be recovered.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Ordering or shape problems in a stream of records.
class SequenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Tolerances shared by the validity checks
// ---------------------------------------------------------------------------

inline constexpr double kSimplexTolerance = 1e-9;
inline constexpr double kRowStochasticTolerance = 1e-9;
inline constexpr double kIntensityRowSumTolerance = 1e-10;
inline constexpr double kIntensityOffDiagonalSlack = 1e-12;

// ---------------------------------------------------------------------------
// Matrix: small dense row-major matrix of doubles
// ---------------------------------------------------------------------------

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DomainError("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix from_row_major(std::size_t rows, std::size_t cols,
                               std::vector<double> values) {
    if (values.size() != rows * cols)
      throw DomainError("Matrix: value count does not match shape");
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(values);
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

  const std::vector<double>& row_major() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// SimplexVector
// ---------------------------------------------------------------------------

// A probability distribution over N experts. Entries are nonnegative and sum
// to one within kSimplexTolerance.
class SimplexVector {
 public:
  SimplexVector() = default;

  explicit SimplexVector(std::vector<double> weights) : w_(std::move(weights)) {
    if (w_.empty()) throw DomainError("SimplexVector: empty");
    double sum = 0.0;
    for (double x : w_) {
      if (!std::isfinite(x) || x < 0.0)
        throw DomainError("SimplexVector: entries must be finite and nonnegative");
      sum += x;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance)
      throw DomainError("SimplexVector: entries must sum to 1");
  }

  static SimplexVector uniform(std::size_t n) {
    if (n == 0) throw DomainError("SimplexVector: empty");
    return SimplexVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  static SimplexVector one_hot(std::size_t n, std::size_t k) {
    if (k >= n) throw DomainError("SimplexVector: one_hot index out of range");
    std::vector<double> w(n, 0.0);
    w[k] = 1.0;
    return SimplexVector(std::move(w));
  }

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  std::span<const double> weights() const noexcept { return w_; }
  auto begin() const noexcept { return w_.begin(); }
  auto end() const noexcept { return w_.end(); }
  double min() const { return *std::min_element(w_.begin(), w_.end()); }

  bool operator==(const SimplexVector&) const = default;

 private:
  std::vector<double> w_;
};

// Floors every entry at eps_pi and renormalizes. Keeps filter posteriors
// strictly inside the simplex so logs and ratios downstream stay finite.
inline SimplexVector project_to_simplex(std::span<const double> v, double eps_pi) {
  if (v.empty()) throw DomainError("project_to_simplex: empty input");
  if (!(eps_pi > 0.0)) throw DomainError("project_to_simplex: eps_pi must be > 0");
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]))
      throw NumericalFailure("project_to_simplex: non-finite entry");
    out[i] = std::max(v[i], eps_pi);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return SimplexVector(std::move(out));
}

// ---------------------------------------------------------------------------
// RowStochasticMatrix / IntensityMatrix
// ---------------------------------------------------------------------------

inline bool is_row_stochastic(const Matrix& m, double tol = kRowStochasticTolerance) {
  if (!m.square()) return false;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sum = 0.0;
    for (double x : m.row(i)) {
      if (!std::isfinite(x) || x < 0.0) return false;
      sum += x;
    }
    if (std::abs(sum - 1.0) > tol) return false;
  }
  return true;
}

class RowStochasticMatrix {
 public:
  RowStochasticMatrix() = default;
  explicit RowStochasticMatrix(Matrix m) : m_(std::move(m)) {
    if (!is_row_stochastic(m_))
      throw DomainError("RowStochasticMatrix: rows must be nonnegative and sum to 1");
  }
  const Matrix& matrix() const noexcept { return m_; }
  std::size_t size() const noexcept { return m_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }

 private:
  Matrix m_;
};

// True iff Q is square, off-diagonals >= -1e-12 and every |row sum| <= 1e-10.
inline bool validate_intensity(const Matrix& q) {
  if (!q.square()) return false;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < q.cols(); ++j) {
      const double x = q(i, j);
      if (!std::isfinite(x)) return false;
      if (i != j && x < -kIntensityOffDiagonalSlack) return false;
      sum += x;
    }
    if (std::abs(sum) > kIntensityRowSumTolerance) return false;
  }
  return true;
}

// Generator of the hidden expert chain.
class IntensityMatrix {
 public:
  IntensityMatrix() = default;
  explicit IntensityMatrix(Matrix q) : q_(std::move(q)) {
    if (!validate_intensity(q_))
      throw DomainError(
          "IntensityMatrix: off-diagonals must be >= 0 and rows must sum to 0");
  }

  // Skips validation. Only for the literal column-sum diagonal rule, whose
  // output is not a generator in general.
  static IntensityMatrix unchecked(Matrix q) {
    IntensityMatrix out;
    out.q_ = std::move(q);
    return out;
  }

  static IntensityMatrix zero(std::size_t n) { return IntensityMatrix(Matrix(n, n)); }

  const Matrix& matrix() const noexcept { return q_; }
  std::size_t size() const noexcept { return q_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return q_(i, j); }
  bool valid() const { return validate_intensity(q_); }

 private:
  Matrix q_;
};

// ---------------------------------------------------------------------------
// Observations and configuration
// ---------------------------------------------------------------------------

// One tick: time index, realized target, and the N expert predictions.
struct ObservationRecord {
  std::int64_t t = 0;
  double y = 0.0;
  std::vector<double> predictions;

  bool operator==(const ObservationRecord&) const = default;
};

enum class Loss { BCE, MSE };

// Diagonal rule for the projected intensity matrix. Row makes every row sum to
// zero; Column is the literal column-sum variant kept for comparison.
enum class QDiagonal { Row, Column };

inline std::string to_string(Loss l) { return l == Loss::BCE ? "bce" : "mse"; }
inline std::string to_string(QDiagonal d) { return d == QDiagonal::Row ? "row" : "column"; }

struct FusionConfig {
  Loss loss = Loss::MSE;
  double lambda = 1.0;   // Gibbs temperature
  double alpha = 0.5;    // perturbation weight toward the identity
  double delta = 1.0;    // noise-decay hyperparameter
  double eps_f = 1e-6;   // BCE prediction clamp
  double eps_B = 1e-8;   // floor on |B|
  double eps_pi = 1e-12; // simplex floor
  double dt = 1.0;       // step size applied to the drift term
  QDiagonal q_diag = QDiagonal::Row;

  // Throws DomainError naming the first violated constraint.
  void validate() const {
    auto finite = [](double x) { return std::isfinite(x); };
    if (!finite(lambda) || !(lambda > 0.0))
      throw DomainError("lambda must be > 0");
    if (!finite(alpha) || !(alpha > 0.0 && alpha < 1.0))
      throw DomainError("alpha must lie in the open interval (0,1)");
    if (!finite(delta) || !(delta > 0.0 && delta <= 1.0))
      throw DomainError("delta must lie in (0,1]");
    if (!finite(eps_f) || !(eps_f > 0.0 && eps_f < 0.5))
      throw DomainError("eps_f must lie in (0,0.5)");
    if (!finite(eps_B) || !(eps_B > 0.0)) throw DomainError("eps_B must be > 0");
    if (!finite(eps_pi) || !(eps_pi > 0.0)) throw DomainError("eps_pi must be > 0");
    if (!finite(dt) || !(dt > 0.0)) throw DomainError("dt must be > 0");
  }
};

// ---------------------------------------------------------------------------
// Small vector helpers
// ---------------------------------------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace moef
