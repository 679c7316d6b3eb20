#pragma once

// Step 2: Gibbs (softmin) aggregation of the per-expert filter estimates and
// the robust re-estimation of the hidden chain's intensity matrix.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "moef/linalg.hpp"
#include "moef/types.hpp"

namespace moef {

// pibar_n = exp(-lambda s_n) / sum_i exp(-lambda s_i). The smallest lambda*s
// is subtracted before exponentiation.
inline SimplexVector softmin_weights(std::span<const double> scores, double lambda) {
  if (scores.empty()) throw DomainError("softmin_weights: empty scores");
  if (!(lambda > 0.0)) throw DomainError("softmin_weights: lambda must be > 0");
  if (!all_finite(scores)) throw NumericalFailure("softmin_weights: non-finite score");
  double lowest = std::numeric_limits<double>::infinity();
  for (double s : scores) lowest = std::min(lowest, lambda * s);
  std::vector<double> w(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    w[i] = std::exp(-(lambda * scores[i] - lowest));
    total += w[i];
  }
  for (double& x : w) x /= total;
  return SimplexVector(std::move(w));
}

// Expected score plus (1/lambda) KL(pi || uniform). softmin_weights is its
// unique minimizer over the simplex.
inline double inner_objective(const SimplexVector& pi, std::span<const double> scores,
                              double lambda) {
  if (pi.size() != scores.size()) throw DomainError("inner_objective: length mismatch");
  const double n = static_cast<double>(pi.size());
  double expected = 0.0;
  double kl = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    expected += pi[i] * scores[i];
    if (pi[i] > 0.0) kl += pi[i] * std::log(pi[i] * n);
  }
  return expected + kl / lambda;
}

inline double fuse(const SimplexVector& pi_bar, std::span<const double> estimates) {
  return dot(pi_bar.weights(), estimates);
}

// Row i of (1 - alpha) 1 pibar^T + alpha I, for alpha in [0, 1).
inline std::vector<double> perturbed_row(const SimplexVector& pi_bar, double alpha, std::size_t i) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("perturbed_row: alpha must lie in [0,1)");
  std::vector<double> row(pi_bar.size());
  for (std::size_t j = 0; j < row.size(); ++j)
    row[j] = (1.0 - alpha) * pi_bar[j] + (i == j ? alpha : 0.0);
  return row;
}

// P^alpha: every row is (1 - alpha) pibar + alpha e_i. Eigenvalues are 1 and
// alpha (multiplicity N - 1), so it is always invertible.
inline RowStochasticMatrix build_perturbed_P(const SimplexVector& pi_bar, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("build_perturbed_P: alpha must lie in the open interval (0,1)");
  const std::size_t n = pi_bar.size();
  Matrix p(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = perturbed_row(pi_bar, alpha, i);
    std::copy(r.begin(), r.end(), p.row(i).begin());
  }
  return RowStochasticMatrix(std::move(p));
}

// Principal logarithm of P^alpha in closed form. M = 1 pibar^T is idempotent,
// so log(alpha I + (1 - alpha) M) = log(alpha) (I - M) + log(1) M.
inline Matrix matrix_log_perturbed(const SimplexVector& pi_bar, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("matrix_log_perturbed: alpha must lie in the open interval (0,1)");
  const std::size_t n = pi_bar.size();
  const double la = std::log(alpha);
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = la * ((i == j ? 1.0 : 0.0) - pi_bar[j]);
  return out;
}

// ReLU of the off-diagonal entries; the diagonal is set so that rows sum to
// zero (Row) or to minus the column sums of the ReLU part (Column).
inline IntensityMatrix q_projection(const Matrix& log_p, QDiagonal rule = QDiagonal::Row) {
  if (!log_p.square()) throw DomainError("q_projection: matrix must be square");
  const std::size_t n = log_p.rows();
  Matrix r(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(log_p(i, j))) throw NumericalFailure("q_projection: non-finite input");
      if (i != j) r(i, j) = std::max(log_p(i, j), 0.0);
    }
  std::vector<double> sums(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sums[rule == QDiagonal::Row ? i : j] += r(i, j);
  for (std::size_t i = 0; i < n; ++i) r(i, i) = -sums[i];
  if (rule == QDiagonal::Column) return IntensityMatrix::unchecked(std::move(r));
  return IntensityMatrix(std::move(r));
}

inline double infnorm_distance(const Matrix& a, const Matrix& b) {
  return linalg::inf_norm(linalg::subtract(a, b));
}

// KL(p || q) with the 0 log 0 = 0 convention.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DomainError("kl_divergence: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (!(q[i] > 0.0)) throw DomainError("kl_divergence: q has zero mass where p is positive");
    s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

inline double kl_divergence(const SimplexVector& p, const SimplexVector& q) {
  return kl_divergence(p.weights(), q.weights());
}

namespace detail {
// -log(x) / (1/x - 1), continuously extended by 1 at x = 1.
inline double reverse_pinsker_term(double x) {
  if (x == 1.0) return 1.0;
  return -std::log(x) / (1.0 / x - 1.0);
}
}  // namespace detail

// 2 alpha ( -log(p)/(1/p - 1) - log((1-alpha) p)/(1/((1-alpha) p) - 1) ),
// p = min_i pibar_i.
inline double kl_perturbation_bound(const SimplexVector& pi_bar, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw DomainError("kl_perturbation_bound: alpha must lie in [0,1)");
  const double p_min = pi_bar.min();
  if (!(p_min > 0.0)) throw DomainError("kl_perturbation_bound: pibar has a zero entry");
  return 2.0 * alpha *
         (detail::reverse_pinsker_term(p_min) + detail::reverse_pinsker_term((1.0 - alpha) * p_min));
}

// Lower bound m - s sqrt(N - 1) on the smallest eigenvalue of P^alpha, with
// m = tr(P)/N and s^2 = tr(P^2)/N - m^2.
inline double min_eigenvalue_certificate(const SimplexVector& pi_bar, double alpha) {
  const Matrix p = build_perturbed_P(pi_bar, alpha).matrix();
  const double n = static_cast<double>(p.rows());
  const double m = linalg::trace(p) / n;
  const double s2 = std::max(linalg::trace(linalg::multiply(p, p)) / n - m * m, 0.0);
  return m - std::sqrt(s2) * std::sqrt(n - 1.0);
}

struct AggregationResult {
  SimplexVector pi_bar;
  double fused = 0.0;
  RowStochasticMatrix p_alpha;
  IntensityMatrix q_next;
  std::vector<double> scores;
};

inline AggregationResult aggregate(std::span<const double> scores, std::span<const double> estimates,
                                   double lambda, double alpha, QDiagonal rule = QDiagonal::Row) {
  if (scores.size() != estimates.size()) throw DomainError("aggregate: length mismatch");
  SimplexVector pi_bar = softmin_weights(scores, lambda);
  const double fused = fuse(pi_bar, estimates);
  RowStochasticMatrix p = build_perturbed_P(pi_bar, alpha);
  IntensityMatrix q = q_projection(matrix_log_perturbed(pi_bar, alpha), rule);
  return {std::move(pi_bar), fused, std::move(p), std::move(q),
          std::vector<double>(scores.begin(), scores.end())};
}

}  // namespace moef
