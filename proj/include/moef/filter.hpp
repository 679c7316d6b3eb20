#pragma once

// Step 1: one discretized Wonham-Shiryaev filter per expert. Each filter
// watches only its own expert's running loss and maintains a posterior over
// which expert is currently active.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "moef/linalg.hpp"
#include "moef/types.hpp"

namespace moef {

struct ExpertFilterState {
  SimplexVector pi;                      // posterior over the N experts
  double last_loss = 0.0;                // running loss at the previous tick
  std::optional<double> last_prediction; // expert output at the previous tick

  bool operator==(const ExpertFilterState&) const = default;
};

// Whole-filter state: N posteriors, the current Q estimate and a tick counter.
struct BeliefState {
  std::vector<ExpertFilterState> experts;
  IntensityMatrix q;
  std::int64_t ticks = 0;                 // number of ticks processed
  std::optional<std::int64_t> last_t;     // record time of the last tick
};

// Backward difference of the expert's output. Zero when there is no
// predecessor (first tick).
inline double expert_sensitivity(double f_now, std::optional<double> f_prev) {
  return f_prev ? f_now - *f_prev : 0.0;
}

namespace detail {

inline void require_probability(double f, const char* who) {
  if (!(f > 0.0 && f < 1.0))
    throw DomainError(std::string(who) + ": BCE prediction must lie strictly inside (0,1); clamp first");
}

inline double logit(double f) { return std::log(f / (1.0 - f)); }

// e^{t ln(delta^k)} without forming delta^k first.
inline double decay_factor(double delta, int power, std::int64_t t) {
  if (delta == 1.0) return 1.0;
  return std::exp(static_cast<double>(t) * power * std::log(delta));
}

}  // namespace detail

// Loss-drift helper evaluated at basis vector e_i (so w^T F = F_i).
//   MSE: 2 (y - f_n) (F_i - df_n + e^{t ln delta^8})
//   BCE: -(y - f_n) df_n / ((1 - f_n) f_n) - log(f_n / (1 - f_n)) F_i
inline double helper_A(Loss loss, std::size_t i, double y, double f_n, double delta_f_n,
                       std::span<const double> F, std::int64_t t, double delta) {
  if (i >= F.size()) throw DomainError("helper_A: basis index out of range");
  if (loss == Loss::MSE)
    return 2.0 * (y - f_n) * (F[i] - delta_f_n + detail::decay_factor(delta, 8, t));
  detail::require_probability(f_n, "helper_A");
  return -((y - f_n) * delta_f_n) / ((1.0 - f_n) * f_n) - detail::logit(f_n) * F[i];
}

// Posterior average of helper_A over the basis vectors.
inline double helper_A_bar(Loss loss, const SimplexVector& pi, double y, double f_n,
                           double delta_f_n, std::span<const double> F, std::int64_t t,
                           double delta) {
  if (pi.size() != F.size()) throw DomainError("helper_A_bar: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < F.size(); ++i)
    s += helper_A(loss, i, y, f_n, delta_f_n, F, t, delta) * pi[i];
  return s;
}

// Raw diffusion helper (may be zero).
//   MSE: 2^{3/2} (y - f_n) e^{t ln delta^4}
//   BCE: -log(f_n / (1 - f_n)), times e^{t ln delta^4} when delta != 1
inline double helper_B(Loss loss, double y, double f_n, std::int64_t t, double delta) {
  if (loss == Loss::MSE)
    return 2.0 * std::sqrt(2.0) * (y - f_n) * detail::decay_factor(delta, 4, t);
  detail::require_probability(f_n, "helper_B");
  return -detail::logit(f_n) * detail::decay_factor(delta, 4, t);
}

struct FlooredB {
  double value;
  bool floored;
};

// sign(B) * max(|B|, eps_B), with sign(0) = +1.
inline FlooredB floor_B(double b, double eps_B) {
  if (std::abs(b) >= eps_B) return {b, false};
  return {b < 0.0 ? -eps_B : eps_B, true};
}

// MSE: (y - y_hat)^2. BCE: negative log-likelihood with y_hat clamped into
// [eps_f, 1 - eps_f]; nonnegative, lower is better.
inline double loss_value(Loss loss, double y_hat, double y, double eps_f) {
  if (loss == Loss::MSE) return (y - y_hat) * (y - y_hat);
  const double p = std::clamp(y_hat, eps_f, 1.0 - eps_f);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

inline double innovation(double delta_L, double a_bar, double b_floored) {
  return (delta_L - a_bar) / b_floored;
}

inline double expert_estimate(const SimplexVector& pi, std::span<const double> F) {
  return dot(pi.weights(), F);
}

inline double expert_score(double y, double y_hat_n, Loss loss, double eps_f) {
  return loss_value(loss, y_hat_n, y, eps_f);
}

// Clamps BCE predictions into [eps_f, 1 - eps_f]; MSE predictions pass through.
inline std::vector<double> ingest_predictions(std::span<const double> raw, const FusionConfig& cfg) {
  std::vector<double> out(raw.begin(), raw.end());
  if (cfg.loss == Loss::BCE)
    for (double& f : out) f = std::clamp(f, cfg.eps_f, 1.0 - cfg.eps_f);
  return out;
}

struct FilterStepResult {
  ExpertFilterState state;
  bool b_floored = false;
};

// One Euler-Maruyama step of expert n's filter.
//
// `F` must already be ingested (clamped for BCE). `tick` is the 0-based number
// of ticks processed before this one and drives the delta decay factors.
// Reads only state_n, the shared (y, F, Q) and the config.
inline FilterStepResult filter_step(const ExpertFilterState& state_n, std::size_t n,
                                    const IntensityMatrix& q, double y,
                                    std::span<const double> F, const FusionConfig& cfg,
                                    std::int64_t tick) {
  const std::size_t N = F.size();
  if (n >= N) throw DomainError("filter_step: expert index out of range");
  if (state_n.pi.size() != N || q.size() != N)
    throw DomainError("filter_step: dimension mismatch");

  const double f_n = F[n];
  const double df = expert_sensitivity(f_n, state_n.last_prediction);
  const double loss_now = loss_value(cfg.loss, f_n, y, cfg.eps_f);
  const double delta_L = loss_now - state_n.last_loss;

  std::vector<double> A(N);
  for (std::size_t i = 0; i < N; ++i) A[i] = helper_A(cfg.loss, i, y, f_n, df, F, tick, cfg.delta);
  const double a_bar = dot(state_n.pi.weights(), A);
  const FlooredB B = floor_B(helper_B(cfg.loss, y, f_n, tick, cfg.delta), cfg.eps_B);
  const double dW = innovation(delta_L, a_bar, B.value);

  const std::vector<double> drift = linalg::transpose_times(q.matrix(), state_n.pi.weights());
  std::vector<double> next(N);
  for (std::size_t i = 0; i < N; ++i) {
    const double pi_i = state_n.pi[i];
    const double diffusion = pi_i * (A[i] - a_bar) / B.value;
    next[i] = pi_i + drift[i] * cfg.dt + diffusion * dW;
  }
  if (!all_finite(next)) throw NumericalFailure("filter_step: posterior update is not finite");

  return {ExpertFilterState{project_to_simplex(next, cfg.eps_pi), loss_now, f_n}, B.floored};
}

inline FilterStepResult filter_step(const ExpertFilterState& state_n, std::size_t n,
                                    const IntensityMatrix& q, const ObservationRecord& obs,
                                    const FusionConfig& cfg, std::int64_t tick) {
  const auto F = ingest_predictions(obs.predictions, cfg);
  return filter_step(state_n, n, q, obs.y, F, cfg, tick);
}

}  // namespace moef
