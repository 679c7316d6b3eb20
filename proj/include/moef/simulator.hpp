#pragma once

// Synthetic regime-switching targets. A hidden continuous-time Markov chain
// picks the active expert; the target integrates that expert's output plus
// decaying Gaussian noise:
//
//   Y_{k+1} = Y_k + F_{w_k}(k dt) dt + C e^{-a k dt} sqrt(dt) xi_k
//
// In level mode record k carries Y_k; in rate mode it carries
// (Y_{k+1} - Y_k) / dt, i.e. the active expert's output plus noise.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "moef/linalg.hpp"
#include "moef/types.hpp"

namespace moef {

namespace expert {
struct Constant {
  double c = 0.0;
  bool operator==(const Constant&) const = default;
};
// amplitude * sin(2 pi s / period + phase), s = k dt.
struct Sinusoid {
  double amplitude = 1.0;
  double period = 1.0;
  double phase = 0.0;
  bool operator==(const Sinusoid&) const = default;
};
// The emitted target k records back (y0 before the stream has k records).
struct LagOfTarget {
  std::int64_t k = 1;
  bool operator==(const LagOfTarget&) const = default;
};
}  // namespace expert

using ExpertSpec = std::variant<expert::Constant, expert::Sinusoid, expert::LagOfTarget>;

struct NoiseSpec {
  double alpha_decay = 0.0;
  double c = 1.0;
};

// The noise-decay parameterizations are linked by alpha = ln(1 / delta^4).
inline double alpha_from_delta(double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) throw DomainError("alpha_from_delta: delta must lie in (0,1]");
  return -4.0 * std::log(delta);
}

// Var(Y_t - Y_0) for the driftless continuous-time dynamics.
inline double noise_variance(const NoiseSpec& noise, double t) {
  if (noise.alpha_decay == 0.0) return noise.c * noise.c * t;
  return noise.c * noise.c * (1.0 - std::exp(-2.0 * noise.alpha_decay * t)) / (2.0 * noise.alpha_decay);
}

enum class Observe { Level, Rate };

inline std::string to_string(Observe o) { return o == Observe::Level ? "level" : "rate"; }

struct Scenario {
  IntensityMatrix q_true;
  std::vector<ExpertSpec> experts;
  NoiseSpec noise;
  std::int64_t t_max = 0;  // number of records
  double dt = 1.0;
  std::uint64_t seed = 0;
  double y0 = 0.0;
  Observe observe = Observe::Level;
  std::optional<std::size_t> initial_state;

  // Throws DomainError naming the violated invariant.
  void validate() const {
    const std::size_t n = experts.size();
    if (n == 0) throw DomainError("scenario: at least one expert is required");
    if (!q_true.valid())
      throw DomainError("scenario: q_true is not a valid intensity matrix (off-diagonals >= 0, rows sum to 0)");
    if (q_true.size() != n) throw DomainError("scenario: q_true dimension must equal the number of experts");
    if (!(std::isfinite(dt) && dt > 0.0)) throw DomainError("scenario: dt must be > 0");
    double max_rate = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_rate = std::max(max_rate, std::abs(q_true(i, i)));
    if (dt * max_rate > 0.1) throw DomainError("scenario: dt * max|Q_ii| must be <= 0.1");
    if (!(noise.c >= 0.0 && noise.c <= 1.0)) throw DomainError("scenario: noise C must lie in [0,1]");
    if (!(std::isfinite(noise.alpha_decay) && noise.alpha_decay >= 0.0))
      throw DomainError("scenario: noise alpha_decay must be >= 0");
    if (t_max < 0) throw DomainError("scenario: t_max must be >= 0");
    if (!std::isfinite(y0)) throw DomainError("scenario: y0 must be finite");
    if (initial_state && *initial_state >= n) throw DomainError("scenario: initial_state out of range");
    for (const auto& e : experts) {
      if (const auto* s = std::get_if<expert::Sinusoid>(&e); s && !(s->period > 0.0))
        throw DomainError("scenario: sinusoid period must be > 0");
      if (const auto* l = std::get_if<expert::LagOfTarget>(&e); l && l->k < 1)
        throw DomainError("scenario: lag must be >= 1");
    }
  }
};

// mt19937_64 words mapped to doubles by hand (53-bit mantissa) and normals by
// the cosine branch of Box-Muller, so paths are identical on every standard
// library.
class Rng {
 public:
  static constexpr const char* kId = "mt19937_64/boxmuller-v1";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::size_t index(std::size_t n) {
    const auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return std::min(k, n - 1);
  }

  std::size_t categorical(std::span<const double> p) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      acc += p[i];
      if (u < acc) return i;
    }
    return p.size() - 1;
  }

 private:
  std::mt19937_64 engine_;
};

inline constexpr std::uint64_t kNoiseStreamOffset = 0x9E3779B97F4A7C15ULL;

// exp(Q dt) with tiny negative round-off clamped and rows renormalized.
inline RowStochasticMatrix transition_matrix(const IntensityMatrix& q, double dt) {
  if (!(dt > 0.0)) throw DomainError("transition_matrix: dt must be > 0");
  Matrix p = linalg::expm(linalg::scaled(q.matrix(), dt));
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double sum = 0.0;
    for (double& x : p.row(i)) {
      x = std::max(x, 0.0);
      sum += x;
    }
    for (double& x : p.row(i)) x /= sum;
  }
  return RowStochasticMatrix(std::move(p));
}

inline std::vector<std::size_t> sample_hidden_chain(const IntensityMatrix& q_true, std::int64_t t_max, double dt,
                                                    std::uint64_t seed,
                                                    std::optional<std::size_t> initial_state = std::nullopt) {
  const std::size_t n = q_true.size();
  if (n == 0) throw DomainError("sample_hidden_chain: empty intensity matrix");
  if (t_max < 0) throw DomainError("sample_hidden_chain: t_max must be >= 0");
  std::vector<std::size_t> path;
  if (t_max == 0) return path;
  const RowStochasticMatrix p = transition_matrix(q_true, dt);
  Rng rng(seed);
  std::size_t w = initial_state ? *initial_state : rng.index(n);
  if (w >= n) throw DomainError("sample_hidden_chain: initial_state out of range");
  path.reserve(static_cast<std::size_t>(t_max));
  path.push_back(w);
  for (std::int64_t k = 1; k < t_max; ++k) {
    w = rng.categorical(p.matrix().row(w));
    path.push_back(w);
  }
  return path;
}

struct SimulatedPath {
  std::vector<ObservationRecord> observations;
  std::vector<std::size_t> hidden;
};

inline SimulatedPath synthesize(const Scenario& sc) {
  sc.validate();
  SimulatedPath out;
  out.hidden = sample_hidden_chain(sc.q_true, sc.t_max, sc.dt, sc.seed, sc.initial_state);
  out.observations.reserve(out.hidden.size());

  Rng noise(sc.seed + kNoiseStreamOffset);
  const double sqrt_dt = std::sqrt(sc.dt);
  double level = sc.y0;
  std::vector<double> emitted;  // targets already written, for lag experts
  emitted.reserve(out.hidden.size());

  for (std::size_t k = 0; k < out.hidden.size(); ++k) {
    const double s = static_cast<double>(k) * sc.dt;
    std::vector<double> F(sc.experts.size());
    for (std::size_t i = 0; i < F.size(); ++i) {
      F[i] = std::visit(
          [&](const auto& e) -> double {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, expert::Constant>) {
              return e.c;
            } else if constexpr (std::is_same_v<T, expert::Sinusoid>) {
              return e.amplitude * std::sin(2.0 * std::numbers::pi * s / e.period + e.phase);
            } else {
              const auto lag = static_cast<std::size_t>(e.k);
              return k >= lag ? emitted[k - lag] : sc.y0;
            }
          },
          sc.experts[i]);
    }

    const double sigma = sc.noise.c * std::exp(-sc.noise.alpha_decay * s);
    const double next = level + F[out.hidden[k]] * sc.dt + sigma * sqrt_dt * noise.normal();
    const double y = sc.observe == Observe::Level ? level : (next - level) / sc.dt;
    if (!std::isfinite(y) || !all_finite(F)) throw NumericalFailure("synthesize: path diverged");

    emitted.push_back(y);
    out.observations.push_back({static_cast<std::int64_t>(k), y, std::move(F)});
    level = next;
  }
  return out;
}

}  // namespace moef
