#include "oracle_suites.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "moef/aggregation.hpp"
#include "moef/linalg.hpp"

namespace moef::cli {

namespace {

std::vector<double> to_vec(const SimplexVector& v) { return {v.begin(), v.end()}; }

void keep_worst(SuiteResult& r, double value, nlohmann::ordered_json instance) {
  if (value > r.worst || r.worst_case.is_null()) {
    r.worst = value;
    r.worst_case = std::move(instance);
  }
}

double grid_min_objective(std::span<const double> scores, double lambda, double step_count) {
  const auto n = scores.size();
  const int m = static_cast<int>(step_count);
  double best = std::numeric_limits<double>::infinity();
  auto eval = [&](std::vector<double> p) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += p[i] * scores[i];
      if (p[i] > 0.0) s += p[i] * std::log(p[i] * static_cast<double>(n)) / lambda;
    }
    best = std::min(best, s);
  };
  if (n == 1) {
    eval({1.0});
  } else if (n == 2) {
    for (int i = 0; i <= m; ++i) eval({i / step_count, (m - i) / step_count});
  } else {
    for (int i = 0; i <= m; ++i)
      for (int j = 0; i + j <= m; ++j) eval({i / step_count, j / step_count, (m - i - j) / step_count});
  }
  return best;
}

}  // namespace

SimplexVector random_simplex(Rng& rng, std::size_t n, double min_entry) {
  while (true) {
    std::vector<double> w(n);
    double sum = 0.0;
    for (double& x : w) {
      x = -std::log(1.0 - rng.uniform());
      sum += x;
    }
    for (double& x : w) x /= sum;
    if (*std::min_element(w.begin(), w.end()) >= min_entry) return SimplexVector(std::move(w));
  }
}

SuiteResult matrix_log_roundtrip_suite(std::int64_t trials, std::uint64_t seed) {
  SuiteResult r{"matrix-log-roundtrip", true, 0.0, 1e-8, {}};
  Rng rng(seed);
  for (std::int64_t k = 0; k < trials; ++k) {
    const std::size_t n = 2 + rng.index(9);
    const double nn = static_cast<double>(n);
    const double alphas[] = {0.5, 0.9, 1.0 - 1.0 / (nn * nn)};
    const double alpha = alphas[rng.index(3)];
    const SimplexVector pi_bar = random_simplex(rng, n);
    const Matrix back = linalg::expm(matrix_log_perturbed(pi_bar, alpha));
    const double err = infnorm_distance(back, build_perturbed_P(pi_bar, alpha).matrix());
    keep_worst(r, err, {{"n", n}, {"alpha", alpha}, {"pi_bar", to_vec(pi_bar)}, {"error", err}});
  }
  r.passed = r.worst < r.threshold;
  return r;
}

SuiteResult softmin_grid_suite(std::int64_t trials, std::uint64_t seed) {
  // Statistic: objective(softmin) - min over grid. Nonpositive when softmin dominates.
  SuiteResult r{"softmin-grid-dominance", true, -std::numeric_limits<double>::infinity(), 1e-12, {}};
  Rng rng(seed);
  const double lambda = 1.0;
  for (std::int64_t k = 0; k < trials; ++k) {
    const std::size_t n = 1 + rng.index(3);
    std::vector<double> scores(n);
    for (double& s : scores) s = rng.uniform();
    const SimplexVector w = softmin_weights(scores, lambda);
    const double gap = inner_objective(w, scores, lambda) - grid_min_objective(scores, lambda, 1000.0);
    keep_worst(r, gap, {{"scores", scores}, {"lambda", lambda}, {"softmin", to_vec(w)}, {"gap", gap}});
  }
  r.passed = r.worst <= r.threshold;
  return r;
}

SuiteResult kl_bound_suite(std::int64_t trials, std::uint64_t seed) {
  // Statistic: max over rows of KL(pibar || row) - bound.
  SuiteResult r{"kl-perturbation-bound", true, -std::numeric_limits<double>::infinity(), 1e-12, {}};
  Rng rng(seed);
  for (std::int64_t k = 0; k < trials; ++k) {
    const std::size_t n = 2 + rng.index(9);
    const double alpha = rng.uniform();
    const SimplexVector pi_bar = random_simplex(rng, n, 1e-3);
    const double bound = kl_perturbation_bound(pi_bar, alpha);
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      kl = std::max(kl, kl_divergence(pi_bar.weights(), perturbed_row(pi_bar, alpha, i)));
    keep_worst(r, kl - bound,
               {{"n", n}, {"alpha", alpha}, {"pi_bar", to_vec(pi_bar)}, {"kl", kl}, {"bound", bound}});
  }
  r.passed = r.worst <= r.threshold;
  return r;
}

SuiteResult variance_suite(std::int64_t paths, std::uint64_t seed) {
  // Statistic: relative error of the Monte-Carlo variance against the law.
  SuiteResult r{"noise-variance-law", true, 0.0, 0.05, {}};
  struct Case {
    double alpha_decay;
    std::int64_t t_max;
  };
  const double dt = 0.01;
  for (const Case c : {Case{0.0, 101}, Case{0.5, 2001}}) {
    Scenario sc;
    sc.q_true = IntensityMatrix::zero(1);
    sc.experts = {expert::Constant{0.0}};
    sc.noise = {c.alpha_decay, 1.0};
    sc.t_max = c.t_max;
    sc.dt = dt;
    std::vector<double> finals;
    finals.reserve(static_cast<std::size_t>(paths));
    for (std::int64_t p = 0; p < paths; ++p) {
      sc.seed = seed + static_cast<std::uint64_t>(p);
      finals.push_back(synthesize(sc).observations.back().y);
    }
    double mean = 0.0;
    for (double y : finals) mean += y;
    mean /= static_cast<double>(finals.size());
    double var = 0.0;
    for (double y : finals) var += (y - mean) * (y - mean);
    var /= static_cast<double>(finals.size() - 1);
    const double horizon = static_cast<double>(c.t_max - 1) * dt;
    const double law = noise_variance(sc.noise, horizon);
    const double rel = std::abs(var - law) / law;
    keep_worst(r, rel,
               {{"alpha_decay", c.alpha_decay}, {"horizon", horizon}, {"paths", paths}, {"mc_variance", var},
                {"law", law}, {"relative_error", rel}});
  }
  r.passed = r.worst <= r.threshold;
  return r;
}

}  // namespace moef::cli
