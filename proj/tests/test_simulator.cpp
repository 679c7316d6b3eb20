#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "moef/engine.hpp"
#include "moef/linalg.hpp"
#include "moef/simulator.hpp"
#include "oracles/oracles.hpp"

using namespace moef;

namespace {

IntensityMatrix symmetric2(double r) { return IntensityMatrix(Matrix{{-r, r}, {r, -r}}); }

}  // namespace

TEST(TransitionMatrix, TwoStateClosedForm) {
  const auto p = transition_matrix(symmetric2(1.0), std::log(2.0) / 2.0);
  EXPECT_NEAR(p(0, 0), 0.75, 1e-14);
  EXPECT_NEAR(p(0, 1), 0.25, 1e-14);
  EXPECT_NEAR(p(1, 0), 0.25, 1e-14);
  EXPECT_NEAR(p(1, 1), 0.75, 1e-14);
}

TEST(TransitionMatrix, ZeroGeneratorIsIdentity) {
  EXPECT_EQ(transition_matrix(IntensityMatrix::zero(3), 0.7).matrix(), Matrix::identity(3));
}

TEST(TransitionMatrix, FirstOrderForSmallSteps) {
  const IntensityMatrix q(Matrix{{-1, 0.4, 0.6}, {0.2, -0.5, 0.3}, {1, 1, -2}});
  for (double dt : {1e-2, 1e-3, 1e-4}) {
    const auto p = transition_matrix(q, dt).matrix();
    const auto lin = linalg::add(Matrix::identity(3), linalg::scaled(q.matrix(), dt));
    // Taylor remainder: ||Q||^2 dt^2 / 2 * e^{||Q|| dt}, with ||Q||_inf = 4.
    EXPECT_LT(infnorm_distance(p, lin), 8.0 * dt * dt * std::exp(4.0 * dt));
  }
}

TEST(TransitionMatrix, MatchesPadeOracleAndSemigroup) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0.0, 1.5);
  for (int k = 0; k < 50; ++k) {
    const std::size_t n = 2 + k % 5;
    Matrix qm(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += (qm(i, j) = u(gen));
      qm(i, i) = -s;
    }
    const IntensityMatrix q(qm);
    const double a = 0.1 + u(gen), b = 0.05 + u(gen);
    const auto pa = transition_matrix(q, a).matrix();
    EXPECT_TRUE(is_row_stochastic(pa, 1e-12));
    EXPECT_LT(oracle::inf_norm(oracle::to_eigen(pa) - oracle::expm(oracle::to_eigen(qm) * a)), 1e-12);
    const auto pab = transition_matrix(q, a + b).matrix();
    const auto prod = linalg::multiply(pa, transition_matrix(q, b).matrix());
    EXPECT_LT(infnorm_distance(pab, prod), 1e-8);
  }
}

TEST(TransitionMatrix, RejectsNonPositiveStep) {
  EXPECT_THROW(transition_matrix(symmetric2(1), 0.0), DomainError);
}

TEST(HiddenChain, NoTransitionsWithZeroGenerator) {
  const auto path = sample_hidden_chain(IntensityMatrix::zero(4), 500, 1.0, 99);
  ASSERT_EQ(path.size(), 500u);
  for (auto w : path) EXPECT_EQ(w, path.front());
}

TEST(HiddenChain, SymmetricOccupancy) {
  const auto path = sample_hidden_chain(symmetric2(0.05), 100000, 1.0, 3);
  double ones = 0.0;
  for (auto w : path) ones += static_cast<double>(w);
  EXPECT_NEAR(ones / 1e5, 0.5, 0.02);
}

TEST(HiddenChain, DeterministicPerSeed) {
  const IntensityMatrix q(Matrix{{-0.2, 0.1, 0.1}, {0.05, -0.1, 0.05}, {0, 0.3, -0.3}});
  EXPECT_EQ(sample_hidden_chain(q, 1000, 0.3, 42), sample_hidden_chain(q, 1000, 0.3, 42));
  EXPECT_NE(sample_hidden_chain(q, 1000, 0.3, 42), sample_hidden_chain(q, 1000, 0.3, 43));
}

TEST(HiddenChain, InitialStateOverride) {
  const auto path = sample_hidden_chain(IntensityMatrix::zero(3), 10, 1.0, 0, 2);
  for (auto w : path) EXPECT_EQ(w, 2u);
}

TEST(Rng, KnownFirstWordsAndRanges) {
  // mt19937_64's output sequence is fixed by the C++ standard.
  Rng r(5489);
  EXPECT_EQ(r.next_u64(), 14514284786278117030ULL);
  Rng s(1);
  for (int k = 0; k < 10000; ++k) {
    const double u = s.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_TRUE(std::isfinite(s.normal()));
  }
}

TEST(Rng, NormalMoments) {
  Rng r(17);
  double m = 0.0, v = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double x = r.normal();
    m += x;
    v += x * x;
  }
  m /= n;
  v = v / n - m * m;
  EXPECT_NEAR(m, 0.0, 0.01);
  EXPECT_NEAR(v, 1.0, 0.01);
}

TEST(Synthesize, DriftOnlyIntegration) {
  Scenario sc;
  sc.q_true = IntensityMatrix::zero(2);
  sc.experts = {expert::Constant{0.0}, expert::Constant{1.0}};
  sc.noise = {0.0, 0.0};
  sc.t_max = 50;
  sc.dt = 0.25;
  sc.y0 = 3.0;
  sc.initial_state = 1;
  const auto path = synthesize(sc);
  ASSERT_EQ(path.observations.size(), 50u);
  for (std::size_t k = 0; k < 50; ++k) {
    EXPECT_EQ(path.hidden[k], 1u);
    EXPECT_EQ(path.observations[k].t, static_cast<std::int64_t>(k));
    EXPECT_DOUBLE_EQ(path.observations[k].y, 3.0 + static_cast<double>(k) * 0.25);
    EXPECT_EQ(path.observations[k].predictions, (std::vector<double>{0.0, 1.0}));
  }
}

TEST(Synthesize, RateModeEmitsActiveExpertOutput) {
  Scenario sc;
  sc.q_true = symmetric2(0.05);
  sc.experts = {expert::Constant{-1.0}, expert::Sinusoid{2.0, 8.0, 0.5}};
  sc.noise = {0.0, 0.0};
  sc.t_max = 300;
  sc.dt = 0.5;
  sc.seed = 4;
  sc.observe = Observe::Rate;
  const auto path = synthesize(sc);
  for (std::size_t k = 0; k < path.hidden.size(); ++k) {
    const auto& o = path.observations[k];
    EXPECT_NEAR(o.y, o.predictions[path.hidden[k]], 1e-12);
    EXPECT_NEAR(o.predictions[1], 2.0 * std::sin(2.0 * std::numbers::pi * k * 0.5 / 8.0 + 0.5), 1e-12);
  }
}

TEST(Synthesize, LagExpertRepeatsTarget) {
  Scenario sc;
  sc.q_true = IntensityMatrix::zero(2);
  sc.experts = {expert::Constant{0.3}, expert::LagOfTarget{2}};
  sc.noise = {0.0, 0.5};
  sc.t_max = 30;
  sc.y0 = -1.0;
  sc.seed = 9;
  const auto path = synthesize(sc);
  EXPECT_EQ(path.observations[0].predictions[1], -1.0);
  EXPECT_EQ(path.observations[1].predictions[1], -1.0);
  for (std::size_t k = 2; k < 30; ++k) EXPECT_EQ(path.observations[k].predictions[1], path.observations[k - 2].y);
}

TEST(Synthesize, Reproducible) {
  Scenario sc;
  sc.q_true = symmetric2(0.02);
  sc.experts = {expert::Constant{0.5}, expert::Sinusoid{1, 20, 0}};
  sc.noise = {0.1, 0.8};
  sc.t_max = 500;
  sc.seed = 123;
  const auto a = synthesize(sc);
  const auto b = synthesize(sc);
  EXPECT_EQ(a.observations, b.observations);
  EXPECT_EQ(a.hidden, b.hidden);
  sc.seed = 124;
  EXPECT_NE(synthesize(sc).observations, a.observations);
}

TEST(Synthesize, VarianceLawWithoutDecay) {
  Scenario sc;
  sc.q_true = IntensityMatrix::zero(1);
  sc.experts = {expert::Constant{0.0}};
  sc.noise = {0.0, 1.0};
  sc.t_max = 51;
  sc.dt = 0.02;
  double m = 0.0, v = 0.0;
  const int n = 10000;
  for (int s = 0; s < n; ++s) {
    sc.seed = static_cast<std::uint64_t>(s);
    const double y = synthesize(sc).observations.back().y;
    m += y;
    v += y * y;
  }
  m /= n;
  v = (v - n * m * m) / (n - 1);
  EXPECT_NEAR(v / (50 * 0.02), 1.0, 0.05);
}

TEST(Synthesize, VarianceLawWithDecay) {
  Scenario sc;
  sc.q_true = IntensityMatrix::zero(1);
  sc.experts = {expert::Constant{0.0}};
  sc.noise = {1.0, 0.8};
  sc.t_max = 1001;
  sc.dt = 0.01;
  double m = 0.0, v = 0.0;
  const int n = 10000;
  for (int s = 0; s < n; ++s) {
    sc.seed = 1000 + static_cast<std::uint64_t>(s);
    const double y = synthesize(sc).observations.back().y;
    m += y;
    v += y * y;
  }
  m /= n;
  v = (v - n * m * m) / (n - 1);
  EXPECT_NEAR(v / (0.64 / 2.0), 1.0, 0.05);
}

TEST(NoiseVariance, ClosedForm) {
  EXPECT_DOUBLE_EQ(noise_variance({0.0, 1.0}, 3.5), 3.5);
  EXPECT_DOUBLE_EQ(noise_variance({0.0, 0.5}, 2.0), 0.5);
  EXPECT_NEAR(noise_variance({0.5, 1.0}, 1.0), (1.0 - std::exp(-1.0)) / 1.0, 1e-15);
  EXPECT_NEAR(noise_variance({2.0, 1.0}, 100.0), 0.25, 1e-15);
}

TEST(AlphaFromDelta, Conversion) {
  EXPECT_EQ(alpha_from_delta(1.0), 0.0);
  EXPECT_NEAR(alpha_from_delta(0.9), std::log(1.0 / std::pow(0.9, 4)), 1e-15);
  EXPECT_THROW(alpha_from_delta(0.0), DomainError);
}

TEST(Scenario, Validation) {
  Scenario sc;
  sc.q_true = symmetric2(0.05);
  sc.experts = {expert::Constant{0}, expert::Constant{1}};
  sc.t_max = 10;
  EXPECT_NO_THROW(sc.validate());

  auto bad = sc;
  bad.q_true = IntensityMatrix::unchecked(Matrix{{-1, 0.5}, {1, -1}});
  EXPECT_THROW(bad.validate(), DomainError);
  bad = sc;
  bad.q_true = symmetric2(0.5);
  EXPECT_THROW(bad.validate(), DomainError);
  bad = sc;
  bad.noise.c = 1.5;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = sc;
  bad.experts.pop_back();
  EXPECT_THROW(bad.validate(), DomainError);
  bad = sc;
  bad.initial_state = 2;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = sc;
  bad.experts[0] = expert::Sinusoid{1, 0, 0};
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(Tracking, TwoSeparatedConstantExperts) {
  Scenario sc;
  sc.q_true = symmetric2(0.02);
  sc.experts = {expert::Constant{1.0}, expert::Constant{-1.0}};
  sc.noise = {0.0, 0.1};
  sc.t_max = 1000;
  sc.dt = 1.0;
  sc.seed = 7;
  sc.observe = Observe::Rate;
  const auto path = synthesize(sc);

  FusionConfig c;
  c.lambda = 10;
  c.alpha = 0.9;
  auto e = init_engine(2, c);
  const auto out = run_stream(e, path.observations);
  int hits = 0;
  for (std::size_t k = 50; k < out.size(); ++k) hits += out[k].expert_weights[path.hidden[k]] > 0.5;
  EXPECT_GE(hits / static_cast<double>(out.size() - 50), 0.6);
}
