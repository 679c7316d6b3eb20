#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "moef/engine.hpp"
#include "moef/simulator.hpp"

using namespace moef;

namespace {

std::vector<ObservationRecord> random_stream(std::size_t n, std::size_t len, Loss loss, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ObservationRecord> out;
  for (std::size_t k = 0; k < len; ++k) {
    ObservationRecord r{static_cast<std::int64_t>(k), 0.0, std::vector<double>(n)};
    for (double& f : r.predictions) f = loss == Loss::BCE ? u(gen) : nd(gen);
    r.y = loss == Loss::BCE ? (u(gen) < 0.5 ? 0.0 : 1.0) : nd(gen);
    out.push_back(std::move(r));
  }
  return out;
}

FusionConfig mse_config() {
  FusionConfig c;
  c.lambda = 5.0;
  c.alpha = 0.9;
  return c;
}

void expect_same(const TickOutput& a, const TickOutput& b) {
  EXPECT_EQ(a.t, b.t);
  EXPECT_EQ(a.fused, b.fused);
  EXPECT_EQ(a.estimates, b.estimates);
  EXPECT_EQ(a.pi_bar, b.pi_bar);
  EXPECT_EQ(a.scores, b.scores);
  EXPECT_EQ(a.q_next.matrix(), b.q_next.matrix());
  EXPECT_EQ(a.expert_weights, b.expert_weights);
  EXPECT_EQ(a.floor_events, b.floor_events);
}

}  // namespace

TEST(InitEngine, ThreeExperts) {
  const auto e = init_engine(3, FusionConfig{});
  EXPECT_EQ(e.belief().q.matrix(), (Matrix{{-1, 0.5, 0.5}, {0.5, -1, 0.5}, {0.5, 0.5, -1}}));
  for (const auto& s : e.belief().experts) {
    EXPECT_EQ(s.pi, SimplexVector::uniform(3));
    EXPECT_EQ(s.last_loss, 0.0);
    EXPECT_FALSE(s.last_prediction.has_value());
  }
}

TEST(InitEngine, SingleExpert) {
  const auto e = init_engine(1, FusionConfig{});
  EXPECT_EQ(e.belief().q.matrix(), Matrix{{0.0}});
  EXPECT_EQ(e.belief().experts[0].pi, SimplexVector({1.0}));
}

TEST(InitEngine, TwoExpertsUniform) {
  const auto e = init_engine(2, FusionConfig{});
  for (const auto& s : e.belief().experts) EXPECT_EQ(s.pi, SimplexVector({0.5, 0.5}));
}

TEST(InitEngine, Errors) {
  EXPECT_THROW(init_engine(0, FusionConfig{}), DomainError);
  FusionConfig bad;
  bad.alpha = 1.5;
  EXPECT_THROW(init_engine(2, bad), DomainError);
}

TEST(Tick, SingleExpertPassThrough) {
  for (Loss loss : {Loss::MSE, Loss::BCE}) {
    FusionConfig c = mse_config();
    c.loss = loss;
    auto e = init_engine(1, c);
    for (const auto& obs : random_stream(1, 300, loss, 4)) {
      const auto out = e.tick(obs);
      const double expect = loss == Loss::BCE ? std::clamp(obs.predictions[0], c.eps_f, 1 - c.eps_f) : obs.predictions[0];
      EXPECT_EQ(out.fused, expect);
    }
  }
}

TEST(Tick, IdenticalExpertsAreNotSeparated) {
  auto e = init_engine(2, mse_config());
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 200; ++k) {
    const double f = nd(gen);
    const auto out = e.tick({k, nd(gen), {f, f}});
    EXPECT_EQ(out.pi_bar[0], 0.5);
    EXPECT_EQ(out.pi_bar[1], 0.5);
    EXPECT_NEAR(out.fused, f, 1e-12 * std::max(1.0, std::abs(f)));
  }
}

TEST(Tick, FusedIsPiBarDotEstimatesAndConvex) {
  auto e = init_engine(4, mse_config());
  for (const auto& obs : random_stream(4, 500, Loss::MSE, 6)) {
    const auto out = e.tick(obs);
    EXPECT_NEAR(out.fused, dot(out.pi_bar.weights(), out.estimates), 1e-12);
    const auto [lo, hi] = std::minmax_element(out.estimates.begin(), out.estimates.end());
    EXPECT_GE(out.fused, *lo - 1e-12);
    EXPECT_LE(out.fused, *hi + 1e-12);
    EXPECT_NEAR(out.fused, dot(out.expert_weights, obs.predictions), 1e-12);
  }
}

TEST(Tick, InstalledQIsValidAndPosteriorsAreSimplices) {
  for (Loss loss : {Loss::MSE, Loss::BCE}) {
    FusionConfig c = mse_config();
    c.loss = loss;
    auto e = init_engine(5, c);
    for (const auto& obs : random_stream(5, 400, loss, 7)) {
      e.tick(obs);
      EXPECT_TRUE(e.belief().q.valid());
      for (const auto& s : e.belief().experts) {
        double sum = 0.0;
        for (double x : s.pi) sum += x;
        EXPECT_NEAR(sum, 1.0, 1e-9);
      }
    }
  }
}

TEST(Tick, NewQAppliesFromNextTick) {
  auto e = init_engine(3, mse_config());
  const auto q0 = e.belief().q.matrix();
  const ObservationRecord obs{0, 0.3, {0.1, 0.5, -0.2}};

  // Step expert 0 by hand with the initial Q: must match the engine's tick.
  const auto expected = filter_step(e.belief().experts[0], 0, IntensityMatrix(q0), obs.y, obs.predictions,
                                    e.config(), 0);
  const auto out = e.tick(obs);
  EXPECT_EQ(e.belief().experts[0], expected.state);
  EXPECT_EQ(e.belief().q.matrix(), out.q_next.matrix());
  EXPECT_NE(out.q_next.matrix(), q0);
}

TEST(Tick, Errors) {
  auto e = init_engine(2, mse_config());
  EXPECT_THROW(e.tick({0, 1.0, {0.5}}), DomainError);
  EXPECT_THROW(e.tick({0, NAN, {0.5, 0.1}}), NumericalFailure);
  EXPECT_THROW(e.tick({0, 1.0, {INFINITY, 0.1}}), NumericalFailure);
  e.tick({5, 1.0, {0.5, 0.1}});
  EXPECT_THROW(e.tick({5, 1.0, {0.5, 0.1}}), SequenceError);
  EXPECT_THROW(e.tick({4, 1.0, {0.5, 0.1}}), SequenceError);
  EXPECT_NO_THROW(e.tick({9, 1.0, {0.5, 0.1}}));

  FusionConfig c = mse_config();
  c.loss = Loss::BCE;
  auto b = init_engine(2, c);
  EXPECT_THROW(b.tick({0, 1.5, {0.5, 0.1}}), DomainError);
}

TEST(Tick, FloorEventsCounted) {
  FusionConfig c = mse_config();
  c.loss = Loss::BCE;
  auto e = init_engine(3, c);
  const auto out = e.tick({0, 1.0, {0.5, 0.5, 0.7}});
  EXPECT_EQ(out.floor_events, 2);
}

TEST(Tick, ParallelMatchesSequential) {
  const auto obs = random_stream(7, 300, Loss::MSE, 8);
  auto a = init_engine(7, mse_config());
  auto b = init_engine(7, mse_config());
  a.set_parallel(true);
  b.set_parallel(false);
  for (const auto& o : obs) expect_same(a.tick(o), b.tick(o));
}

TEST(RunStream, EmptyAndSingle) {
  auto e = init_engine(2, mse_config());
  EXPECT_TRUE(run_stream(e, {}).empty());
  const std::vector<ObservationRecord> one{{0, 0.4, {0.1, 0.9}}};
  auto f = init_engine(2, mse_config());
  const auto out = run_stream(e, one);
  ASSERT_EQ(out.size(), 1u);
  expect_same(out[0], f.tick(one[0]));
}

TEST(RunStream, ReplayIsBitwiseIdentical) {
  const auto obs = random_stream(3, 400, Loss::MSE, 9);
  auto a = init_engine(3, mse_config());
  auto b = init_engine(3, mse_config());
  const auto x = run_stream(a, obs);
  const auto y = run_stream(b, obs);
  ASSERT_EQ(x.size(), y.size());
  for (std::size_t k = 0; k < x.size(); ++k) expect_same(x[k], y[k]);
}

TEST(RunStream, PrefixEquivalence) {
  const auto obs = random_stream(3, 300, Loss::MSE, 10);
  auto full = init_engine(3, mse_config());
  const auto all = run_stream(full, obs);
  for (std::size_t cut : {1u, 17u, 150u, 299u}) {
    auto part = init_engine(3, mse_config());
    const auto pre = run_stream(part, std::span(obs).first(cut));
    for (std::size_t k = 0; k < cut; ++k) expect_same(pre[k], all[k]);
  }
}

TEST(RunStream, ErrorsCarryOffendingT) {
  auto e = init_engine(2, mse_config());
  const std::vector<ObservationRecord> obs{{0, 0.1, {0.1, 0.2}}, {3, 0.1, {0.1, 0.2}}, {2, 0.1, {0.1, 0.2}}};
  try {
    run_stream(e, obs);
    FAIL();
  } catch (const SequenceError& err) {
    EXPECT_NE(std::string(err.what()).find("t=2"), std::string::npos);
  }
  auto f = init_engine(2, mse_config());
  const std::vector<ObservationRecord> bad{{0, 0.1, {0.1, 0.2}}, {1, NAN, {0.1, 0.2}}};
  EXPECT_THROW(run_stream(f, bad), NumericalFailure);
}

TEST(Engine, PermutationEquivariance) {
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  for (Loss loss : {Loss::MSE, Loss::BCE}) {
    FusionConfig c = mse_config();
    c.loss = loss;
    const auto obs = random_stream(4, 200, loss, 11);
    auto permuted = obs;
    for (auto& r : permuted)
      for (std::size_t i = 0; i < 4; ++i) r.predictions[i] = obs[&r - &permuted[0]].predictions[perm[i]];
    auto a = init_engine(4, c);
    auto b = init_engine(4, c);
    for (std::size_t k = 0; k < obs.size(); ++k) {
      const auto x = a.tick(obs[k]);
      const auto y = b.tick(permuted[k]);
      EXPECT_NEAR(x.fused, y.fused, 1e-9);
      for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(y.pi_bar[i], x.pi_bar[perm[i]], 1e-9);
        EXPECT_NEAR(y.estimates[i], x.estimates[perm[i]], 1e-9);
        for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y.q_next(i, j), x.q_next(perm[i], perm[j]), 1e-9);
      }
    }
  }
}

TEST(Engine, HistoryRing) {
  auto e = init_engine(2, mse_config());
  e.set_history_capacity(5);
  const auto obs = random_stream(2, 12, Loss::MSE, 12);
  const auto out = run_stream(e, obs);
  ASSERT_EQ(e.history().size(), 5u);
  EXPECT_EQ(e.history().front().t, 7);
  EXPECT_EQ(e.history().back().fused, out.back().fused);
}

TEST(Engine, BeatsEveryExpertOnSeedSevenRegimeScenario) {
  Scenario sc;
  const double r = 0.05;
  sc.q_true = IntensityMatrix(Matrix{{-2 * r, r, r}, {r, -2 * r, r}, {r, r, -2 * r}});
  const double third = 2.0 * std::numbers::pi / 3.0;
  sc.experts = {expert::Sinusoid{1, 10, 0}, expert::Sinusoid{1, 10, third}, expert::Sinusoid{1, 10, 2 * third}};
  sc.noise = {0.0, 0.05};
  sc.t_max = 800;
  sc.dt = 1.0;
  sc.seed = 7;
  sc.observe = Observe::Rate;
  const auto path = synthesize(sc);

  FusionConfig c;
  c.lambda = 100;
  c.alpha = 0.999;
  c.dt = 0.1;
  auto e = init_engine(3, c);
  const auto out = run_stream(e, path.observations);
  double fused = 0.0;
  std::vector<double> experts(3, 0.0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& o = path.observations[k];
    fused += (o.y - out[k].fused) * (o.y - out[k].fused);
    for (std::size_t i = 0; i < 3; ++i) experts[i] += (o.y - o.predictions[i]) * (o.y - o.predictions[i]);
  }
  for (double m : experts) EXPECT_LT(fused, m);
}
