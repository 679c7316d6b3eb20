#pragma once

// Streaming orchestrator: per tick, run the N filters (optionally in
// parallel), then aggregate and install the projected Q for the next tick.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <execution>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moef/aggregation.hpp"
#include "moef/filter.hpp"
#include "moef/types.hpp"

namespace moef {

struct TickOutput {
  std::int64_t t = 0;
  double y = 0.0;
  double fused = 0.0;
  std::vector<double> estimates;       // per-filter estimates pi^(n) . F
  SimplexVector pi_bar;                // Gibbs weights over the filters
  std::vector<double> scores;          // per-filter losses
  IntensityMatrix q_next;              // Q installed for the next tick
  std::vector<double> expert_weights;  // sum_n pibar_n pi^(n): fused = expert_weights . F
  std::int64_t floor_events = 0;       // filters whose |B| was floored this tick
};

// Initial generator: off-diagonals 1/(N-1), diagonal -1; [[0]] for N = 1.
inline IntensityMatrix initial_intensity(std::size_t n) {
  if (n == 1) return IntensityMatrix::zero(1);
  Matrix q(n, n, 1.0 / static_cast<double>(n - 1));
  for (std::size_t i = 0; i < n; ++i) q(i, i) = -1.0;
  return IntensityMatrix(std::move(q));
}

class MoefEngine {
 public:
  MoefEngine(std::size_t n_experts, FusionConfig config) : config_(config) {
    if (n_experts < 1) throw DomainError("init_engine: n_experts must be >= 1");
    config_.validate();
    belief_.experts.assign(n_experts, ExpertFilterState{SimplexVector::uniform(n_experts), 0.0, {}});
    belief_.q = initial_intensity(n_experts);
  }

  std::size_t size() const noexcept { return belief_.experts.size(); }
  const FusionConfig& config() const noexcept { return config_; }
  const BeliefState& belief() const noexcept { return belief_; }

  void set_parallel(bool on) noexcept { parallel_ = on; }
  bool parallel() const noexcept { return parallel_; }

  // Keep the last `capacity` tick outputs; 0 disables the ring.
  void set_history_capacity(std::size_t capacity) {
    history_capacity_ = capacity;
    while (history_.size() > history_capacity_) history_.pop_front();
  }
  const std::deque<TickOutput>& history() const noexcept { return history_; }

  TickOutput tick(const ObservationRecord& obs) {
    const std::size_t N = size();
    if (obs.predictions.size() != N)
      throw DomainError("tick: expected " + std::to_string(N) + " predictions, got " +
                        std::to_string(obs.predictions.size()));
    if (!std::isfinite(obs.y) || !all_finite(obs.predictions))
      throw NumericalFailure("tick: non-finite observation");
    if (belief_.last_t && obs.t <= *belief_.last_t)
      throw SequenceError("tick: t must be strictly increasing (previous " +
                          std::to_string(*belief_.last_t) + ")");
    if (config_.loss == Loss::BCE && !(obs.y >= 0.0 && obs.y <= 1.0))
      throw DomainError("tick: BCE target must lie in [0,1]");

    const std::vector<double> F = ingest_predictions(obs.predictions, config_);
    std::vector<FilterStepResult> steps(N);
    std::vector<std::size_t> idx(N);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto run_one = [&](std::size_t n) {
      steps[n] = filter_step(belief_.experts[n], n, belief_.q, obs.y, F, config_, belief_.ticks);
    };
    if (parallel_ && N > 1)
      std::for_each(std::execution::par, idx.begin(), idx.end(), run_one);
    else
      std::for_each(idx.begin(), idx.end(), run_one);

    TickOutput out;
    out.t = obs.t;
    out.y = obs.y;
    out.estimates.resize(N);
    std::vector<double> scores(N);
    for (std::size_t n = 0; n < N; ++n) {
      out.estimates[n] = expert_estimate(steps[n].state.pi, F);
      scores[n] = expert_score(obs.y, out.estimates[n], config_.loss, config_.eps_f);
      if (steps[n].b_floored) ++out.floor_events;
    }

    AggregationResult agg = aggregate(scores, out.estimates, config_.lambda, config_.alpha, config_.q_diag);
    if (!std::isfinite(agg.fused)) throw NumericalFailure("tick: fused prediction is not finite");

    out.expert_weights.assign(N, 0.0);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t k = 0; k < N; ++k) out.expert_weights[k] += agg.pi_bar[n] * steps[n].state.pi[k];

    out.fused = agg.fused;
    out.pi_bar = std::move(agg.pi_bar);
    out.scores = std::move(scores);
    out.q_next = agg.q_next;

    for (std::size_t n = 0; n < N; ++n) belief_.experts[n] = std::move(steps[n].state);
    belief_.q = std::move(agg.q_next);
    belief_.ticks += 1;
    belief_.last_t = obs.t;

    if (history_capacity_ > 0) {
      history_.push_back(out);
      if (history_.size() > history_capacity_) history_.pop_front();
    }
    return out;
  }

 private:
  FusionConfig config_;
  BeliefState belief_;
  bool parallel_ = false;
  std::size_t history_capacity_ = 0;
  std::deque<TickOutput> history_;
};

inline MoefEngine init_engine(std::size_t n_experts, const FusionConfig& config) {
  return MoefEngine(n_experts, config);
}

inline TickOutput tick(MoefEngine& engine, const ObservationRecord& obs) { return engine.tick(obs); }

// Folds tick over the stream. Errors are rethrown with the offending t
// prepended, keeping their type.
inline std::vector<TickOutput> run_stream(MoefEngine& engine, std::span<const ObservationRecord> observations) {
  std::vector<TickOutput> out;
  out.reserve(observations.size());
  for (const auto& obs : observations) {
    const std::string at = "t=" + std::to_string(obs.t) + ": ";
    try {
      out.push_back(engine.tick(obs));
    } catch (const DomainError& e) {
      throw DomainError(at + e.what());
    } catch (const SequenceError& e) {
      throw SequenceError(at + e.what());
    } catch (const NumericalFailure& e) {
      throw NumericalFailure(at + e.what());
    }
  }
  return out;
}

}  // namespace moef
