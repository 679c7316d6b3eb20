#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "moef/simulator.hpp"
#include "moef/types.hpp"

namespace moef::cli {

struct SuiteResult {
  std::string name;
  bool passed = true;
  double worst = 0.0;      // worst observed value of the suite's statistic
  double threshold = 0.0;  // pass iff worst <= threshold (or as noted per suite)
  nlohmann::ordered_json worst_case;
};

// Uniform draw from the simplex, rejected until every entry is >= min_entry.
SimplexVector random_simplex(Rng& rng, std::size_t n, double min_entry = 0.0);

// ||exp(log P) - P||_inf over random (pibar, alpha), alpha in {0.5, 0.9, 1 - 1/N^2}, N in 2..10.
SuiteResult matrix_log_roundtrip_suite(std::int64_t trials, std::uint64_t seed);

// Objective gap of softmin against a 0.001 simplex grid, N in 1..3.
SuiteResult softmin_grid_suite(std::int64_t trials, std::uint64_t seed);

// max_i KL(pibar || row i of P^alpha) - bound over random instances with pi_min >= 1e-3.
SuiteResult kl_bound_suite(std::int64_t trials, std::uint64_t seed);

// Monte-Carlo variance of driftless paths against the closed-form law (alpha = 0 and alpha > 0).
SuiteResult variance_suite(std::int64_t paths, std::uint64_t seed);

}  // namespace moef::cli
