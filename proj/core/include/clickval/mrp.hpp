#pragma once

#include <cstdint>
#include <vector>

#include "clickval/journey.hpp"

namespace clickval {

/// Small tabular Markov reward process used as the exact oracle for TD
/// learning. Rewards attach to the state being entered: a step into state j
/// yields r[j], so the value satisfies V = P (r + gamma * V).
struct TabularMRP {
  int n_states = 0;
  std::vector<std::vector<double>> p;  // row-stochastic transition matrix
  std::vector<double> r;               // reward received on entering a state
  double gamma = 0.9;

  void validate() const;  // throws on shape mismatch or non-stochastic rows
};

/// Exact solution of V = P (r + gamma V) by direct linear solve. The result
/// satisfies the fixed point to better than 1e-10 in the max norm.
std::vector<double> exact_values(const TabularMRP& mrp);

/// Sample fixed-length trajectories and wrap them as journeys with
/// state index == action index, so the TD learner can consume them through
/// the ordinary pipeline. Initial states are uniform.
std::vector<Journey> journeys_from_mrp(const TabularMRP& mrp, int n_journeys, int len,
                                       uint64_t seed);

/// Seeded random row-stochastic MRP with rewards uniform in [0, 1).
TabularMRP random_mrp(int n_states, double gamma, uint64_t seed);

}  // namespace clickval
