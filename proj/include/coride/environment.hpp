#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "coride/hexgrid.hpp"
#include "coride/market.hpp"
#include "coride/orders.hpp"

namespace coride {

/// Episode-level settings shared by every policy.
struct EnvConfig {
  int steps = 144;
  int steps_per_day = 144;
  int buckets = 24;  // time buckets for the Poisson rate fit
  int fleet_size = 60;
  std::vector<double> fleet_weights;  // empty = uniform
  ChurnModel churn;
};

/// Called with each pre-decision state and the decisions taken in it.
using StepObserver = std::function<void(const SimState&, const Decisions&)>;

/// World, demand and episode settings bundled for rollouts.
struct Scenario {
  const GridWorld* world = nullptr;
  const OrderSource* source = nullptr;
  EnvConfig env;
};

/// Initial state of an episode. Depends only on (seed, episode), so every
/// policy starts from the same fleet.
SimState begin_episode(const Scenario& scenario, std::uint64_t seed, int episode);

/// Posts this clock's orders and applies churn. Streams depend only on
/// (seed, episode, clock), so demand is identical across policies.
void open_step(const Scenario& scenario, SimState& state, std::uint64_t seed, int episode, std::int64_t& next_id);

}  // namespace coride
