#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coride/environment.hpp"
#include "coride/market.hpp"
#include "coride/rng.hpp"

namespace coride {

/// Rule-based dispatchers. All of them match real orders only.
///   Ran: uniform random subset in random order.
///   Res: shortest duration first, then highest price.
///   Rev: highest price first, then shortest duration.
/// Remaining ties go to the lower order id.
enum class RuleKind { Ran, Res, Rev };

RuleKind parse_rule(const std::string& name);
std::string rule_name(RuleKind kind);

/// Up to min(idle, pending) real orders for one grid.
std::vector<Order> decide(RuleKind kind, const SimState& state, GridId grid, Rng& rng);

/// Decisions for every grid; RAN draws from a per-grid stream of (seed, episode, clock, grid).
Decisions decide_all(RuleKind kind, const SimState& state, std::uint64_t seed, int episode);

/// One full episode under a rule policy.
EpisodeMetrics run_rule_episode(RuleKind kind, const Scenario& scenario, std::uint64_t seed, int episode,
                                const StepObserver& observer = {});

}  // namespace coride
