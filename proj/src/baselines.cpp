#include "coride/baselines.hpp"

#include <algorithm>
#include <stdexcept>

namespace coride {

RuleKind parse_rule(const std::string& name) {
  if (name == "ran") return RuleKind::Ran;
  if (name == "res") return RuleKind::Res;
  if (name == "rev") return RuleKind::Rev;
  throw std::invalid_argument("unknown rule policy '" + name + "'");
}

std::string rule_name(RuleKind kind) {
  switch (kind) {
    case RuleKind::Ran: return "ran";
    case RuleKind::Res: return "res";
    case RuleKind::Rev: return "rev";
  }
  return "?";
}

std::vector<Order> decide(RuleKind kind, const SimState& state, GridId grid, Rng& rng) {
  std::vector<Order> orders;
  for (const auto& o : state.pending.at(grid)) {
    if (!o.is_fake()) orders.push_back(o);
  }
  const auto k = static_cast<std::size_t>(std::min<long>(state.idle.at(grid), static_cast<long>(orders.size())));
  if (k == 0) return {};

  if (kind == RuleKind::Ran) {
    // Partial Fisher-Yates keeps the draw sequence independent of the library.
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_index(rng, static_cast<int>(orders.size() - i)));
      std::swap(orders[i], orders[j]);
    }
  } else {
    const auto by_id = [](const Order& a, const Order& b) { return a.id < b.id; };
    std::sort(orders.begin(), orders.end(), [&](const Order& a, const Order& b) {
      if (kind == RuleKind::Res) {
        if (a.duration != b.duration) return a.duration < b.duration;
        if (a.price != b.price) return a.price > b.price;
      } else {
        if (a.price != b.price) return a.price > b.price;
        if (a.duration != b.duration) return a.duration < b.duration;
      }
      return by_id(a, b);
    });
  }
  orders.resize(k);
  return orders;
}

Decisions decide_all(RuleKind kind, const SimState& state, std::uint64_t seed, int episode) {
  Decisions d(state.grid_count());
  for (GridId g = 0; g < state.grid_count(); ++g) {
    Rng rng = make_stream({seed, tag(StreamTag::Policy), static_cast<std::uint64_t>(episode),
                           static_cast<std::uint64_t>(state.clock), static_cast<std::uint64_t>(g)});
    d[g] = decide(kind, state, g, rng);
  }
  return d;
}

EpisodeMetrics run_rule_episode(RuleKind kind, const Scenario& scenario, std::uint64_t seed, int episode,
                                const StepObserver& observer) {
  SimState state = begin_episode(scenario, seed, episode);
  EpisodeMetrics metrics;
  std::int64_t next_id = 0;
  for (int t = 0; t < scenario.env.steps; ++t) {
    open_step(scenario, state, seed, episode, next_id);
    const Decisions d = decide_all(kind, state, seed, episode);
    if (observer) observer(state, d);
    auto [next, outcome] = step(*scenario.world, state, d);
    metrics.add(outcome);
    state = std::move(next);
  }
  return metrics;
}

}  // namespace coride
