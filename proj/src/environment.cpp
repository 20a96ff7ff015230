#include "coride/environment.hpp"

#include <stdexcept>

#include "coride/rng.hpp"

namespace coride {

namespace {
constexpr std::uint64_t kFleetStream = 0xf1ee7;
}

SimState begin_episode(const Scenario& scenario, std::uint64_t seed, int episode) {
  if (!scenario.world || !scenario.source) throw std::invalid_argument("scenario needs a world and an order source");
  if (scenario.env.steps < 1) throw std::invalid_argument("episode needs at least one step");
  Rng rng = make_stream({seed, tag(StreamTag::Orders), static_cast<std::uint64_t>(episode), kFleetStream});
  auto idle = place_fleet(scenario.world->size(), scenario.env.fleet_size, scenario.env.fleet_weights, rng);
  return make_state(*scenario.world, std::move(idle));
}

void open_step(const Scenario& scenario, SimState& state, std::uint64_t seed, int episode, std::int64_t& next_id) {
  const auto e = static_cast<std::uint64_t>(episode);
  const auto c = static_cast<std::uint64_t>(state.clock);
  Rng orders = make_stream({seed, tag(StreamTag::Orders), e, c});
  post_orders(state, generate_orders(*scenario.world, state, *scenario.source, orders, next_id));
  if (scenario.env.churn.enabled()) {
    Rng churn = make_stream({seed, tag(StreamTag::Churn), e, c});
    apply_churn(state, scenario.env.churn, churn);
  }
}

}  // namespace coride
