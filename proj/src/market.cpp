#include "coride/market.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace coride {

int SimState::idle_vehicles() const { return std::accumulate(idle.begin(), idle.end(), 0); }

int SimState::transit_vehicles() const {
  int total = 0;
  for (const auto& [when, arrivals] : in_transit) {
    for (const Arrival& a : arrivals) total += a.count;
  }
  return total;
}

int SimState::pending_orders() const {
  int total = 0;
  for (const auto& orders : pending) total += static_cast<int>(orders.size());
  return total;
}

SimState make_state(const GridWorld& world, std::vector<int> idle) {
  if (static_cast<int>(idle.size()) != world.size()) {
    throw std::invalid_argument("idle vector must have one entry per grid");
  }
  for (int v : idle) {
    if (v < 0) throw std::invalid_argument("negative vehicle count");
  }
  SimState state;
  state.idle = std::move(idle);
  state.fleet_group.assign(world.size(), 0);
  state.pending.assign(world.size(), {});
  return state;
}

Eigen::VectorXd Observation::flatten() const {
  Eigen::VectorXd v(kLength);
  v << n_vehicles, n_orders, entropy, n_fleet, order_stats[0], order_stats[1], order_stats[2], order_stats[3],
      order_stats[4];
  return v;
}

double entropy(int n_vehicles, int n_orders, double boltzmann) {
  if (n_vehicles <= 0 || n_orders <= 0 || n_vehicles == n_orders) return 0.0;
  const double rho = static_cast<double>(std::min(n_vehicles, n_orders)) / std::max(n_vehicles, n_orders);
  return -boltzmann * rho * std::log(rho);
}

std::vector<Order> build_fake_orders(const GridWorld& world, GridId grid) {
  auto neighbors = world.neighbors(grid);
  std::vector<Order> fakes;
  fakes.reserve(neighbors.size() + 1);
  auto make = [grid](GridId dest) {
    return Order{-1 - static_cast<std::int64_t>(dest), grid, dest, 0.0, 1, OrderKind::Fake};
  };
  for (GridId n : neighbors) fakes.push_back(make(n));
  fakes.push_back(make(grid));
  return fakes;
}

Observation observe_worker(const SimState& state, GridId grid) {
  Observation obs;
  if (grid < 0 || grid >= state.grid_count()) return obs;
  obs.n_vehicles = state.idle[grid];
  obs.n_fleet = state.fleet_group[grid];
  const auto& orders = state.pending[grid];
  obs.n_orders = static_cast<int>(orders.size());
  obs.entropy = entropy(obs.n_vehicles, obs.n_orders);
  if (!orders.empty()) {
    const double n = static_cast<double>(orders.size());
    double price = 0.0;
    double duration = 0.0;
    for (const Order& o : orders) {
      price += o.price;
      duration += o.duration;
    }
    price /= n;
    duration /= n;
    double price_var = 0.0;
    double duration_var = 0.0;
    for (const Order& o : orders) {
      price_var += (o.price - price) * (o.price - price);
      duration_var += (o.duration - duration) * (o.duration - duration);
    }
    obs.order_stats = {price, std::sqrt(price_var / n), duration, std::sqrt(duration_var / n), n};
  }
  return obs;
}

Eigen::VectorXd observe_manager(const GridWorld& world, const SimState& state, DistrictId district) {
  constexpr int L = Observation::kLength;
  Eigen::VectorXd joint = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(world.max_district_size()) * L);
  int slot = 0;
  for (GridId g : world.members(district)) {
    joint.segment(static_cast<Eigen::Index>(slot) * L, L) = observe_worker(state, g).flatten();
    ++slot;
  }
  return joint;
}

std::pair<SimState, StepOutcome> step(const GridWorld& world, const SimState& state, const Decisions& decisions) {
  const int n = world.size();
  if (state.grid_count() != n) throw std::invalid_argument("state does not match world");
  if (!decisions.empty() && static_cast<int>(decisions.size()) != n) {
    throw std::invalid_argument("decisions must list every grid");
  }

  SimState next;
  next.clock = state.clock + 1;
  next.idle = state.idle;
  next.fleet_group.assign(n, 0);
  next.pending.assign(n, {});
  next.in_transit = state.in_transit;

  StepOutcome outcome;
  outcome.orr_denominator = state.pending_orders();

  for (GridId g = 0; g < static_cast<int>(decisions.size()); ++g) {
    const auto& items = decisions[g];
    if (static_cast<int>(items.size()) > state.idle[g]) {
      throw std::invalid_argument("grid " + std::to_string(g) + ": " + std::to_string(items.size()) +
                                  " items for " + std::to_string(state.idle[g]) + " idle vehicles");
    }
    std::vector<std::int64_t> taken;
    for (const Order& item : items) {
      if (item.origin != g) throw std::invalid_argument("item origin does not match grid " + std::to_string(g));
      if (item.is_fake()) {
        const bool valid = item.destination == g || world.adjacent(g, item.destination);
        if (!valid || item.duration != 1 || item.price != 0.0) {
          throw std::invalid_argument("invalid fleet item at grid " + std::to_string(g));
        }
        next.in_transit[next.clock].push_back({item.destination, 1, true});
        auto it = std::find_if(outcome.fleet_moves.begin(), outcome.fleet_moves.end(), [&](const FleetMove& m) {
          return m.origin == g && m.destination == item.destination;
        });
        if (it == outcome.fleet_moves.end()) {
          outcome.fleet_moves.push_back({g, item.destination, 1});
        } else {
          ++it->count;
        }
      } else {
        const auto& pending = state.pending[g];
        auto found = std::find_if(pending.begin(), pending.end(), [&](const Order& o) { return o.id == item.id; });
        if (found == pending.end()) {
          throw std::invalid_argument("order " + std::to_string(item.id) + " is not pending at grid " +
                                      std::to_string(g));
        }
        if (std::find(taken.begin(), taken.end(), item.id) != taken.end()) {
          throw std::invalid_argument("order " + std::to_string(item.id) + " selected twice");
        }
        taken.push_back(item.id);
        const Order& order = *found;
        next.in_transit[state.clock + order.duration].push_back({order.destination, 1, false});
        outcome.served_real.push_back({order, g});
        outcome.adi_delta += order.price;
        outcome.ast_delta += order.duration;
        outcome.tnf_delta += 1;
        outcome.orr_numerator += 1;
      }
    }
    next.idle[g] -= static_cast<int>(items.size());
  }

  if (auto due = next.in_transit.find(next.clock); due != next.in_transit.end()) {
    for (const Arrival& a : due->second) {
      next.idle[a.grid] += a.count;
      if (a.via_fleet) next.fleet_group[a.grid] += a.count;
    }
    next.in_transit.erase(due);
  }
  return {std::move(next), std::move(outcome)};
}

double poisson_kl(double rate_p, double rate_q) {
  if (rate_q <= 0.0) throw std::invalid_argument("poisson_kl: reference rate must be positive");
  if (rate_p <= 0.0) return rate_q;
  return rate_p * std::log(rate_p / rate_q) + rate_q - rate_p;
}

CountHistory::CountHistory(int grids, int buckets)
    : grids_(grids),
      buckets_(buckets),
      orders_(static_cast<std::size_t>(grids) * buckets),
      vehicles_(static_cast<std::size_t>(grids) * buckets) {
  if (grids <= 0 || buckets <= 0) throw std::invalid_argument("CountHistory needs grids and buckets");
}

std::size_t CountHistory::index(int bucket, GridId grid) const {
  if (bucket < 0 || bucket >= buckets_ || grid < 0 || grid >= grids_) {
    throw std::out_of_range("CountHistory index out of range");
  }
  return static_cast<std::size_t>(bucket) * grids_ + grid;
}

void CountHistory::record(int bucket, GridId grid, int orders, int vehicles) {
  const auto i = index(bucket, grid);
  orders_[i].push_back(orders);
  vehicles_[i].push_back(vehicles);
}

void CountHistory::record_state(const SimState& state, int bucket) {
  for (GridId g = 0; g < state.grid_count(); ++g) {
    record(bucket, g, static_cast<int>(state.pending[g].size()), state.idle[g]);
  }
}

bool CountHistory::empty() const {
  return std::all_of(orders_.begin(), orders_.end(), [](const auto& v) { return v.empty(); });
}

PoissonRates fit_poisson_rates(const CountHistory& history, double floor) {
  if (history.empty()) throw std::invalid_argument("fit_poisson_rates: empty history");
  PoissonRates rates;
  rates.grids = history.grids();
  rates.buckets = history.buckets();
  auto mean = [floor](const std::vector<int>& xs) {
    if (xs.empty()) return floor;
    const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    return std::max(m, floor);
  };
  for (int b = 0; b < history.buckets(); ++b) {
    for (GridId g = 0; g < history.grids(); ++g) {
      rates.order_rate.push_back(mean(history.orders(b, g)));
      rates.vehicle_rate.push_back(mean(history.vehicles(b, g)));
    }
  }
  return rates;
}

int time_bucket(int clock, int steps_per_day, int buckets) {
  if (steps_per_day <= 0 || buckets <= 0) throw std::invalid_argument("time_bucket: bad calendar");
  const int t = ((clock % steps_per_day) + steps_per_day) % steps_per_day;
  return static_cast<int>(static_cast<long>(t) * buckets / steps_per_day);
}

WorldStats compute_world_stats(const SimState& state, const PoissonRates* rates, int bucket) {
  WorldStats stats;
  stats.rates = rates;
  stats.bucket = bucket;
  const int n = state.grid_count();
  stats.grid_entropy.resize(n);
  for (GridId g = 0; g < n; ++g) {
    stats.grid_entropy[g] = entropy(state.idle[g], static_cast<int>(state.pending[g].size()));
  }
  if (n > 0) {
    stats.mean_entropy = std::accumulate(stats.grid_entropy.begin(), stats.grid_entropy.end(), 0.0) / n;
    double var = 0.0;
    for (double e : stats.grid_entropy) var += (e - stats.mean_entropy) * (e - stats.mean_entropy);
    stats.std_entropy = std::sqrt(var / n);
  }
  stats.is_area.resize(n);
  for (GridId g = 0; g < n; ++g) {
    stats.is_area[g] = std::abs(stats.grid_entropy[g] - stats.mean_entropy) > stats.std_entropy;
  }
  return stats;
}

ManagerReward manager_reward_parts(const GridWorld& world, const SimState& before, const StepOutcome& outcome,
                                   DistrictId district, const WorldStats& stats) {
  ManagerReward reward;
  for (const ServedOrder& s : outcome.served_real) {
    if (world.district_of(s.origin) == district) reward.adi += s.order.price;
  }
  for (GridId g : world.members(district)) {
    const double e = entropy(before.idle[g], static_cast<int>(before.pending[g].size()));
    reward.entropy_penalty += (e - stats.mean_entropy) * (e - stats.mean_entropy);
    if (stats.rates != nullptr && g < static_cast<int>(stats.is_area.size()) && stats.is_area[g]) {
      reward.kl_penalty += poisson_kl(stats.rates->orders(stats.bucket, g), stats.rates->vehicles(stats.bucket, g));
    }
  }
  return reward;
}

double manager_reward(const GridWorld& world, const SimState& before, const StepOutcome& outcome,
                      DistrictId district, const WorldStats& stats) {
  return manager_reward_parts(world, before, outcome, district, stats).total();
}

void EpisodeMetrics::add(const StepOutcome& outcome) {
  adi += outcome.adi_delta;
  served += outcome.orr_numerator;
  generated += outcome.orr_denominator;
  ast += outcome.ast_delta;
  tnf += outcome.tnf_delta;
}

}  // namespace coride
