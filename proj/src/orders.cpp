#include "coride/orders.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace coride {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  return fields;
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  std::istringstream in(text);
  in >> out;
  return !in.fail() && in.eof();
}

}  // namespace

HistoryLoadResult load_order_history(std::istream& in, const GridWorld& world, bool strict) {
  HistoryLoadResult result;
  std::string line;
  int line_no = 0;
  auto reject = [&](const std::string& reason) {
    std::string message = "line " + std::to_string(line_no) + ": " + reason;
    if (strict) throw std::invalid_argument("order history " + message);
    result.diagnostics.push_back(std::move(message));
  };

  if (!std::getline(in, line)) throw std::invalid_argument("order history is empty (header row required)");
  ++line_no;
  const std::vector<std::string> expected = {"timestep", "origin_grid", "dest_grid", "price", "duration"};
  if (split_fields(line) != expected) {
    throw std::invalid_argument("order history header must be: timestep, origin_grid, dest_grid, price, duration");
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 5) {
      reject("expected 5 fields, got " + std::to_string(fields.size()));
      continue;
    }
    HistoryRecord rec;
    if (!parse_number(fields[0], rec.timestep) || !parse_number(fields[1], rec.origin) ||
        !parse_number(fields[2], rec.destination) || !parse_number(fields[3], rec.price) ||
        !parse_number(fields[4], rec.duration)) {
      reject("unparseable field");
      continue;
    }
    if (!world.contains(rec.origin) || !world.contains(rec.destination)) {
      reject("unknown grid");
      continue;
    }
    if (rec.timestep < 0 || !(rec.price > 0.0) || !std::isfinite(rec.price) || rec.duration < 1) {
      reject("timestep must be >= 0, price > 0 and duration >= 1");
      continue;
    }
    result.records.push_back(rec);
  }
  return result;
}

HistoryLoadResult load_order_history_file(const std::string& path, const GridWorld& world, bool strict) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open order history " + path);
  return load_order_history(in, world, strict);
}

HistoryOrderSource::HistoryOrderSource(std::vector<HistoryRecord> records, long interval,
                                       std::vector<double> sampling_rates)
    : records_(std::move(records)), interval_(interval), sampling_(std::move(sampling_rates)) {
  if (interval_ <= 0) throw std::invalid_argument("history interval must be positive");
  std::stable_sort(records_.begin(), records_.end(),
                   [](const HistoryRecord& a, const HistoryRecord& b) { return a.timestep < b.timestep; });
}

std::vector<Order> HistoryOrderSource::generate(const GridWorld& world, int clock, Rng& rng,
                                                std::int64_t& next_id) const {
  const long lo = interval_ * clock;
  const long hi = interval_ * (clock + 1L);
  auto first = std::lower_bound(records_.begin(), records_.end(), lo,
                                [](const HistoryRecord& r, long t) { return r.timestep < t; });
  std::vector<Order> orders;
  for (auto it = first; it != records_.end() && it->timestep < hi; ++it) {
    if (!world.contains(it->origin) || !world.contains(it->destination)) {
      throw std::invalid_argument("history record references unknown grid");
    }
    const double rate = sampling_.empty() ? 1.0 : sampling_.at(it->origin);
    // Draw for every row so the stream does not depend on the rates.
    const double u = uniform01(rng);
    if (u < rate) {
      orders.push_back({next_id++, it->origin, it->destination, it->price, it->duration, OrderKind::Real});
    }
  }
  return orders;
}

SyntheticOrderSource::SyntheticOrderSource(int buckets, int steps_per_day, std::vector<double> rates,
                                           std::vector<double> sampling_rates, TripModel trips)
    : buckets_(buckets),
      steps_per_day_(steps_per_day),
      rates_(std::move(rates)),
      sampling_(std::move(sampling_rates)),
      trips_(std::move(trips)) {
  if (buckets_ <= 0 || steps_per_day_ <= 0) throw std::invalid_argument("synthetic source: bad calendar");
  if (rates_.empty() || rates_.size() % static_cast<std::size_t>(buckets_) != 0) {
    throw std::invalid_argument("synthetic source: rate table must be buckets x grids");
  }
  for (double r : rates_) {
    if (!(r >= 0.0)) throw std::invalid_argument("synthetic source: rates must be non-negative");
  }
  for (double s : sampling_) {
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("sampling rates must lie in [0, 1]");
  }
}

double SyntheticOrderSource::rate(int clock, GridId grid) const {
  const int grids = static_cast<int>(rates_.size()) / buckets_;
  if (grid < 0 || grid >= grids) throw std::invalid_argument("synthetic source: unknown grid");
  const int b = time_bucket(clock, steps_per_day_, buckets_);
  const double sampling = sampling_.empty() ? 1.0 : sampling_.at(grid);
  return rates_[static_cast<std::size_t>(b) * grids + grid] * sampling;
}

std::vector<Order> SyntheticOrderSource::generate(const GridWorld& world, int clock, Rng& rng,
                                                  std::int64_t& next_id) const {
  const int grids = static_cast<int>(rates_.size()) / buckets_;
  if (grids != world.size()) throw std::invalid_argument("synthetic rate table does not match world size");
  std::vector<double> weights = trips_.destination_weights;
  if (weights.empty()) weights.assign(world.size(), 1.0);
  if (static_cast<int>(weights.size()) != world.size()) {
    throw std::invalid_argument("destination weights do not match world size");
  }
  std::vector<double> cumulative(weights.size());
  std::partial_sum(weights.begin(), weights.end(), cumulative.begin());
  const double total_weight = cumulative.back();
  if (!(total_weight > 0.0)) throw std::invalid_argument("destination weights must not all be zero");

  std::vector<Order> orders;
  for (GridId g = 0; g < grids; ++g) {
    const double lambda = rate(clock, g);
    if (lambda <= 0.0) continue;
    std::poisson_distribution<int> count(lambda);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      const double u = uniform01(rng) * total_weight;
      GridId dest = static_cast<GridId>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
      dest = std::min(dest, grids - 1);
      int duration = std::max(1, world.distance(g, dest));
      if (uniform01(rng) < trips_.extra_step_probability) ++duration;
      const double jitter = 1.0 + trips_.price_jitter * (2.0 * uniform01(rng) - 1.0);
      const double price = std::max(0.01, (trips_.base_fare + trips_.fare_per_step * duration) * jitter);
      orders.push_back({next_id++, g, dest, price, duration, OrderKind::Real});
    }
  }
  return orders;
}

std::vector<Order> generate_orders(const GridWorld& world, const SimState& state, const OrderSource& source, Rng& rng,
                                   std::int64_t& next_id) {
  auto orders = source.generate(world, state.clock, rng, next_id);
  for (const Order& o : orders) {
    if (!world.contains(o.origin) || !world.contains(o.destination)) {
      throw std::invalid_argument("generated order " + std::to_string(o.id) + " references an unknown grid");
    }
  }
  return orders;
}

void post_orders(SimState& state, const std::vector<Order>& orders) {
  for (const Order& o : orders) state.pending.at(o.origin).push_back(o);
}

int apply_churn(SimState& state, const ChurnModel& churn, Rng& rng) {
  int delta = 0;
  for (GridId g = 0; g < state.grid_count(); ++g) {
    if (g < static_cast<int>(churn.offline_rate.size()) && churn.offline_rate[g] > 0.0) {
      std::poisson_distribution<int> off(churn.offline_rate[g]);
      const int leaving = std::min(off(rng), state.idle[g]);
      state.idle[g] -= leaving;
      state.fleet_group[g] = std::min(state.fleet_group[g], state.idle[g]);
      delta -= leaving;
    }
    if (g < static_cast<int>(churn.online_rate.size()) && churn.online_rate[g] > 0.0) {
      std::poisson_distribution<int> on(churn.online_rate[g]);
      const int joining = on(rng);
      state.idle[g] += joining;
      delta += joining;
    }
  }
  return delta;
}

std::vector<int> place_fleet(int grids, int fleet_size, const std::vector<double>& weights, Rng& rng) {
  if (grids <= 0 || fleet_size < 0) throw std::invalid_argument("place_fleet: bad arguments");
  std::vector<double> w = weights.empty() ? std::vector<double>(grids, 1.0) : weights;
  if (static_cast<int>(w.size()) != grids) throw std::invalid_argument("place_fleet: weight size mismatch");
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("place_fleet: weights must not all be zero");
  std::vector<int> idle(grids, 0);
  int placed = 0;
  for (int g = 0; g < grids; ++g) {
    idle[g] = static_cast<int>(std::floor(fleet_size * w[g] / total));
    placed += idle[g];
  }
  std::vector<double> cumulative(w.size());
  std::partial_sum(w.begin(), w.end(), cumulative.begin());
  while (placed < fleet_size) {
    const double u = uniform01(rng) * total;
    int g = static_cast<int>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    ++idle[std::min(g, grids - 1)];
    ++placed;
  }
  return idle;
}

}  // namespace coride
