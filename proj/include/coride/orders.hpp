#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "coride/hexgrid.hpp"
#include "coride/market.hpp"
#include "coride/rng.hpp"

namespace coride {

/// One row of an order history file.
struct HistoryRecord {
  long timestep = 0;
  GridId origin = 0;
  GridId destination = 0;
  double price = 0.0;
  int duration = 1;
};

struct HistoryLoadResult {
  std::vector<HistoryRecord> records;
  std::vector<std::string> diagnostics;  // "line N: reason"
};

/// Reads `timestep, origin_grid, dest_grid, price, duration` rows (header
/// required). Malformed rows are skipped with a diagnostic, or throw
/// std::invalid_argument in strict mode.
HistoryLoadResult load_order_history(std::istream& in, const GridWorld& world, bool strict);
HistoryLoadResult load_order_history_file(const std::string& path, const GridWorld& world, bool strict);

class OrderSource {
 public:
  virtual ~OrderSource() = default;
  /// Orders appearing at simulator step `clock`. Ids are drawn from next_id.
  virtual std::vector<Order> generate(const GridWorld& world, int clock, Rng& rng, std::int64_t& next_id) const = 0;
};

/// Bootstraps orders from a history table: rows with timestep in
/// [interval * t, interval * (t + 1)) are kept independently with the origin
/// grid's sampling rate.
class HistoryOrderSource final : public OrderSource {
 public:
  HistoryOrderSource(std::vector<HistoryRecord> records, long interval, std::vector<double> sampling_rates);
  std::vector<Order> generate(const GridWorld& world, int clock, Rng& rng, std::int64_t& next_id) const override;

 private:
  std::vector<HistoryRecord> records_;  // sorted by timestep
  long interval_;
  std::vector<double> sampling_;
};

/// Trip attribute model for synthetic orders. Duration is the hop distance
/// (at least one step) plus an occasional extra step; price is a base fare
/// plus a per-step fare with multiplicative jitter.
struct TripModel {
  double base_fare = 2.0;
  double fare_per_step = 1.5;
  double price_jitter = 0.2;
  double extra_step_probability = 0.3;
  // Relative destination weights per grid; empty means uniform.
  std::vector<double> destination_weights;
};

/// Per-grid Poisson demand with a time-of-day rate table.
class SyntheticOrderSource final : public OrderSource {
 public:
  /// rates: buckets x grids, bucket-major. sampling_rates thin each origin.
  SyntheticOrderSource(int buckets, int steps_per_day, std::vector<double> rates, std::vector<double> sampling_rates,
                       TripModel trips);
  std::vector<Order> generate(const GridWorld& world, int clock, Rng& rng, std::int64_t& next_id) const override;

  double rate(int clock, GridId grid) const;
  const std::vector<double>& sampling_rates() const { return sampling_; }

 private:
  int buckets_;
  int steps_per_day_;
  std::vector<double> rates_;
  std::vector<double> sampling_;
  TripModel trips_;
};

/// Generates the orders for state.clock and validates their grids.
std::vector<Order> generate_orders(const GridWorld& world, const SimState& state, const OrderSource& source, Rng& rng,
                                   std::int64_t& next_id);

/// Places generated orders into the state's pending lists.
void post_orders(SimState& state, const std::vector<Order>& orders);

/// Optional vehicle online/offline churn with per-grid Poisson rates.
struct ChurnModel {
  std::vector<double> online_rate;
  std::vector<double> offline_rate;
  bool enabled() const { return !online_rate.empty() || !offline_rate.empty(); }
};

/// Returns the net change in vehicle count.
int apply_churn(SimState& state, const ChurnModel& churn, Rng& rng);

/// Spreads `fleet_size` vehicles over grids, proportional to weights (uniform
/// when empty), with the remainder placed at random.
std::vector<int> place_fleet(int grids, int fleet_size, const std::vector<double>& weights, Rng& rng);

}  // namespace coride
