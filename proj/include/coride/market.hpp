#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "coride/hexgrid.hpp"

namespace coride {

enum class OrderKind : std::uint8_t { Real = 0, Fake = 1 };

/// A trip request or a repositioning item. Fake orders carry price 0,
/// duration 1 and a destination in neighbors(origin) or origin itself.
struct Order {
  std::int64_t id = 0;
  GridId origin = 0;
  GridId destination = 0;
  double price = 0.0;
  int duration = 1;
  OrderKind kind = OrderKind::Real;

  bool is_fake() const { return kind == OrderKind::Fake; }
  bool operator==(const Order&) const = default;
};

struct Arrival {
  GridId grid = 0;
  int count = 0;
  bool via_fleet = false;
};

struct SimState {
  int clock = 0;
  std::vector<int> idle;
  // Vehicles that arrived through a fleet move at the start of this step.
  std::vector<int> fleet_group;
  std::vector<std::vector<Order>> pending;
  // Future timestep -> vehicles becoming idle at that step.
  std::map<int, std::vector<Arrival>> in_transit;

  int grid_count() const { return static_cast<int>(idle.size()); }
  int idle_vehicles() const;
  int transit_vehicles() const;
  int total_vehicles() const { return idle_vehicles() + transit_vehicles(); }
  int pending_orders() const;
};

SimState make_state(const GridWorld& world, std::vector<int> idle);

/// Per-worker observation <N_v, N_o, E, N_f, D_o>. The order summary D_o is
/// [mean price, std price, mean duration, std duration, order count].
struct Observation {
  static constexpr int kOrderStats = 5;
  static constexpr int kLength = 4 + kOrderStats;

  int n_vehicles = 0;
  int n_orders = 0;
  double entropy = 0.0;
  int n_fleet = 0;
  std::array<double, kOrderStats> order_stats{};

  Eigen::VectorXd flatten() const;
};

/// Market entropy -k_B * rho * ln(rho) with rho = min(N_v, N_o) / max(N_v, N_o).
/// Zero when either count is zero.
double entropy(int n_vehicles, int n_orders, double boltzmann = 1.0);

std::vector<Order> build_fake_orders(const GridWorld& world, GridId grid);

Observation observe_worker(const SimState& state, GridId grid);

/// Member observations in canonical order, zero-padded to the largest district.
Eigen::VectorXd observe_manager(const GridWorld& world, const SimState& state, DistrictId district);

struct ServedOrder {
  Order order;
  GridId origin = 0;
};

struct FleetMove {
  GridId origin = 0;
  GridId destination = 0;
  int count = 0;
};

struct StepOutcome {
  std::vector<ServedOrder> served_real;
  std::vector<FleetMove> fleet_moves;
  double adi_delta = 0.0;
  int orr_numerator = 0;
  int orr_denominator = 0;
  int ast_delta = 0;
  int tnf_delta = 0;
};

/// Selected items per grid; an empty outer vector means no decisions at all.
using Decisions = std::vector<std::vector<Order>>;

/// Advances one timestep: dispatches the selected items, expires unserved
/// orders, advances the clock and lands arrivals due at the new clock.
/// Throws std::invalid_argument on an unknown order or over-allocation.
std::pair<SimState, StepOutcome> step(const GridWorld& world, const SimState& state, const Decisions& decisions);

// ---- reward shaping -------------------------------------------------------

double poisson_kl(double rate_p, double rate_q);

/// Per-grid per-bucket observations of order and idle-vehicle counts.
class CountHistory {
 public:
  CountHistory(int grids, int buckets);
  void record(int bucket, GridId grid, int orders, int vehicles);
  void record_state(const SimState& state, int bucket);
  int grids() const { return grids_; }
  int buckets() const { return buckets_; }
  const std::vector<int>& orders(int bucket, GridId grid) const { return orders_[index(bucket, grid)]; }
  const std::vector<int>& vehicles(int bucket, GridId grid) const { return vehicles_[index(bucket, grid)]; }
  bool empty() const;

 private:
  std::size_t index(int bucket, GridId grid) const;
  int grids_;
  int buckets_;
  std::vector<std::vector<int>> orders_;
  std::vector<std::vector<int>> vehicles_;
};

struct PoissonRates {
  int grids = 0;
  int buckets = 0;
  std::vector<double> order_rate;    // bucket-major
  std::vector<double> vehicle_rate;  // bucket-major

  double orders(int bucket, GridId grid) const { return order_rate[bucket * grids + grid]; }
  double vehicles(int bucket, GridId grid) const { return vehicle_rate[bucket * grids + grid]; }
};

inline constexpr double kRateFloor = 1e-6;

/// Sample-mean rates per (bucket, grid), floored at kRateFloor.
PoissonRates fit_poisson_rates(const CountHistory& history, double floor = kRateFloor);

int time_bucket(int clock, int steps_per_day, int buckets);

struct WorldStats {
  double mean_entropy = 0.0;
  double std_entropy = 0.0;
  std::vector<double> grid_entropy;
  std::vector<bool> is_area;
  const PoissonRates* rates = nullptr;
  int bucket = 0;
};

/// Entropy statistics of a pre-decision state. Area grids deviate from the
/// mean entropy by more than one standard deviation.
WorldStats compute_world_stats(const SimState& state, const PoissonRates* rates, int bucket);

struct ManagerReward {
  double adi = 0.0;
  double entropy_penalty = 0.0;
  double kl_penalty = 0.0;
  double total() const { return adi - entropy_penalty - kl_penalty; }
};

ManagerReward manager_reward_parts(const GridWorld& world, const SimState& before, const StepOutcome& outcome,
                                   DistrictId district, const WorldStats& stats);

/// r_ADI + r_ORR with both imbalance terms entering as penalties.
double manager_reward(const GridWorld& world, const SimState& before, const StepOutcome& outcome,
                      DistrictId district, const WorldStats& stats);

// ---- episode metrics ------------------------------------------------------

struct EpisodeMetrics {
  double adi = 0.0;
  long served = 0;
  long generated = 0;
  long ast = 0;
  long tnf = 0;

  void add(const StepOutcome& outcome);
  double orr() const { return generated == 0 ? 0.0 : static_cast<double>(served) / generated; }
};

}  // namespace coride
