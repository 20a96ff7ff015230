#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "coride/agents.hpp"
#include "coride/baselines.hpp"
#include "coride/environment.hpp"
#include "coride/hexgrid.hpp"
#include "coride/orders.hpp"
#include "coride/training.hpp"

namespace coride {

inline constexpr int kOutputFormatVersion = 1;

/// Three mutually adjacent 7-cell districts (red, yellow, green) with
/// homogeneous Poisson demand thinned per district by 1, 1 - DR and 1 - 2 DR.
struct CaseStudyConfig {
  double discount_rate = 0.2;
  double base_rate = 1.0;  // orders per grid per step before thinning
  TripModel trips;
};

struct CaseStudy {
  GridWorld world;
  std::vector<double> sampling_rates;  // per grid
  std::unique_ptr<SyntheticOrderSource> source;
};

/// Throws std::invalid_argument unless 0 <= DR < 0.5.
CaseStudy build_case_study_world(const CaseStudyConfig& config, int steps_per_day);

enum class PolicyKind { CoRide, CoRidePlus, Ran, Res, Rev };

PolicyKind parse_policy(const std::string& name);
std::string policy_name(PolicyKind kind);
bool is_learned(PolicyKind kind);

struct ExperimentConfig {
  std::string world_spec;  // empty = case-study world
  CaseStudyConfig case_study;
  std::string history_path;  // empty = synthetic demand
  long history_interval = 600;
  double history_sampling = 1.0;
  EnvConfig env;
  TrainConfig train;
  std::string policy = "coride+";
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  int eval_episodes = 1;
  double eval_temperature = 0.01;
  bool trace = true;
  int trace_grid = 12;
  int trace_horizon = 10;
  bool record_attention = true;
  std::string out = "out";
};

/// One documented configuration key.
struct ConfigKey {
  std::string section;
  std::string key;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<ConfigKey>& config_schema();

/// INI-style text: `[section]` headers, `key = value`, `;` or `#` comments.
/// Unknown sections or keys throw std::invalid_argument naming the key.
ExperimentConfig parse_experiment_config(std::istream& in);
ExperimentConfig load_experiment_config(const std::string& path);
void write_experiment_config(std::ostream& out, const ExperimentConfig& config);
/// Every key with its default, for --help.
std::string describe_config_defaults();

/// World, order source and episode settings resolved from a config.
struct BuiltScenario {
  GridWorld world;
  std::unique_ptr<OrderSource> source;
  EnvConfig env;
  Scenario scenario() const { return {&world, source.get(), env}; }
};

BuiltScenario build_scenario(const ExperimentConfig& config);

/// Follows one vehicle from a start grid. Tokens: destination id for a new
/// trip, "_id" for a fleet move, "O" while on service, "W" while waiting.
/// Tracing starts at the first observed step with an idle vehicle at the start grid.
class VehicleTracer {
 public:
  VehicleTracer(const GridWorld& world, GridId start, int horizon, std::uint64_t seed);

  void observe(const SimState& state, const Decisions& decisions);
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::string str() const;

 private:
  GridId grid_;
  int horizon_;
  Rng rng_;
  bool started_ = false;
  int busy_until_ = -1;
  std::vector<std::string> tokens_;
};

struct SeedSummary {
  std::uint64_t seed = 0;
  EpisodeMetrics policy;
  EpisodeMetrics ran;
  std::vector<EpisodeLog> logs;
  std::vector<std::string> trace;
};

/// Percentage change of value over a reference; 0 when the reference is 0.
double normalized_pct(double value, double reference);

/// Evaluation episodes use indices starting here so they never share
/// demand draws with training episodes.
inline constexpr int kEvalEpisodeBase = 1000;

/// Trains (learned policies) and evaluates one seed, writing its artifacts
/// under `dir` when non-empty.
SeedSummary run_seed(const ExperimentConfig& config, const BuiltScenario& built, std::uint64_t seed,
                     const std::string& dir);

/// Full experiment: config copy, format stamp, per-seed artifacts and a
/// summary table. Returns the per-seed summaries.
std::vector<SeedSummary> run_experiment(const ExperimentConfig& config);

void write_summary(std::ostream& out, PolicyKind kind, const std::vector<SeedSummary>& rows);
void write_attention_csv(std::ostream& out, const std::vector<AttentionRecord>& records);

/// Loads a checkpoint and writes attention weights of one evaluation episode.
void export_attention(const ExperimentConfig& config, const std::string& checkpoint, std::uint64_t seed,
                      std::ostream& out);

}  // namespace coride
