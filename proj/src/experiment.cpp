#include "coride/experiment.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace coride {

namespace fs = std::filesystem;

// ---- case study -------------------------------------------------------------

CaseStudy build_case_study_world(const CaseStudyConfig& config, int steps_per_day) {
  const double dr = config.discount_rate;
  if (!(dr >= 0.0 && dr < 0.5)) throw std::invalid_argument("discount rate must lie in [0, 0.5)");
  if (!(config.base_rate >= 0.0)) throw std::invalid_argument("base rate must be non-negative");

  // Red, yellow and green flower centers; every pair of flowers shares a border.
  const Axial centers[3] = {{0, 0}, {2, 1}, {3, -2}};
  WorldSpec spec;
  for (int d = 0; d < 3; ++d) {
    spec.cells.push_back(centers[d]);
    spec.district_labels.push_back(d);
    for (const Axial& dir : kHexDirections) {
      spec.cells.push_back({centers[d].q + dir.q, centers[d].r + dir.r});
      spec.district_labels.push_back(d);
    }
  }
  CaseStudy cs{build_world(spec), {}, nullptr};
  const double district_rate[3] = {1.0, 1.0 - dr, 1.0 - 2.0 * dr};
  for (GridId g = 0; g < cs.world.size(); ++g) cs.sampling_rates.push_back(district_rate[cs.world.district_of(g)]);
  std::vector<double> rates(static_cast<std::size_t>(cs.world.size()), config.base_rate);
  cs.source = std::make_unique<SyntheticOrderSource>(1, steps_per_day, std::move(rates), cs.sampling_rates,
                                                     config.trips);
  return cs;
}

PolicyKind parse_policy(const std::string& name) {
  if (name == "coride") return PolicyKind::CoRide;
  if (name == "coride+") return PolicyKind::CoRidePlus;
  if (name == "ran") return PolicyKind::Ran;
  if (name == "res") return PolicyKind::Res;
  if (name == "rev") return PolicyKind::Rev;
  throw std::invalid_argument("unknown policy '" + name + "' (expected coride, coride+, ran, res or rev)");
}

std::string policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::CoRide: return "coride";
    case PolicyKind::CoRidePlus: return "coride+";
    case PolicyKind::Ran: return "ran";
    case PolicyKind::Res: return "res";
    case PolicyKind::Rev: return "rev";
  }
  return "?";
}

bool is_learned(PolicyKind kind) { return kind == PolicyKind::CoRide || kind == PolicyKind::CoRidePlus; }

namespace {

RuleKind to_rule(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Ran: return RuleKind::Ran;
    case PolicyKind::Res: return RuleKind::Res;
    case PolicyKind::Rev: return RuleKind::Rev;
    default: throw std::invalid_argument("not a rule policy");
  }
}

// ---- value codecs -------------------------------------------------------------

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw std::invalid_argument("config key '" + key + "': bad value '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw std::invalid_argument("config key '" + key + "': expected true or false, got '" + text + "'");
}

template <typename T>
ConfigKey number_key(std::string section, std::string key, std::string help, T& (*field)(ExperimentConfig&)) {
  const std::string name = section + "." + key;
  return {std::move(section), std::move(key), std::move(help),
          [field, name](ExperimentConfig& c, const std::string& v) { field(c) = parse_number<T>(name, v); },
          [field](const ExperimentConfig& c) {
            ExperimentConfig copy = c;
            if constexpr (std::is_floating_point_v<T>) {
              return fmt(field(copy));
            } else {
              return std::to_string(field(copy));
            }
          }};
}

ConfigKey bool_key(std::string section, std::string key, std::string help, bool& (*field)(ExperimentConfig&)) {
  const std::string name = section + "." + key;
  return {std::move(section), std::move(key), std::move(help),
          [field, name](ExperimentConfig& c, const std::string& v) { field(c) = parse_bool(name, v); },
          [field](const ExperimentConfig& c) {
            ExperimentConfig copy = c;
            return std::string(field(copy) ? "true" : "false");
          }};
}

ConfigKey string_key(std::string section, std::string key, std::string help,
                     std::string& (*field)(ExperimentConfig&)) {
  return {std::move(section), std::move(key), std::move(help),
          [field](ExperimentConfig& c, const std::string& v) { field(c) = v; },
          [field](const ExperimentConfig& c) {
            ExperimentConfig copy = c;
            return field(copy);
          }};
}

std::vector<ConfigKey> make_schema() {
  using C = ExperimentConfig;
  std::vector<ConfigKey> s;
  // world
  s.push_back(string_key("world", "spec", "world spec file; empty selects the 21-grid case-study world",
                         [](C& c) -> std::string& { return c.world_spec; }));
  s.push_back(number_key<double>("world", "discount_rate", "case study: yellow samples 1-DR, green 1-2DR",
                                 [](C& c) -> double& { return c.case_study.discount_rate; }));
  // orders
  s.push_back(string_key("orders", "history", "order history CSV; empty selects synthetic Poisson demand",
                         [](C& c) -> std::string& { return c.history_path; }));
  s.push_back(number_key<long>("orders", "history_interval", "history timestamp units per simulator step",
                               [](C& c) -> long& { return c.history_interval; }));
  s.push_back(number_key<double>("orders", "history_sampling", "keep probability for each history row",
                                 [](C& c) -> double& { return c.history_sampling; }));
  s.push_back(number_key<double>("orders", "base_rate", "synthetic orders per grid per step before thinning",
                                 [](C& c) -> double& { return c.case_study.base_rate; }));
  s.push_back(number_key<double>("orders", "base_fare", "synthetic price intercept",
                                 [](C& c) -> double& { return c.case_study.trips.base_fare; }));
  s.push_back(number_key<double>("orders", "fare_per_step", "synthetic price per trip step",
                                 [](C& c) -> double& { return c.case_study.trips.fare_per_step; }));
  s.push_back(number_key<double>("orders", "price_jitter", "relative uniform price noise",
                                 [](C& c) -> double& { return c.case_study.trips.price_jitter; }));
  s.push_back(number_key<double>("orders", "extra_step_probability", "chance a trip takes one step longer",
                                 [](C& c) -> double& { return c.case_study.trips.extra_step_probability; }));
  // sim
  s.push_back(number_key<int>("sim", "steps", "steps per episode", [](C& c) -> int& { return c.env.steps; }));
  s.push_back(number_key<int>("sim", "steps_per_day", "steps in one day", [](C& c) -> int& { return c.env.steps_per_day; }));
  s.push_back(number_key<int>("sim", "buckets", "time buckets for the Poisson rate fit",
                              [](C& c) -> int& { return c.env.buckets; }));
  s.push_back(number_key<int>("sim", "fleet_size", "vehicles at episode start",
                              [](C& c) -> int& { return c.env.fleet_size; }));
  // agents
  s.push_back(number_key<int>("agents", "hidden", "recurrent and message width",
                              [](C& c) -> int& { return c.train.agents.hidden; }));
  s.push_back(number_key<int>("agents", "goal_dim", "goal length", [](C& c) -> int& { return c.train.agents.goal_dim; }));
  s.push_back(number_key<int>("agents", "goal_embed_dim", "worker goal embedding length",
                              [](C& c) -> int& { return c.train.agents.goal_embed_dim; }));
  s.push_back(number_key<int>("agents", "dilation", "manager recurrence dilation",
                              [](C& c) -> int& { return c.train.agents.dilation; }));
  s.push_back(number_key<int>("agents", "heads", "attention heads", [](C& c) -> int& { return c.train.agents.heads; }));
  s.push_back(number_key<int>("agents", "embed_dim", "grid embedding width",
                              [](C& c) -> int& { return c.train.agents.embed_dim; }));
  s.push_back(number_key<int>("agents", "mlp_hidden", "manager encoder width",
                              [](C& c) -> int& { return c.train.agents.mlp_hidden; }));
  s.push_back(number_key<double>("agents", "attention_temperature", "attention softmax temperature",
                                 [](C& c) -> double& { return c.train.agents.attention_temperature; }));
  s.push_back(number_key<int>("agents", "horizon", "intrinsic reward look-back",
                              [](C& c) -> int& { return c.train.agents.horizon; }));
  s.push_back(number_key<double>("agents", "beta", "manager reward weight in the worker reward",
                                 [](C& c) -> double& { return c.train.agents.beta; }));
  s.push_back(bool_key("agents", "attention", "exchange attention messages",
                       [](C& c) -> bool& { return c.train.agents.attention; }));
  s.push_back(number_key<double>("agents", "reference_price", "price normalizer",
                                 [](C& c) -> double& { return c.train.agents.features.reference_price; }));
  s.push_back(number_key<int>("agents", "max_duration", "duration normalizer",
                              [](C& c) -> int& { return c.train.agents.features.max_duration; }));
  s.push_back(number_key<double>("agents", "count_scale", "count normalizer",
                                 [](C& c) -> double& { return c.train.agents.features.count_scale; }));
  s.push_back(number_key<std::uint64_t>("agents", "projection_seed", "seed of the fixed observation-to-goal projection",
                                        [](C& c) -> std::uint64_t& { return c.train.agents.projection_seed; }));
  // training
  s.push_back(number_key<int>("training", "episodes", "training episodes",
                              [](C& c) -> int& { return c.train.episodes; }));
  s.push_back(number_key<double>("training", "gamma", "discount", [](C& c) -> double& { return c.train.ddpg.gamma; }));
  s.push_back(number_key<std::size_t>("training", "capacity", "replay capacity per role",
                                      [](C& c) -> std::size_t& { return c.train.ddpg.capacity; }));
  s.push_back(number_key<int>("training", "batch", "minibatch size", [](C& c) -> int& { return c.train.ddpg.batch; }));
  s.push_back(number_key<int>("training", "warmup", "transitions stored before updates start",
                              [](C& c) -> int& { return c.train.ddpg.warmup; }));
  s.push_back(number_key<double>("training", "soft_tau", "target network mixing rate",
                                 [](C& c) -> double& { return c.train.ddpg.soft_tau; }));
  s.push_back(number_key<double>("training", "actor_lr", "actor learning rate",
                                 [](C& c) -> double& { return c.train.ddpg.actor_lr; }));
  s.push_back(number_key<double>("training", "critic_lr", "critic learning rate",
                                 [](C& c) -> double& { return c.train.ddpg.critic_lr; }));
  s.push_back(number_key<double>("training", "max_grad_norm", "global gradient clip, 0 disables",
                                 [](C& c) -> double& { return c.train.ddpg.max_grad_norm; }));
  s.push_back(number_key<int>("training", "critic_hidden", "critic layer width",
                              [](C& c) -> int& { return c.train.ddpg.critic_hidden; }));
  s.push_back(number_key<double>("training", "reward_scale", "multiplier on stored rewards",
                                 [](C& c) -> double& { return c.train.ddpg.reward_scale; }));
  s.push_back(number_key<double>("training", "action_noise", "std of Gaussian noise on ranking weights while training",
                                 [](C& c) -> double& { return c.train.ddpg.action_noise; }));
  s.push_back(number_key<double>("training", "temperature_start", "selection temperature at step 0",
                                 [](C& c) -> double& { return c.train.temperature.start; }));
  s.push_back(number_key<double>("training", "temperature_floor", "selection temperature floor",
                                 [](C& c) -> double& { return c.train.temperature.floor; }));
  s.push_back(number_key<long>("training", "temperature_horizon", "annealing steps, 0 = episodes x steps",
                               [](C& c) -> long& { return c.train.temperature.horizon; }));
  s.push_back(number_key<int>("training", "checkpoint_every", "episodes between checkpoints",
                              [](C& c) -> int& { return c.train.checkpoint_every; }));
  s.push_back(bool_key("training", "keep_best", "evaluate the highest-ADI training episode instead of the last",
                       [](C& c) -> bool& { return c.train.keep_best; }));
  // experiment
  s.push_back(string_key("experiment", "policy", "coride, coride+, ran, res or rev",
                         [](C& c) -> std::string& { return c.policy; }));
  s.push_back({"experiment", "seeds", "space-separated seeds",
               [](C& c, const std::string& v) {
                 std::istringstream in(v);
                 std::string tok;
                 c.seeds.clear();
                 while (in >> tok) c.seeds.push_back(parse_number<std::uint64_t>("experiment.seeds", tok));
                 if (c.seeds.empty()) throw std::invalid_argument("config key 'experiment.seeds': no seeds given");
               },
               [](const C& c) {
                 std::string out;
                 for (std::size_t i = 0; i < c.seeds.size(); ++i) out += (i ? " " : "") + std::to_string(c.seeds[i]);
                 return out;
               }});
  s.push_back(number_key<int>("experiment", "eval_episodes", "evaluation episodes per seed",
                              [](C& c) -> int& { return c.eval_episodes; }));
  s.push_back(number_key<double>("experiment", "eval_temperature", "selection temperature during evaluation",
                                 [](C& c) -> double& { return c.eval_temperature; }));
  s.push_back(bool_key("experiment", "trace", "record one vehicle trajectory", [](C& c) -> bool& { return c.trace; }));
  s.push_back(number_key<int>("experiment", "trace_grid", "start grid of the traced vehicle",
                              [](C& c) -> int& { return c.trace_grid; }));
  s.push_back(number_key<int>("experiment", "trace_horizon", "traced steps",
                              [](C& c) -> int& { return c.trace_horizon; }));
  s.push_back(bool_key("experiment", "record_attention", "export attention weights of the first evaluation episode",
                       [](C& c) -> bool& { return c.record_attention; }));
  s.push_back(string_key("experiment", "out", "output directory", [](C& c) -> std::string& { return c.out; }));
  return s;
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = make_schema();
  return schema;
}

ExperimentConfig parse_experiment_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  std::map<std::string, const ConfigKey*> index;
  for (const auto& k : config_schema()) index[k.section + "." + k.key] = &k;

  ExperimentConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw std::invalid_argument("config key '" + section + "' must sit inside a [section]");
    for (const auto& [key, node] : body) {
      const std::string name = section + "." + key;
      const auto it = index.find(name);
      if (it == index.end()) throw std::invalid_argument("unknown config key '" + name + "'");
      it->second->set(config, node.get_value<std::string>());
    }
  }
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path);
  return parse_experiment_config(in);
}

void write_experiment_config(std::ostream& out, const ExperimentConfig& config) {
  std::string section;
  for (const auto& k : config_schema()) {
    if (k.section != section) {
      out << (section.empty() ? "" : "\n") << '[' << k.section << "]\n";
      section = k.section;
    }
    out << k.key << " = " << k.get(config) << '\n';
  }
}

std::string describe_config_defaults() {
  const ExperimentConfig defaults;
  std::ostringstream out;
  for (const auto& k : config_schema()) {
    out << "  " << std::left << std::setw(34) << (k.section + "." + k.key) << " " << k.help << " [default: "
        << k.get(defaults) << "]\n";
  }
  return out.str();
}

BuiltScenario build_scenario(const ExperimentConfig& config) {
  BuiltScenario b;
  b.env = config.env;
  std::vector<double> sampling;
  if (config.world_spec.empty()) {
    CaseStudy cs = build_case_study_world(config.case_study, config.env.steps_per_day);
    b.world = std::move(cs.world);
    sampling = cs.sampling_rates;
    b.source = std::move(cs.source);
  } else {
    b.world = build_world(load_world_spec(config.world_spec));
    sampling.assign(static_cast<std::size_t>(b.world.size()), 1.0);
    std::vector<double> rates(static_cast<std::size_t>(b.world.size()), config.case_study.base_rate);
    b.source = std::make_unique<SyntheticOrderSource>(1, config.env.steps_per_day, std::move(rates), sampling,
                                                      config.case_study.trips);
  }
  if (!config.history_path.empty()) {
    if (!(config.history_sampling >= 0.0 && config.history_sampling <= 1.0)) {
      throw std::invalid_argument("config key 'orders.history_sampling' must lie in [0, 1]");
    }
    auto loaded = load_order_history_file(config.history_path, b.world, false);
    for (auto& s : sampling) s *= config.history_sampling;
    b.source = std::make_unique<HistoryOrderSource>(std::move(loaded.records), config.history_interval, sampling);
  }
  return b;
}

// ---- tracing ----------------------------------------------------------------

VehicleTracer::VehicleTracer(const GridWorld& world, GridId start, int horizon, std::uint64_t seed)
    : grid_(start), horizon_(horizon), rng_(make_stream({seed, tag(StreamTag::Trace)})) {
  if (!world.contains(start)) throw std::invalid_argument("trace: unknown start grid " + std::to_string(start));
  if (horizon < 0) throw std::invalid_argument("trace: negative horizon");
}

void VehicleTracer::observe(const SimState& state, const Decisions& decisions) {
  if (static_cast<int>(tokens_.size()) >= horizon_) return;
  if (!started_) {
    if (state.idle.at(grid_) < 1) return;  // wait until a vehicle is idle at the start grid
    started_ = true;
  }
  if (state.clock < busy_until_) {
    tokens_.push_back("O");
    return;
  }
  const auto& chosen = decisions.empty() ? std::vector<Order>{} : decisions.at(grid_);
  const int slot = uniform_index(rng_, state.idle.at(grid_));
  if (slot >= static_cast<int>(chosen.size())) {
    tokens_.push_back("W");
    return;
  }
  const Order& o = chosen[slot];
  if (!o.is_fake()) {
    tokens_.push_back(std::to_string(o.destination));
    busy_until_ = state.clock + o.duration;
  } else if (o.destination == grid_) {
    tokens_.push_back("W");
  } else {
    tokens_.push_back("_" + std::to_string(o.destination));
    busy_until_ = state.clock + 1;
  }
  grid_ = o.destination;
}

std::string VehicleTracer::str() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) out += (i ? " " : "") + tokens_[i];
  return out;
}

// ---- runs ---------------------------------------------------------------------

double normalized_pct(double value, double reference) {
  if (reference == 0.0) return 0.0;
  return 100.0 * (value - reference) / reference;
}

namespace {

void accumulate(EpisodeMetrics& total, const EpisodeMetrics& m) {
  total.adi += m.adi;
  total.served += m.served;
  total.generated += m.generated;
  total.ast += m.ast;
  total.tnf += m.tnf;
}

void write_row(std::ostream& out, PolicyKind kind, const SeedSummary& s) {
  out << policy_name(kind) << ',' << s.seed << ',' << s.policy.adi << ',' << s.policy.orr() << ',' << s.policy.ast
      << ',' << s.policy.tnf << ',' << normalized_pct(s.policy.adi, s.ran.adi) << ','
      << normalized_pct(s.policy.orr(), s.ran.orr()) << '\n';
}

constexpr const char* kSummaryHeader = "policy,seed,adi,orr,ast,tnf,adi_vs_ran_pct,orr_vs_ran_pct\n";

}  // namespace

SeedSummary run_seed(const ExperimentConfig& config, const BuiltScenario& built, std::uint64_t seed,
                     const std::string& dir) {
  const PolicyKind kind = parse_policy(config.policy);
  const Scenario sc = built.scenario();
  if (config.eval_episodes < 1) throw std::invalid_argument("config key 'experiment.eval_episodes' must be positive");
  if (!dir.empty()) fs::create_directories(dir);

  SeedSummary s;
  s.seed = seed;
  std::optional<VehicleTracer> tracer;
  if (config.trace) tracer.emplace(built.world, config.trace_grid, config.trace_horizon, seed);
  StepObserver observe_first;
  if (tracer) observe_first = [&](const SimState& st, const Decisions& d) { tracer->observe(st, d); };

  std::vector<AttentionRecord> attention;
  if (is_learned(kind)) {
    TrainConfig tc = config.train;
    tc.fleet_management = kind == PolicyKind::CoRidePlus;
    tc.checkpoint_dir = dir.empty() ? "" : (fs::path(dir) / "checkpoints").string();
    TrainResult tr = train(tc, sc, seed);
    s.logs = tr.logs;
    const CoRideModel& evaluated = tr.best ? *tr.best : *tr.model;
    for (int i = 0; i < config.eval_episodes; ++i) {
      EvalOptions opt;
      opt.temperature = config.eval_temperature;
      opt.fleet_management = tc.fleet_management;
      opt.record_attention = config.record_attention && i == 0;
      EvalResult r = run_coride_episode(evaluated, tr.rates, sc, seed, kEvalEpisodeBase + i, opt,
                                                 i == 0 ? observe_first : StepObserver());
      accumulate(s.policy, r.metrics);
      if (i == 0) attention = std::move(r.attention);
    }
  } else {
    const RuleKind rule = to_rule(kind);
    for (int e = 0; e < config.train.episodes; ++e) {
      const EpisodeMetrics m = run_rule_episode(rule, sc, seed, e);
      s.logs.push_back({e, seed, m.adi, m.orr(), 0.0, 0.0});
    }
    for (int i = 0; i < config.eval_episodes; ++i) {
      accumulate(s.policy, run_rule_episode(rule, sc, seed, kEvalEpisodeBase + i,
                                                     i == 0 ? observe_first : StepObserver()));
    }
  }
  for (int i = 0; i < config.eval_episodes; ++i) {
    accumulate(s.ran, run_rule_episode(RuleKind::Ran, sc, seed, kEvalEpisodeBase + i));
  }
  if (tracer) s.trace = tracer->tokens();

  if (!dir.empty()) {
    std::ofstream metrics(fs::path(dir) / "metrics.csv");
    write_episode_log(metrics, s.logs);
    std::ofstream eval(fs::path(dir) / "evaluation.csv");
    write_summary(eval, kind, {s});
    if (tracer) std::ofstream(fs::path(dir) / "trace.txt") << tracer->str() << '\n';
    if (is_learned(kind) && config.record_attention) {
      std::ofstream att(fs::path(dir) / "attention.csv");
      write_attention_csv(att, attention);
    }
  }
  return s;
}

std::vector<SeedSummary> run_experiment(const ExperimentConfig& config) {
  const PolicyKind kind = parse_policy(config.policy);
  if (config.seeds.empty()) throw std::invalid_argument("config key 'experiment.seeds': no seeds given");
  const BuiltScenario built = build_scenario(config);
  const fs::path root(config.out);
  fs::create_directories(root);
  {
    std::ofstream cfg(root / "config.ini");
    write_experiment_config(cfg, config);
    std::ofstream(root / "FORMAT_VERSION") << "coride-output " << kOutputFormatVersion << '\n';
  }
  std::vector<SeedSummary> rows;
  for (std::uint64_t seed : config.seeds) {
    rows.push_back(run_seed(config, built, seed, (root / ("seed_" + std::to_string(seed))).string()));
  }
  std::ofstream summary(root / "summary.csv");
  write_summary(summary, kind, rows);
  return rows;
}

void write_summary(std::ostream& out, PolicyKind kind, const std::vector<SeedSummary>& rows) {
  out << kSummaryHeader << std::setprecision(10);
  for (const auto& r : rows) write_row(out, kind, r);
}

void write_attention_csv(std::ostream& out, const std::vector<AttentionRecord>& records) {
  out << "step,level,head,source,target,weight\n" << std::setprecision(17);
  for (const auto& r : records) {
    out << r.step << ',' << (r.level == 0 ? "manager" : "worker") << ',' << r.head << ',' << r.source << ','
        << r.target << ',' << r.weight << '\n';
  }
}

void export_attention(const ExperimentConfig& config, const std::string& checkpoint, std::uint64_t seed,
                      std::ostream& out) {
  const BuiltScenario built = build_scenario(config);
  const Scenario sc = built.scenario();
  CoRideModel model(built.world, config.train.agents, seed);
  restore_model(model, nn::load_checkpoint_file(checkpoint));
  const PoissonRates rates = calibrate_rates(sc, seed);
  EvalOptions opt;
  opt.temperature = config.eval_temperature;
  opt.fleet_management = parse_policy(config.policy) != PolicyKind::CoRide;
  opt.record_attention = true;
  const EvalResult r = run_coride_episode(model, rates, sc, seed, kEvalEpisodeBase, opt, {});
  write_attention_csv(out, r.attention);
}

}  // namespace coride
