// Command-line front end: run, build-world, trace, export-attention.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "coride/experiment.hpp"

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> policy;
  std::optional<int> episodes;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "experiment config file (INI); defaults apply when omitted");
  cmd->add_option("--seed", c.seed, "run a single seed instead of experiment.seeds");
  cmd->add_option("--policy", c.policy, "coride | coride+ | ran | res | rev");
  cmd->add_option("--episodes", c.episodes, "training episodes");
  cmd->add_option("--out", c.out, "output directory or file");
}

coride::ExperimentConfig resolve(const Common& c) {
  coride::ExperimentConfig cfg =
      c.config_path.empty() ? coride::ExperimentConfig{} : coride::load_experiment_config(c.config_path);
  if (c.seed) cfg.seeds = {*c.seed};
  if (c.policy) {
    coride::parse_policy(*c.policy);
    cfg.policy = *c.policy;
  }
  if (c.episodes) cfg.train.episodes = *c.episodes;
  if (c.out) cfg.out = *c.out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hex-grid ride-hailing simulator with hierarchical multi-agent dispatch and repositioning"};
  app.require_subcommand(1);
  app.footer("Config keys ([section] key = value):\n" + coride::describe_config_defaults());

  Common run_opts, world_opts, trace_opts, attention_opts;
  auto* run = app.add_subcommand("run", "train and/or evaluate a policy, writing metric tables and artifacts");
  add_common(run, run_opts);

  auto* world = app.add_subcommand("build-world", "print the resolved world in spec format plus a listing");
  add_common(world, world_opts);

  auto* trace = app.add_subcommand("trace", "follow one vehicle through an evaluation episode");
  add_common(trace, trace_opts);
  std::optional<int> trace_grid, trace_horizon;
  trace->add_option("--grid", trace_grid, "start grid");
  trace->add_option("--horizon", trace_horizon, "steps to trace");

  auto* attention = app.add_subcommand("export-attention", "write attention weights of a stored checkpoint as CSV");
  add_common(attention, attention_opts);
  std::string checkpoint;
  attention->add_option("--checkpoint", checkpoint, "checkpoint file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto cfg = resolve(run_opts);
      const auto rows = coride::run_experiment(cfg);
      coride::write_summary(std::cout, coride::parse_policy(cfg.policy), rows);
    } else if (world->parsed()) {
      const auto cfg = resolve(world_opts);
      const auto built = coride::build_scenario(cfg);
      if (world_opts.out) {
        std::ofstream out(*world_opts.out);
        if (!out) throw std::runtime_error("cannot write " + *world_opts.out);
        coride::write_world_spec(out, built.world);
      } else {
        coride::write_world_spec(std::cout, built.world);
      }
      coride::describe_world(std::cout, built.world);
    } else if (trace->parsed()) {
      auto cfg = resolve(trace_opts);
      cfg.trace = true;
      cfg.record_attention = false;
      if (trace_grid) cfg.trace_grid = *trace_grid;
      if (trace_horizon) cfg.trace_horizon = *trace_horizon;
      const auto built = coride::build_scenario(cfg);
      for (std::uint64_t seed : cfg.seeds) {
        const auto s = coride::run_seed(cfg, built, seed, "");
        std::cout << seed << ':';
        for (const auto& tok : s.trace) std::cout << ' ' << tok;
        std::cout << '\n';
      }
    } else if (attention->parsed()) {
      const auto cfg = resolve(attention_opts);
      const std::uint64_t seed = cfg.seeds.front();
      if (attention_opts.out) {
        std::ofstream out(*attention_opts.out);
        if (!out) throw std::runtime_error("cannot write " + *attention_opts.out);
        coride::export_attention(cfg, checkpoint, seed, out);
      } else {
        coride::export_attention(cfg, checkpoint, seed, std::cout);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
