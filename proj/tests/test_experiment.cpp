#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>

#include "coride/experiment.hpp"

using namespace coride;
namespace fs = std::filesystem;

namespace {

GridWorld radius_world(int r) {
  WorldSpec spec;
  spec.radius = r;
  return build_world(spec);
}

Order real(std::int64_t id, GridId from, GridId to, int duration) {
  return Order{id, from, to, 5.0, duration, OrderKind::Real};
}

Order fake(GridId from, GridId to) { return Order{-1 - to, from, to, 0.0, 1, OrderKind::Fake}; }

SimState one_vehicle_at(const GridWorld& w, GridId g, int clock) {
  std::vector<int> idle(static_cast<std::size_t>(w.size()), 0);
  idle[g] = 1;
  SimState s = make_state(w, idle);
  s.clock = clock;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("coride_test_experiment_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig short_coride(const fs::path& out) {
  ExperimentConfig c;
  c.policy = "coride+";
  c.env.steps = 12;
  c.env.fleet_size = 30;
  c.train.episodes = 2;
  c.train.ddpg.warmup = 16;
  c.train.ddpg.batch = 8;
  c.seeds = {7};
  c.trace = false;
  c.out = out.string();
  return c;
}

}  // namespace

TEST_CASE("case-study sampling rates") {
  const auto rates_of = [](double dr) {
    CaseStudyConfig c;
    c.discount_rate = dr;
    const CaseStudy cs = build_case_study_world(c, 144);
    std::map<DistrictId, double> by_district;
    for (GridId g = 0; g < cs.world.size(); ++g) {
      const DistrictId d = cs.world.district_of(g);
      if (by_district.count(d)) CHECK(by_district[d] == doctest::Approx(cs.sampling_rates[g]));
      by_district[d] = cs.sampling_rates[g];
    }
    return by_district;
  };
  const auto flat = rates_of(0.0);
  for (const auto& [d, r] : flat) CHECK(r == 1.0);

  const auto dr20 = rates_of(0.2);
  CHECK(dr20.at(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(dr20.at(1) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(dr20.at(2) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(rates_of(0.4).at(2) == doctest::Approx(0.2).epsilon(1e-12));

  CaseStudyConfig bad;
  bad.discount_rate = 0.5;
  CHECK_THROWS_AS(build_case_study_world(bad, 144), std::invalid_argument);
  bad.discount_rate = -0.1;
  CHECK_THROWS_AS(build_case_study_world(bad, 144), std::invalid_argument);
}

TEST_CASE("case-study world has 21 grids in 3 mutually adjacent districts") {
  const CaseStudy cs = build_case_study_world({}, 144);
  CHECK(cs.world.size() == 21);
  CHECK(cs.world.district_count() == 3);
  for (DistrictId d = 0; d < 3; ++d) {
    CHECK(cs.world.members(d).size() == 7);
    CHECK(cs.world.adjacent_districts(d).size() == 2);
  }
}

TEST_CASE("policy names") {
  for (const char* name : {"coride", "coride+", "ran", "res", "rev"}) CHECK(policy_name(parse_policy(name)) == name);
  CHECK(is_learned(PolicyKind::CoRide));
  CHECK_FALSE(is_learned(PolicyKind::Rev));
  CHECK_THROWS_AS(parse_policy("greedy"), std::invalid_argument);
}

TEST_CASE("config parsing") {
  SUBCASE("unknown key names the key") {
    std::istringstream in("[sim]\nsteps = 10\nwarp = 3\n");
    try {
      parse_experiment_config(in);
      FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("sim.warp") != std::string::npos);
    }
  }
  SUBCASE("unknown section") {
    std::istringstream in("[physics]\ng = 9.8\n");
    CHECK_THROWS_AS(parse_experiment_config(in), std::invalid_argument);
  }
  SUBCASE("bad value names the key") {
    std::istringstream in("[training]\nepisodes = many\n");
    try {
      parse_experiment_config(in);
      FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("training.episodes") != std::string::npos);
    }
  }
  SUBCASE("values land in the config") {
    std::istringstream in("; comment\n[experiment]\npolicy = rev\nseeds = 4 9\n[world]\ndiscount_rate = 0.3\n");
    const ExperimentConfig c = parse_experiment_config(in);
    CHECK(c.policy == "rev");
    CHECK(c.seeds == std::vector<std::uint64_t>{4, 9});
    CHECK(c.case_study.discount_rate == 0.3);
  }
  SUBCASE("written config parses back to the same text") {
    ExperimentConfig c;
    c.env.steps = 33;
    c.train.ddpg.actor_lr = 3e-5;
    c.seeds = {11, 12};
    c.train.keep_best = false;
    std::ostringstream first;
    write_experiment_config(first, c);
    std::istringstream in(first.str());
    std::ostringstream second;
    write_experiment_config(second, parse_experiment_config(in));
    CHECK(first.str() == second.str());
  }
  SUBCASE("every key is documented with its default") {
    const std::string help = describe_config_defaults();
    for (const auto& k : config_schema()) CHECK(help.find(k.section + "." + k.key) != std::string::npos);
  }
}

TEST_CASE("normalization against RAN") {
  CHECK(normalized_pct(123.4, 123.4) == 0.0);
  CHECK(normalized_pct(110.0, 100.0) == doctest::Approx(10.0));
  CHECK(normalized_pct(5.0, 0.0) == 0.0);
}

TEST_CASE("vehicle trace encoding") {
  const GridWorld w = radius_world(1);
  const GridId center = 3;

  SUBCASE("never matched") {
    VehicleTracer tr(w, center, 4, 1);
    for (int t = 0; t < 6; ++t) tr.observe(one_vehicle_at(w, center, t), {});
    CHECK(tr.str() == "W W W W");
  }
  SUBCASE("two-step order to grid 5") {
    VehicleTracer tr(w, center, 5, 1);
    Decisions d(7);
    d[center].push_back(real(1, center, 5, 2));
    tr.observe(one_vehicle_at(w, center, 0), d);
    for (int t = 1; t < 5; ++t) tr.observe(one_vehicle_at(w, 5, t), {});
    CHECK(tr.tokens() == std::vector<std::string>{"5", "O", "W", "W", "W"});
  }
  SUBCASE("fleet move then order") {
    VehicleTracer tr(w, center, 3, 1);
    Decisions move(7);
    move[center].push_back(fake(center, 4));
    tr.observe(one_vehicle_at(w, center, 0), move);
    Decisions ride(7);
    ride[4].push_back(real(2, 4, 0, 3));
    tr.observe(one_vehicle_at(w, 4, 1), ride);
    tr.observe(one_vehicle_at(w, 0, 2), {});
    CHECK(tr.tokens() == std::vector<std::string>{"_4", "0", "O"});
  }
  SUBCASE("staying put reads as waiting") {
    VehicleTracer tr(w, center, 1, 1);
    Decisions stay(7);
    stay[center].push_back(fake(center, center));
    tr.observe(one_vehicle_at(w, center, 0), stay);
    CHECK(tr.str() == "W");
  }
  SUBCASE("starts once a vehicle is idle at the start grid") {
    VehicleTracer tr(w, center, 2, 1);
    tr.observe(make_state(w, std::vector<int>(7, 0)), {});
    tr.observe(one_vehicle_at(w, center, 1), {});
    CHECK(tr.str() == "W");
  }
  SUBCASE("unknown start grid") { CHECK_THROWS_AS(VehicleTracer(w, 7, 10, 1), std::invalid_argument); }
}

TEST_CASE("rule runs are byte-identical and self-describing") {
  ExperimentConfig c;
  c.policy = "ran";
  c.train.episodes = 1;
  c.seeds = {5};
  const fs::path a = scratch("ran_a");
  const fs::path b = scratch("ran_b");
  c.out = a.string();
  run_experiment(c);
  c.out = b.string();
  run_experiment(c);
  for (const char* f : {"seed_5/metrics.csv", "seed_5/evaluation.csv", "seed_5/trace.txt", "summary.csv"}) {
    CAPTURE(f);
    CHECK(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(slurp(a / "FORMAT_VERSION") == "coride-output " + std::to_string(kOutputFormatVersion) + "\n");
  std::ifstream cfg(a / "config.ini");
  const ExperimentConfig back = parse_experiment_config(cfg);
  CHECK(back.policy == "ran");
  CHECK(back.seeds == c.seeds);

  // RAN against itself normalizes to zero.
  std::istringstream summary(slurp(a / "summary.csv"));
  std::string header, row;
  std::getline(summary, header);
  std::getline(summary, row);
  CHECK(row.substr(row.rfind(',') + 1) == "0");
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("short learned run: identical metrics, checkpoints and stochastic attention") {
  const fs::path a = scratch("coride_a");
  const fs::path b = scratch("coride_b");
  run_experiment(short_coride(a));
  run_experiment(short_coride(b));
  CHECK(slurp(a / "seed_7/metrics.csv") == slurp(b / "seed_7/metrics.csv"));
  CHECK(slurp(a / "seed_7/evaluation.csv") == slurp(b / "seed_7/evaluation.csv"));
  CHECK(fs::exists(a / "seed_7/checkpoints/checkpoint_ep0.bin"));
  CHECK(fs::exists(a / "seed_7/checkpoints/checkpoint_best.bin"));

  std::ifstream att(a / "seed_7/attention.csv");
  std::string line;
  std::getline(att, line);
  CHECK(line == "step,level,head,source,target,weight");
  std::map<std::tuple<int, std::string, int, int>, double> sums;
  char comma;
  while (std::getline(att, line)) {
    std::istringstream row(line);
    int step, head, source, target;
    std::string level;
    double weight;
    row >> step >> comma;
    std::getline(row, level, ',');
    row >> head >> comma >> source >> comma >> target >> comma >> weight;
    CHECK(weight >= 0.0);
    sums[{step, level, head, source}] += weight;
  }
  CHECK_FALSE(sums.empty());
  for (const auto& [key, total] : sums) CHECK(std::abs(total - 1.0) < 1e-6);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("bad experiment settings fail fast") {
  ExperimentConfig c;
  c.seeds.clear();
  CHECK_THROWS_AS(run_experiment(c), std::invalid_argument);
  ExperimentConfig d;
  d.policy = "bogus";
  CHECK_THROWS_AS(run_experiment(d), std::invalid_argument);
}
