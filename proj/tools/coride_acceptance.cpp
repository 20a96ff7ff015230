// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Criteria 1-5 rerun the matching unit test cases (linked in from tests/);
// 6-9 run the simulator and learner directly.

#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "coride/experiment.hpp"

namespace fs = std::filesystem;
using namespace coride;

namespace {

// ---- pinned thresholds ------------------------------------------------------

constexpr double kMaxSeconds[10] = {0, 60, 300, 60, 60, 120, 120, 1800, 120, 60};
constexpr int kSeeds = 5;
constexpr int kBaselineSeedsRequired = 4;  // criterion 6
constexpr int kBeatRanSeedsRequired = 4;   // criterion 7
constexpr int kProgressSeedsRequired = 3;  // criterion 7
constexpr int kTrainingEpisodes = 20;
constexpr int kProgressWindow = 5;
constexpr double kRowSumTolerance = 1e-6;  // criterion 9

// ---- doctest plumbing -------------------------------------------------------

doctest::TestRunStats g_last_run{};

struct Tally final : doctest::IReporter {
  explicit Tally(const doctest::ContextOptions&) {}
  void report_query(const doctest::QueryData&) override {}
  void test_run_start() override {}
  void test_run_end(const doctest::TestRunStats& s) override { g_last_run = s; }
  void test_case_start(const doctest::TestCaseData&) override {}
  void test_case_reenter(const doctest::TestCaseData&) override {}
  void test_case_end(const doctest::CurrentTestCaseStats&) override {}
  void test_case_exception(const doctest::TestCaseException&) override {}
  void subcase_start(const doctest::SubcaseSignature&) override {}
  void subcase_end() override {}
  void log_assert(const doctest::AssertData&) override {}
  void log_message(const doctest::MessageData&) override {}
  void test_case_skipped(const doctest::TestCaseData&) override {}
};

DOCTEST_REGISTER_LISTENER("tally", 1, Tally);

struct Verdict {
  bool pass = false;
  std::string detail;
};

// Runs the named cases; every one of them must be found and pass.
Verdict run_cases(const std::vector<std::string>& names) {
  std::string filter;
  for (const auto& n : names) filter += (filter.empty() ? "" : ",") + n;
  doctest::Context ctx;
  ctx.setOption("test-case", filter.c_str());
  ctx.setOption("no-intro", true);
  ctx.setOption("no-version", true);
  ctx.setOption("minimal", true);
  const int rc = ctx.run();
  const auto& s = g_last_run;
  const bool found = s.numTestCasesPassingFilters == names.size();
  std::ostringstream d;
  d << s.numTestCasesPassingFilters << "/" << names.size() << " cases, " << s.numAsserts - s.numAssertsFailed << "/"
    << s.numAsserts << " assertions";
  return {rc == 0 && found && s.numTestCasesFailed == 0, d.str()};
}

// ---- direct checks ------------------------------------------------------------

ExperimentConfig case_study_config() {
  ExperimentConfig c;
  c.case_study.discount_rate = 0.2;
  c.trace = false;
  c.seeds.clear();
  for (int s = 1; s <= kSeeds; ++s) c.seeds.push_back(static_cast<std::uint64_t>(s));
  return c;
}

Verdict baseline_ordering() {
  const ExperimentConfig c = case_study_config();
  const BuiltScenario built = build_scenario(c);
  const Scenario sc = built.scenario();
  int ok = 0;
  std::ostringstream d;
  for (std::uint64_t seed : c.seeds) {
    const EpisodeMetrics res = run_rule_episode(RuleKind::Res, sc, seed, kEvalEpisodeBase);
    const EpisodeMetrics rev = run_rule_episode(RuleKind::Rev, sc, seed, kEvalEpisodeBase);
    const bool hit = rev.ast >= res.ast && res.tnf >= rev.tnf;
    ok += hit;
    d << " s" << seed << "[AST " << res.ast << "/" << rev.ast << " TNF " << res.tnf << "/" << rev.tnf << "]";
  }
  return {ok >= kBaselineSeedsRequired, std::to_string(ok) + "/" + std::to_string(kSeeds) + " seeds (RES/REV)" + d.str()};
}

double mean_adi(const std::vector<EpisodeLog>& logs, std::size_t from, std::size_t count) {
  double total = 0.0;
  for (std::size_t i = from; i < from + count; ++i) total += logs.at(i).adi;
  return total / static_cast<double>(count);
}

Verdict learning_progress() {
  ExperimentConfig c = case_study_config();
  c.policy = "coride+";
  c.train.episodes = kTrainingEpisodes;
  c.record_attention = false;
  const BuiltScenario built = build_scenario(c);
  int beat = 0;
  int progress = 0;
  std::ostringstream d;
  d.setf(std::ios::fixed);
  d.precision(1);
  for (std::uint64_t seed : c.seeds) {
    const SeedSummary s = run_seed(c, built, seed, "");
    const bool b = s.policy.adi > s.ran.adi && s.policy.orr() > s.ran.orr();
    const double first = mean_adi(s.logs, 0, kProgressWindow);
    const double last = mean_adi(s.logs, s.logs.size() - kProgressWindow, kProgressWindow);
    beat += b;
    progress += last > first;
    d << " s" << seed << "[ADI " << normalized_pct(s.policy.adi, s.ran.adi) << "% ORR "
      << normalized_pct(s.policy.orr(), s.ran.orr()) << "% first5 " << first << " last5 " << last << "]";
  }
  return {beat >= kBeatRanSeedsRequired && progress >= kProgressSeedsRequired,
          "beat RAN " + std::to_string(beat) + "/" + std::to_string(kSeeds) + ", progress " +
              std::to_string(progress) + "/" + std::to_string(kSeeds) + d.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig reproducibility_config(const fs::path& out) {
  ExperimentConfig c = case_study_config();
  c.policy = "coride+";
  c.train.episodes = 2;
  c.seeds = {1};
  c.out = out.string();
  return c;
}

const fs::path kScratch = fs::temp_directory_path() / "coride_acceptance";

Verdict reproducibility() {
  fs::remove_all(kScratch);
  run_experiment(reproducibility_config(kScratch / "a"));
  run_experiment(reproducibility_config(kScratch / "b"));
  int same = 0;
  const std::vector<std::string> files = {"seed_1/metrics.csv", "seed_1/evaluation.csv", "summary.csv"};
  for (const auto& f : files) {
    const std::string a = slurp(kScratch / "a" / f);
    same += !a.empty() && a == slurp(kScratch / "b" / f);
  }
  return {same == static_cast<int>(files.size()),
          std::to_string(same) + "/" + std::to_string(files.size()) + " metric files byte-identical"};
}

// Largest |sum - 1| over (step, level, head, source) groups of an attention CSV.
std::pair<std::size_t, double> worst_row_sum(std::istream& in) {
  std::string line;
  std::getline(in, line);
  std::map<std::tuple<int, std::string, int, int>, double> sums;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(row, field, ',')) f.push_back(field);
    if (f.size() != 6) throw std::runtime_error("malformed attention row: " + line);
    sums[{std::stoi(f[0]), f[1], std::stoi(f[2]), std::stoi(f[3])}] += std::stod(f[5]);
  }
  double worst = 0.0;
  for (const auto& [key, total] : sums) worst = std::max(worst, std::abs(total - 1.0));
  return {sums.size(), worst};
}

// Uses the run left behind by the reproducibility check.
Verdict attention_exports() {
  const fs::path run = kScratch / "a";
  if (!fs::exists(run / "seed_1/attention.csv")) run_experiment(reproducibility_config(run));
  std::ifstream logged(run / "seed_1/attention.csv");
  const auto [groups_logged, worst_logged] = worst_row_sum(logged);

  std::stringstream exported;
  export_attention(reproducibility_config(run), (run / "seed_1/checkpoints/checkpoint_best.bin").string(), 1,
                   exported);
  const auto [groups_exported, worst_exported] = worst_row_sum(exported);

  const double worst = std::max(worst_logged, worst_exported);
  std::ostringstream d;
  d << groups_logged << " logged and " << groups_exported << " exported groups, max |sum - 1| = " << worst;
  return {groups_logged > 0 && groups_exported > 0 && worst <= kRowSumTolerance, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria = {
      {1,
       [] {
         return run_cases({"entropy examples", "intrinsic reward examples", "linear scoring", "Boltzmann probabilities",
                           "attention trivial cases", "attention weights are row-stochastic",
                           "critic target examples", "critic loss examples"});
       }},
      {2,
       [] {
         return run_cases({"mlp gradients match finite differences", "dilated rnn gradients match finite differences",
                           "attention gradients match finite differences", "manager network gradients",
                           "worker network gradients including embeddings", "critic gradients for both roles",
                           "actor gradient through attention*"});
       }},
      {3,
       [] {
         return run_cases({"conservation and fake neutrality over 1000 random steps", "step with no decisions",
                           "hand-simulated real order", "fake order moves a vehicle to a neighbor",
                           "episode metrics count real orders only", "step is deterministic"});
       }},
      {4, [] { return run_cases({"uniform scores pass a chi-square test", "low temperature picks the argmax"}); }},
      {5, [] { return run_cases({"critic regression loss decreases", "actor follows an analytic critic"}); }},
      {6, baseline_ordering},
      {7, learning_progress},
      {8, reproducibility},
      {9, attention_exports},
  };

  int failures = 0;
  for (const auto& [id, check] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > kMaxSeconds[id]) {
      v.pass = false;
      v.detail += "; over the " + std::to_string(static_cast<int>(kMaxSeconds[id])) + " s budget";
    }
    failures += !v.pass;
    std::printf("criterion %d: %s  %s (%.1f s)\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str(), secs);
  }
  fs::remove_all(kScratch);
  return failures == 0 ? 0 : 1;
}
