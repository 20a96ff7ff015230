#include <doctest.h>

#include <algorithm>
#include <set>

#include "coride/baselines.hpp"

using namespace coride;

namespace {

GridWorld radius_world(int r) {
  WorldSpec spec;
  spec.radius = r;
  return build_world(spec);
}

std::vector<std::int64_t> ids(const std::vector<Order>& orders) {
  std::vector<std::int64_t> out;
  for (const Order& o : orders) out.push_back(o.id);
  return out;
}

}  // namespace

TEST_CASE("RES prefers short trips, REV prefers high prices") {
  const GridWorld w = radius_world(1);
  SimState s = make_state(w, {1, 0, 0, 0, 0, 0, 0});
  s.pending[0] = {{1, 0, 2, 5.0, 2, OrderKind::Real}, {2, 0, 3, 3.0, 1, OrderKind::Real}};
  Rng rng = make_stream({1});
  CHECK(ids(decide(RuleKind::Res, s, 0, rng)) == std::vector<std::int64_t>{2});
  CHECK(ids(decide(RuleKind::Rev, s, 0, rng)) == std::vector<std::int64_t>{1});
}

TEST_CASE("secondary keys and id tie-break") {
  const GridWorld w = radius_world(1);
  SimState s = make_state(w, {4, 0, 0, 0, 0, 0, 0});
  s.pending[0] = {{5, 0, 1, 4.0, 1, OrderKind::Real},
                  {3, 0, 1, 6.0, 1, OrderKind::Real},
                  {4, 0, 1, 6.0, 3, OrderKind::Real},
                  {2, 0, 1, 4.0, 1, OrderKind::Real}};
  Rng rng = make_stream({2});
  CHECK(ids(decide(RuleKind::Res, s, 0, rng)) == std::vector<std::int64_t>{3, 2, 5, 4});
  CHECK(ids(decide(RuleKind::Rev, s, 0, rng)) == std::vector<std::int64_t>{3, 4, 2, 5});

  SimState shuffled = s;
  std::reverse(shuffled.pending[0].begin(), shuffled.pending[0].end());
  CHECK(ids(decide(RuleKind::Res, shuffled, 0, rng)) == ids(decide(RuleKind::Res, s, 0, rng)));
  CHECK(ids(decide(RuleKind::Rev, shuffled, 0, rng)) == ids(decide(RuleKind::Rev, s, 0, rng)));
}

TEST_CASE("RAN selects a random subset") {
  const GridWorld w = radius_world(1);
  SimState s = make_state(w, {5, 2, 0, 0, 0, 0, 0});
  for (int i = 0; i < 5; ++i) s.pending[0].push_back({i, 0, 1, 1.0 + i, 1, OrderKind::Real});
  for (int i = 0; i < 4; ++i) s.pending[1].push_back({10 + i, 1, 0, 2.0, 1, OrderKind::Real});
  Rng rng = make_stream({3});
  const auto all = ids(decide(RuleKind::Ran, s, 0, rng));
  CHECK(std::set<std::int64_t>(all.begin(), all.end()) == std::set<std::int64_t>{0, 1, 2, 3, 4});
  std::set<std::vector<std::int64_t>> orders;
  for (int rep = 0; rep < 50; ++rep) {
    const auto pick = decide(RuleKind::Ran, s, 1, rng);
    CHECK(pick.size() == 2);
    CHECK(pick[0].id != pick[1].id);
    orders.insert(ids(pick));
  }
  CHECK(orders.size() > 1);
}

TEST_CASE("rules never issue fake orders and respect k") {
  const GridWorld w = radius_world(2);
  Rng rng = make_stream({4});
  std::vector<int> idle(w.size());
  for (int& v : idle) v = uniform_index(rng, 4);
  SimState s = make_state(w, idle);
  std::int64_t id = 0;
  for (GridId g = 0; g < w.size(); ++g) {
    const int n = uniform_index(rng, 5);
    for (int i = 0; i < n; ++i) {
      s.pending[g].push_back({id++, g, uniform_index(rng, w.size()), 1.0 + uniform_index(rng, 9), 1 + uniform_index(rng, 4),
                              OrderKind::Real});
    }
  }
  for (RuleKind k : {RuleKind::Ran, RuleKind::Res, RuleKind::Rev}) {
    const Decisions d = decide_all(k, s, 9, 0);
    CHECK(d == decide_all(k, s, 9, 0));
    for (GridId g = 0; g < w.size(); ++g) {
      CHECK(static_cast<int>(d[g].size()) == std::min<int>(s.idle[g], static_cast<int>(s.pending[g].size())));
      for (const Order& o : d[g]) CHECK(!o.is_fake());
    }
  }
  // Single vehicle per grid: REV never earns less in one step than RES.
  SimState single = s;
  for (int& v : single.idle) v = std::min(v, 1);
  const double rev = step(w, single, decide_all(RuleKind::Rev, single, 1, 0)).second.adi_delta;
  const double res = step(w, single, decide_all(RuleKind::Res, single, 1, 0)).second.adi_delta;
  CHECK(rev >= res);
}

TEST_CASE("rule names") {
  CHECK(parse_rule("res") == RuleKind::Res);
  CHECK(rule_name(RuleKind::Rev) == "rev");
  CHECK_THROWS_AS(parse_rule("greedy"), std::invalid_argument);
}
