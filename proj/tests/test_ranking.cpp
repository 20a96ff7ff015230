#include <doctest.h>

#include <array>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <set>

#include "coride/ranking.hpp"

using namespace coride;

namespace {

GridWorld radius_world(int r) {
  WorldSpec spec;
  spec.radius = r;
  return build_world(spec);
}

double chi2_p_value(const std::vector<double>& observed, const std::vector<double>& expected) {
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
  }
  boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace

TEST_CASE("feature layout") {
  const GridWorld w = radius_world(1);
  SimState s = make_state(w, {1, 2, 0, 0, 0, 0, 0});
  s.pending[1].push_back({3, 1, 0, 4.0, 2, OrderKind::Real});
  Eigen::MatrixXd emb = Eigen::MatrixXd::Random(7, 8);
  const FeatureConfig fc;
  const FeatureLayout at{8};

  const Order stay = build_fake_orders(w, 0).back();
  const Eigen::VectorXd f = featurize(stay, s, emb, fc);
  CHECK(f.size() == 21);
  CHECK(f[at.kind()] == 1.0);
  CHECK(f[at.price()] == 0.0);
  CHECK(f.segment(at.origin(), 8) == emb.row(0).transpose());
  CHECK(f.segment(at.destination(), 8) == emb.row(0).transpose());

  const Order a{1, 0, 1, 3.0, 2, OrderKind::Real};
  Order b = a;
  b.price = 6.0;
  const Eigen::VectorXd fa = featurize(a, s, emb, fc);
  const Eigen::VectorXd fb = featurize(b, s, emb, fc);
  CHECK(fa[at.kind()] == 0.0);
  CHECK(fa[at.price()] == 3.0 / fc.reference_price);
  CHECK(fa[at.duration()] == 2.0 / fc.max_duration);
  CHECK(std::abs(fa[at.dest_entropy()] - entropy(2, 1)) < 1e-12);
  CHECK(fa[at.dest_gap()] == (1 - 2) / fc.count_scale);
  for (int i = 0; i < 21; ++i) {
    if (i != at.price()) CHECK(fa[i] == fb[i]);
  }
  CHECK(fa[at.price()] != fb[at.price()]);
}

TEST_CASE("linear scoring") {
  Eigen::MatrixXd items(1, 2);
  items << 3, 4;
  CHECK(std::abs(score(Eigen::Vector2d(1, 2), items)[0] - 11.0) < 1e-9);

  Eigen::MatrixXd random = Eigen::MatrixXd::Random(5, 6);
  CHECK(score(Eigen::VectorXd::Zero(6), random).isZero());
  for (int j = 0; j < 6; ++j) {
    const Eigen::VectorXd s = score(Eigen::VectorXd::Unit(6, j), random);
    for (int i = 0; i < 5; ++i) CHECK(s[i] == random(i, j));
  }
  const Eigen::VectorXd w = Eigen::VectorXd::Random(6);
  Eigen::MatrixXd other = Eigen::MatrixXd::Random(5, 6);
  const Eigen::VectorXd lhs = score(w, random + other);
  const Eigen::VectorXd rhs = score(w, random) + score(w, other);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Boltzmann probabilities") {
  const std::vector<double> s = {1.0, 2.0, 0.5};
  const Eigen::VectorXd p = boltzmann_probabilities(s, 0.5);
  const double z = std::exp(2.0) + std::exp(4.0) + std::exp(1.0);
  CHECK(std::abs(p[0] - std::exp(2.0) / z) < 1e-9);
  CHECK(std::abs(p[1] - std::exp(4.0) / z) < 1e-9);
  CHECK(std::abs(p.sum() - 1.0) < 1e-12);
  const std::vector<double> big = {1000.0, 999.0};
  const Eigen::VectorXd q = boltzmann_probabilities(big, 1.0);
  CHECK(q.allFinite());
  CHECK(std::abs(q[0] - 1.0 / (1.0 + std::exp(-1.0))) < 1e-9);

  const std::vector<double> shifted = {1.0 + 7.0, 2.0 + 7.0, 0.5 + 7.0};
  CHECK((boltzmann_probabilities(shifted, 0.5) - p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("uniform scores pass a chi-square test") {
  const std::vector<double> s = {1.0, 1.0, 1.0};
  Rng rng = make_stream({2024});
  std::vector<double> counts(3, 0.0);
  const int draws = 30000;
  for (int i = 0; i < draws; ++i) counts[selected_k(s, 1, 1.0, rng)[0]] += 1.0;
  CHECK(chi2_p_value(counts, std::vector<double>(3, draws / 3.0)) > 0.01);
}

TEST_CASE("low temperature picks the argmax") {
  const std::vector<double> s = {5.0, 1.0, 1.0};
  Rng rng = make_stream({99});
  int hits = 0;
  const int draws = 30000;
  for (int i = 0; i < draws; ++i) hits += selected_k(s, 1, 0.01, rng)[0] == 0;
  CHECK(static_cast<double>(hits) / draws > 0.999);
}

TEST_CASE("selected-k draws distinct indices") {
  const std::vector<double> s = {0.3, -1.0, 2.0, 0.0, 0.7};
  Rng rng = make_stream({4});
  for (int k = 0; k <= 5; ++k) {
    for (int rep = 0; rep < 50; ++rep) {
      const auto pick = selected_k(s, k, 0.7, rng);
      CHECK(static_cast<int>(pick.size()) == k);
      CHECK(std::set<int>(pick.begin(), pick.end()).size() == pick.size());
    }
  }
  CHECK_THROWS_AS(selected_k(s, 6, 1.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(selected_k(s, 1, 0.0, rng), std::invalid_argument);
  const int n_v = 3;
  const int n_o = 5;
  CHECK(static_cast<int>(selected_k(std::vector<double>(n_o, 0.0), std::min(n_v, n_o), 1.0, rng).size()) == 3);
}

TEST_CASE("second pick follows the renormalized softmax") {
  // P(second = j | first = 0) = p_j / (1 - p_0).
  const std::vector<double> s = {2.0, 1.0, 0.0};
  const Eigen::VectorXd p = boltzmann_probabilities(s, 1.0);
  Rng rng = make_stream({8});
  std::vector<double> second(3, 0.0);
  int firsts = 0;
  for (int i = 0; i < 30000; ++i) {
    const auto pick = selected_k(s, 2, 1.0, rng);
    if (pick[0] == 0) {
      ++firsts;
      second[pick[1]] += 1.0;
    }
  }
  const double p1 = p[1] / (1.0 - p[0]);
  std::vector<double> observed = {second[1], second[2]};
  std::vector<double> expected = {firsts * p1, firsts * (1.0 - p1)};
  CHECK(second[0] == 0.0);
  CHECK(chi2_p_value(observed, expected) > 0.01);
}

TEST_CASE("shift invariance in distribution") {
  const std::vector<double> s = {0.2, 0.9, -0.4, 0.1};
  std::vector<double> shifted = s;
  for (double& v : shifted) v += 3.5;
  Rng a = make_stream({12});
  Rng b = make_stream({12});
  std::array<double, 4> ca{};
  std::array<double, 4> cb{};
  for (int i = 0; i < 20000; ++i) {
    ca[selected_k(s, 1, 0.5, a)[0]] += 1.0;
    cb[selected_k(shifted, 1, 0.5, b)[0]] += 1.0;
  }
  std::vector<double> observed(cb.begin(), cb.end());
  const Eigen::VectorXd p = boltzmann_probabilities(s, 0.5);
  std::vector<double> expected(4);
  for (int i = 0; i < 4; ++i) expected[i] = 20000 * p[i];
  CHECK(chi2_p_value(observed, expected) > 0.01);
  CHECK(chi2_p_value(std::vector<double>(ca.begin(), ca.end()), expected) > 0.01);
}

TEST_CASE("top-k and argmax invariance") {
  const std::vector<double> s = {1.0, 3.0, 3.0, 2.0};
  CHECK(top_k(s, 2) == std::vector<int>{1, 2});
  CHECK(top_k(s, 4) == std::vector<int>{1, 2, 3, 0});
  std::vector<double> scaled = s;
  for (double& v : scaled) v *= 4.0;
  CHECK(top_k(scaled, 3) == top_k(s, 3));
}

TEST_CASE("temperature schedule") {
  const TemperatureSchedule sched{1.0, 0.01, 1000};
  CHECK(anneal_temperature(0, sched) == 1.0);
  CHECK(std::abs(anneal_temperature(1000, sched) - 0.01) < 1e-12);
  CHECK(std::abs(anneal_temperature(5000, sched) - 0.01) < 1e-12);
  CHECK(std::abs(anneal_temperature(500, sched) - 0.1) < 1e-12);
  CHECK(anneal_temperature(200, sched) > anneal_temperature(300, sched));
}
