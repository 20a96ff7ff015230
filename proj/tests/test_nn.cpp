#include <doctest.h>

#include <cmath>
#include <sstream>

#include "coride/nn/adam.hpp"
#include "coride/nn/attention.hpp"
#include "coride/nn/checkpoint.hpp"
#include "coride/nn/layers.hpp"
#include "coride/nn/recurrent.hpp"
#include "gradcheck.hpp"

using namespace coride;
using namespace coride::nn;

namespace {

Vector random_vector(int n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

}  // namespace

TEST_CASE("mlp trivial cases") {
  ParamStore zero;
  Mlp z(zero, "z", {4, 5, 3});
  Rng rng = make_stream({1});
  CHECK(z.forward(zero, random_vector(4, rng)).isZero());

  ParamStore id;
  Mlp single(id, "id", {3, 3});
  id.value(single.layers()[0].weight()) = Matrix::Identity(3, 3);
  const Vector x = random_vector(3, rng);
  CHECK(single.forward(id, x) == x);
}

TEST_CASE("mlp matches a straight-line evaluator") {
  ParamStore store;
  Mlp net(store, "net", {3, 4, 2});
  Rng rng = make_stream({2});
  net.init(store, rng);
  for (std::size_t i = 0; i < store.size(); ++i) store.value(i) = Matrix::Random(store.value(i).rows(), store.value(i).cols());
  const Vector x = random_vector(3, rng);
  const Matrix& w0 = store.value(net.layers()[0].weight());
  const Matrix& b0 = store.value(net.layers()[0].bias());
  const Matrix& w1 = store.value(net.layers()[1].weight());
  const Matrix& b1 = store.value(net.layers()[1].bias());
  double hidden[4];
  for (int i = 0; i < 4; ++i) {
    double acc = b0(i, 0);
    for (int j = 0; j < 3; ++j) acc += w0(i, j) * x[j];
    hidden[i] = acc > 0.0 ? acc : 0.0;
  }
  const Vector y = net.forward(store, x);
  for (int i = 0; i < 2; ++i) {
    double acc = b1(i, 0);
    for (int j = 0; j < 4; ++j) acc += w1(i, j) * hidden[j];
    CHECK(std::abs(y[i] - acc) < 1e-12);
  }
}

TEST_CASE("relu blocks gradient at negative preactivation") {
  ParamStore store;
  Mlp net(store, "net", {1, 1, 1});
  store.value(net.layers()[0].weight())(0, 0) = 1.0;
  store.value(net.layers()[0].bias())(0, 0) = -5.0;
  store.value(net.layers()[1].weight())(0, 0) = 2.0;
  Mlp::Cache cache;
  Vector x(1);
  x << 1.0;
  net.forward(store, x, &cache);
  const Vector g = net.backward(store, cache, Vector::Ones(1));
  CHECK(g[0] == 0.0);
  CHECK(store.grad(net.layers()[0].weight())(0, 0) == 0.0);
}

TEST_CASE("mlp gradients match finite differences") {
  for (Head head : {Head::Linear, Head::Tanh}) {
    ParamStore store;
    Mlp net(store, "net", {6, 8, 7, 3}, head);
    Rng rng = make_stream({3});
    net.init(store, rng);
    for (std::size_t i = 0; i < store.size(); ++i) {
      store.value(i) += 0.1 * Matrix::Random(store.value(i).rows(), store.value(i).cols());
    }
    Vector x = random_vector(6, rng);
    const Vector c = random_vector(3, rng);
    auto loss = [&] { return c.dot(net.forward(store, x)); };
    Vector gx;
    const int n = gradcheck::check_store(store, loss, [&] {
      Mlp::Cache cache;
      net.forward(store, x, &cache);
      gx = net.backward(store, cache, c);
    }, rng);
    CHECK(n >= 20 * 3);
    gradcheck::check_vector(x, gx, loss, "x");
  }
}

TEST_CASE("rnn cell basics") {
  ParamStore store;
  RnnCell cell(store, "rnn", 3, 4);
  Rng rng = make_stream({4});
  const Vector x = random_vector(3, rng);
  auto [s, h] = cell.step(store, RecurrentState::zeros(4), x);
  CHECK(h.isZero());

  cell.init(store, rng);
  const Vector x2 = random_vector(3, rng);
  auto [s1, h1] = cell.step(store, RecurrentState::zeros(4), x);
  auto [s2, h2] = cell.step(store, s1, x2);
  // Straight-line oracle for two steps.
  const Matrix& wi = store.value(cell.w_ih());
  const Matrix& wh = store.value(cell.w_hh());
  const Matrix& b = store.value(cell.bias());
  Vector o1(4), o2(4);
  for (int i = 0; i < 4; ++i) {
    double acc = b(i, 0);
    for (int j = 0; j < 3; ++j) acc += wi(i, j) * x[j];
    o1[i] = std::tanh(acc);
  }
  for (int i = 0; i < 4; ++i) {
    double acc = b(i, 0);
    for (int j = 0; j < 3; ++j) acc += wi(i, j) * x2[j];
    for (int j = 0; j < 4; ++j) acc += wh(i, j) * o1[j];
    o2[i] = std::tanh(acc);
  }
  CHECK((h1 - o1).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((h2 - o2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dilation one equals the plain cell over 100 steps") {
  ParamStore store;
  DilatedRnn dilated(store, "rnn", 5, 6, 1);
  Rng rng = make_stream({5});
  dilated.init(store, rng);
  RecurrentState a = dilated.initial_state();
  RecurrentState b = RecurrentState::zeros(6);
  for (int t = 0; t < 100; ++t) {
    const Vector x = random_vector(5, rng);
    auto [na, ya] = dilated_rnn_step(dilated, store, a, x);
    auto [nb, yb] = rnn_step(dilated.cell(), store, b, x);
    CHECK(ya == yb);
    a = na;
    b = nb;
  }
}

TEST_CASE("dilated ring updates each slot in turn") {
  ParamStore store;
  DilatedRnn rnn(store, "rnn", 2, 3, 2);
  Rng rng = make_stream({6});
  rnn.init(store, rng);
  RecurrentState s = rnn.initial_state();
  std::vector<int> updates(2, 0);
  for (int t = 0; t < 4; ++t) {
    CHECK(s.phase == t % 2);
    const auto before = s.ring;
    auto [next, y] = rnn.step(store, s, random_vector(2, rng));
    for (int k = 0; k < 2; ++k) updates[k] += next.ring[k] != before[k];
    CHECK((y - 0.5 * (next.ring[0] + next.ring[1])).cwiseAbs().maxCoeff() < 1e-15);
    s = next;
  }
  CHECK(updates == std::vector<int>{2, 2});
  CHECK_THROWS_AS(RecurrentState::zeros(3, 0), std::invalid_argument);
}

TEST_CASE("dilated rnn gradients match finite differences") {
  ParamStore store;
  DilatedRnn rnn(store, "rnn", 5, 6, 3);
  Rng rng = make_stream({7});
  rnn.init(store, rng);
  RecurrentState before = rnn.initial_state();
  for (auto& h : before.ring) h = random_vector(6, rng, 0.5);
  before.phase = 1;
  Vector x = random_vector(5, rng);
  const Vector c = random_vector(6, rng);
  auto loss = [&] { return c.dot(rnn.step(store, before, x).second); };
  Vector gx;
  std::vector<Vector> gring;
  gradcheck::check_store(store, loss, [&] {
    auto [after, y] = rnn.step(store, before, x);
    std::tie(gx, gring) = rnn.backward(store, before, after, x, c);
  }, rng);
  gradcheck::check_vector(x, gx, loss, "x");
  for (int k = 0; k < 3; ++k) gradcheck::check_vector(before.ring[k], gring[k], loss, "ring" + std::to_string(k));
}

TEST_CASE("attention trivial cases") {
  ParamStore store;
  MultiHeadAttention att(store, "att", 6, 2, 4, 4, 5);
  Rng rng = make_stream({8});
  att.init(store, rng);
  std::vector<Vector> inputs = {random_vector(6, rng), random_vector(6, rng)};
  const std::vector<int> self = {0};
  MultiHeadAttention::AgentCache cache;
  const Vector m = att.message(store, inputs, self, 0, &cache);
  for (const auto& head : cache.alpha) CHECK(head == std::vector<double>{1.0});
  Vector pooled = Vector::Zero(4);
  for (int n = 0; n < 2; ++n) pooled += store.value(store.find("att.head" + std::to_string(n) + ".w_content")) * inputs[0];
  pooled /= 2.0;
  const Vector pre = store.value(store.find("att.w_q")) * pooled + store.value(store.find("att.b_q")).col(0);
  for (int i = 0; i < 5; ++i) CHECK(std::abs(m[i] - 1.0 / (1.0 + std::exp(-pre[i]))) < 1e-12);

  inputs[1] = inputs[0];
  const std::vector<int> both = {0, 1};
  att.message(store, inputs, both, 0, &cache);
  for (const auto& head : cache.alpha) {
    CHECK(std::abs(head[0] - 0.5) < 1e-12);
    CHECK(std::abs(head[1] - 0.5) < 1e-12);
  }
  const std::vector<int> missing_self = {1};
  CHECK_THROWS_AS(att.message(store, inputs, missing_self, 0), std::invalid_argument);
}

TEST_CASE("attention weights are row-stochastic") {
  ParamStore store;
  MultiHeadAttention att(store, "att", 8, 4, 4, 4, 8, 0.7);
  Rng rng = make_stream({9});
  att.init(store, rng);
  std::vector<Vector> inputs;
  for (int i = 0; i < 5; ++i) inputs.push_back(random_vector(8, rng, 2.0));
  const std::vector<std::vector<int>> hoods = {{0, 1, 2}, {0, 1}, {2, 3, 4, 1}, {3}, {4, 0}};
  const auto r = att.forward(store, inputs, hoods);
  for (std::size_t i = 0; i < hoods.size(); ++i) {
    REQUIRE(r.alpha[i].size() == 4);
    for (const auto& row : r.alpha[i]) {
      double sum = 0.0;
      for (double a : row) {
        CHECK(a >= 0.0);
        sum += a;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("attention gradients match finite differences") {
  ParamStore store;
  MultiHeadAttention att(store, "att", 6, 3, 4, 5, 7, 1.3);
  Rng rng = make_stream({10});
  att.init(store, rng);
  std::vector<Vector> inputs;
  for (int i = 0; i < 4; ++i) inputs.push_back(random_vector(6, rng));
  const std::vector<std::vector<int>> hoods = {{0, 1, 2}, {1, 3}, {0, 2, 3}, {3, 2, 1, 0}};
  std::vector<Vector> c;
  for (int i = 0; i < 4; ++i) c.push_back(random_vector(7, rng));
  auto loss = [&] {
    double total = 0.0;
    for (int i = 0; i < 4; ++i) total += c[i].dot(att.message(store, inputs, hoods[i], i));
    return total;
  };
  std::vector<Vector> gin;
  const int n = gradcheck::check_store(store, loss, [&] {
    gin.assign(4, Vector::Zero(6));
    for (int i = 0; i < 4; ++i) {
      MultiHeadAttention::AgentCache cache;
      att.message(store, inputs, hoods[i], i, &cache);
      att.backward(store, inputs, hoods[i], i, cache, c[i], &gin);
    }
  }, rng);
  CHECK(n >= 20 * 11);
  for (int i = 0; i < 4; ++i) gradcheck::check_vector(inputs[i], gin[i], loss, "h" + std::to_string(i));
}

TEST_CASE("soft update") {
  ParamStore a;
  ParamStore b;
  const auto ha = a.add("w", 1, 1);
  b.add("w", 1, 1);
  b.value(ha)(0, 0) = 2.0;
  ParamStore t = a;
  soft_update(t, b, 0.0);
  CHECK(t.value(ha)(0, 0) == 0.0);
  soft_update(t, b, 0.5);
  CHECK(t.value(ha)(0, 0) == 1.0);
  soft_update(t, b, 1.0);
  CHECK(t.value(ha)(0, 0) == 2.0);
  CHECK_THROWS_AS(soft_update(t, b, 1.5), std::invalid_argument);
  ParamStore other;
  other.add("w", 2, 1);
  CHECK_THROWS_AS(soft_update(t, other, 0.5), std::invalid_argument);
}

TEST_CASE("adam minimizes a quadratic") {
  ParamStore store;
  const auto h = store.add("x", 3, 1);
  store.value(h) << 3.0, -2.0, 1.0;
  Adam adam(store, {.learning_rate = 0.05});
  for (int i = 0; i < 2000; ++i) {
    store.grad(h) = 2.0 * store.value(h);
    adam.step(store);
  }
  CHECK(store.value(h).norm() < 1e-2);
  CHECK(store.grad(h).isZero());

  // First step moves each coordinate by about the learning rate.
  ParamStore one;
  const auto k = one.add("x", 2, 1);
  one.value(k) << 1.0, 1.0;
  Adam first(one, {.learning_rate = 0.1});
  one.grad(k) << 5.0, -0.01;
  first.step(one);
  CHECK(std::abs(one.value(k)(0, 0) - 0.9) < 1e-6);
  CHECK(std::abs(one.value(k)(1, 0) - 1.1) < 1e-5);
}

TEST_CASE("gradient clipping bounds the step direction") {
  ParamStore store;
  const auto h = store.add("x", 2, 1);
  store.grad(h) << 30.0, 40.0;
  CHECK(store.grad_norm() == 50.0);
  Adam adam(store, {.learning_rate = 0.1, .max_grad_norm = 1.0});
  adam.step(store);
  CHECK(store.value(h).allFinite());
  CHECK(store.value(h)(0, 0) < 0.0);
}

TEST_CASE("checkpoint round trip is bit exact") {
  ParamStore store;
  Mlp net(store, "net", {4, 6, 2});
  DilatedRnn rnn(store, "rnn", 2, 3, 2);
  Rng rng = make_stream({11});
  net.init(store, rng);
  rnn.init(store, rng);
  std::stringstream buffer;
  write_checkpoint(buffer, collect_tensors({{"s", &store}}));
  const auto tensors = read_checkpoint(buffer);
  ParamStore copy;
  Mlp net2(copy, "net", {4, 6, 2});
  DilatedRnn rnn2(copy, "rnn", 2, 3, 2);
  restore_store(copy, "s", tensors);
  for (std::size_t i = 0; i < store.size(); ++i) {
    CHECK(copy.value(i) == store.value(i));
    CHECK(copy.name(i) == store.name(i));
  }

  std::string bytes = buffer.str();
  std::stringstream again;
  write_checkpoint(again, tensors);
  bytes = again.str();
  bytes[0] = 'X';
  std::stringstream corrupt(bytes);
  CHECK_THROWS(read_checkpoint(corrupt));
  std::stringstream truncated(again.str().substr(0, 30));
  CHECK_THROWS(read_checkpoint(truncated));

  ParamStore wrong;
  wrong.add("net.l0.weight", 5, 4);
  CHECK_THROWS(restore_store(wrong, "s", tensors));
}
