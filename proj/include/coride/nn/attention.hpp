#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coride/nn/params.hpp"

namespace coride::nn {

/// Multi-head neighborhood attention producing one message per agent:
///
///   logit_ij^n = (W_T^n h_i) . (W_S^n h_j)
///   alpha_ij^n = softmax_j in N_i (logit_ij^n / temperature)
///   m_i        = sigmoid(W_q (1/H sum_n sum_j alpha_ij^n W_C^n h_j) + b_q)
template <typename Scalar>
class MultiHeadAttentionT {
 public:
  using Store = ParamStoreT<Scalar>;
  using Vector = VectorT<Scalar>;

  struct AgentCache {
    std::vector<Vector> query;                // per head
    std::vector<std::vector<Vector>> key;     // [head][neighbor]
    std::vector<std::vector<Vector>> value;   // [head][neighbor]
    std::vector<std::vector<Scalar>> alpha;   // [head][neighbor]
    Vector pooled;
    Vector message;
  };

  struct Result {
    std::vector<Vector> messages;
    std::vector<std::vector<std::vector<Scalar>>> alpha;  // [agent][head][neighbor]
  };

  MultiHeadAttentionT() = default;
  MultiHeadAttentionT(Store& store, const std::string& name, int in, int heads, int key_dim, int value_dim, int out,
                      Scalar temperature = Scalar(1))
      : in_(in), heads_(heads), key_dim_(key_dim), value_dim_(value_dim), out_(out), temperature_(temperature) {
    if (heads < 1) throw std::invalid_argument("attention needs at least one head");
    if (!(temperature > Scalar(0))) throw std::invalid_argument("attention temperature must be positive");
    for (int n = 0; n < heads; ++n) {
      const std::string h = name + ".head" + std::to_string(n);
      w_target_.push_back(store.add(h + ".w_target", key_dim, in));
      w_source_.push_back(store.add(h + ".w_source", key_dim, in));
      w_content_.push_back(store.add(h + ".w_content", value_dim, in));
    }
    w_q_ = store.add(name + ".w_q", out, value_dim);
    b_q_ = store.add(name + ".b_q", out, 1);
  }

  int heads() const { return heads_; }
  int in() const { return in_; }
  int out() const { return out_; }
  Scalar temperature() const { return temperature_; }

  void init(Store& store, Rng& rng) const {
    const Scalar s = Scalar(1) / std::sqrt(static_cast<Scalar>(in_));
    for (int n = 0; n < heads_; ++n) {
      init_normal(store, w_target_[n], s, rng);
      init_normal(store, w_source_[n], s, rng);
      init_normal(store, w_content_[n], s, rng);
    }
    init_normal(store, w_q_, Scalar(1) / std::sqrt(static_cast<Scalar>(value_dim_)), rng);
    store.value(b_q_).setZero();
  }

  Vector message(const Store& store, std::span<const Vector> inputs, std::span<const int> neighborhood, int agent,
                 AgentCache* cache = nullptr) const {
    check(inputs, neighborhood, agent);
    AgentCache local;
    AgentCache& c = cache ? *cache : local;
    c.query.assign(heads_, Vector());
    c.key.assign(heads_, {});
    c.value.assign(heads_, {});
    c.alpha.assign(heads_, {});
    Vector pooled = Vector::Zero(value_dim_);
    for (int n = 0; n < heads_; ++n) {
      c.query[n] = store.value(w_target_[n]) * inputs[agent];
      std::vector<Scalar> logits;
      for (int j : neighborhood) {
        c.key[n].push_back(store.value(w_source_[n]) * inputs[j]);
        c.value[n].push_back(store.value(w_content_[n]) * inputs[j]);
        logits.push_back(c.query[n].dot(c.key[n].back()) / temperature_);
      }
      const Scalar top = *std::max_element(logits.begin(), logits.end());
      Scalar total = 0;
      for (auto& l : logits) {
        l = std::exp(l - top);
        total += l;
      }
      for (std::size_t j = 0; j < logits.size(); ++j) {
        const Scalar a = logits[j] / total;
        c.alpha[n].push_back(a);
        pooled += a * c.value[n][j];
      }
    }
    pooled /= static_cast<Scalar>(heads_);
    c.pooled = pooled;
    Vector pre = store.value(w_q_) * pooled + store.value(b_q_).col(0);
    c.message = (Scalar(1) / (Scalar(1) + (-pre.array()).exp())).matrix();
    return c.message;
  }

  Result forward(const Store& store, std::span<const Vector> inputs,
                 const std::vector<std::vector<int>>& neighborhoods) const {
    if (neighborhoods.size() != inputs.size()) throw std::invalid_argument("attention: one neighborhood per agent");
    Result r;
    for (int i = 0; i < static_cast<int>(inputs.size()); ++i) {
      AgentCache c;
      r.messages.push_back(message(store, inputs, neighborhoods[i], i, &c));
      r.alpha.push_back(std::move(c.alpha));
    }
    return r;
  }

  /// Accumulates parameter gradients for one agent's message. When
  /// grad_inputs is given, dL/dh_j is added into it.
  void backward(Store& store, std::span<const Vector> inputs, std::span<const int> neighborhood, int agent,
                const AgentCache& c, const Vector& grad_message, std::vector<Vector>* grad_inputs = nullptr) const {
    if (c.query.size() != static_cast<std::size_t>(heads_)) throw std::logic_error("attention: missing cache");
    Vector g_pre = grad_message.cwiseProduct(c.message.cwiseProduct((Scalar(1) - c.message.array()).matrix()));
    store.grad(w_q_).noalias() += g_pre * c.pooled.transpose();
    store.grad(b_q_).col(0) += g_pre;
    const Vector g_head = (store.value(w_q_).transpose() * g_pre) / static_cast<Scalar>(heads_);

    for (int n = 0; n < heads_; ++n) {
      const std::size_t m = neighborhood.size();
      std::vector<Scalar> g_alpha(m);
      Scalar weighted = 0;
      for (std::size_t j = 0; j < m; ++j) {
        g_alpha[j] = g_head.dot(c.value[n][j]);
        weighted += c.alpha[n][j] * g_alpha[j];
      }
      Vector g_query = Vector::Zero(key_dim_);
      for (std::size_t j = 0; j < m; ++j) {
        const int src = neighborhood[j];
        const Scalar g_logit = c.alpha[n][j] * (g_alpha[j] - weighted) / temperature_;
        const Vector g_value = c.alpha[n][j] * g_head;
        const Vector g_key = g_logit * c.query[n];
        g_query += g_logit * c.key[n][j];
        store.grad(w_source_[n]).noalias() += g_key * inputs[src].transpose();
        store.grad(w_content_[n]).noalias() += g_value * inputs[src].transpose();
        if (grad_inputs) {
          (*grad_inputs)[src] += store.value(w_source_[n]).transpose() * g_key;
          (*grad_inputs)[src] += store.value(w_content_[n]).transpose() * g_value;
        }
      }
      store.grad(w_target_[n]).noalias() += g_query * inputs[agent].transpose();
      if (grad_inputs) (*grad_inputs)[agent] += store.value(w_target_[n]).transpose() * g_query;
    }
  }

 private:
  void check(std::span<const Vector> inputs, std::span<const int> neighborhood, int agent) const {
    if (neighborhood.empty()) throw std::invalid_argument("attention: empty neighborhood");
    if (agent < 0 || agent >= static_cast<int>(inputs.size())) throw std::invalid_argument("attention: bad agent");
    if (std::find(neighborhood.begin(), neighborhood.end(), agent) == neighborhood.end()) {
      throw std::invalid_argument("attention: neighborhood must contain the agent itself");
    }
    for (int j : neighborhood) {
      if (j < 0 || j >= static_cast<int>(inputs.size())) throw std::invalid_argument("attention: bad neighbor");
      if (inputs[j].size() != in_) throw std::invalid_argument("attention: input length mismatch");
    }
  }

  int in_ = 0;
  int heads_ = 1;
  int key_dim_ = 0;
  int value_dim_ = 0;
  int out_ = 0;
  Scalar temperature_ = 1;
  std::vector<ParamHandle> w_target_;
  std::vector<ParamHandle> w_source_;
  std::vector<ParamHandle> w_content_;
  ParamHandle w_q_;
  ParamHandle b_q_;
};

using MultiHeadAttention = MultiHeadAttentionT<double>;

}  // namespace coride::nn
