#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "coride/agents.hpp"
#include "coride/environment.hpp"
#include "coride/nn/adam.hpp"
#include "coride/nn/layers.hpp"
#include "coride/ranking.hpp"

namespace coride {

/// <m_{t-1}, o_t, a_t, r_t, o_{t+1}, m_t, done>. `context` holds the attention
/// inputs that produced msg_prev so the actor update can recompute it.
struct Transition {
  int agent = 0;
  Message msg_prev;
  nn::Vector obs;
  nn::Vector action;
  double reward = 0.0;
  nn::Vector obs_next;
  Message msg;
  bool done = false;
  std::shared_ptr<const AttentionContext> context;
};

/// Ring buffer of transitions with fixed per-role vector lengths.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int msg_len, int obs_len, int action_len);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// i-th oldest stored transition.
  const Transition& at(std::size_t i) const;
  /// n distinct transitions drawn uniformly.
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  int msg_len_;
  int obs_len_;
  int action_len_;
  std::size_t cursor_ = 0;
  std::vector<Transition> items_;
};

/// Q(m, o, a): ReLU MLP over [m | o | a] with a scalar head.
class Critic {
 public:
  struct Grads {
    double q = 0.0;
    nn::Vector message;
    nn::Vector obs;
    nn::Vector action;
  };

  Critic() = default;
  Critic(nn::ParamStore& store, const std::string& name, int msg_len, int obs_len, int action_len, int hidden);

  void init(nn::ParamStore& store, Rng& rng) const;
  int msg_len() const { return msg_len_; }
  int obs_len() const { return obs_len_; }
  int action_len() const { return action_len_; }

  double q(const nn::ParamStore& store, const Message& m, const nn::Vector& o, const nn::Vector& a,
           nn::Mlp::Cache* cache = nullptr) const;
  /// Accumulates parameter gradients scaled by dL/dQ and returns input gradients.
  Grads backward(nn::ParamStore& store, const nn::Mlp::Cache& cache, double grad_q) const;

 private:
  int msg_len_ = 0;
  int obs_len_ = 0;
  int action_len_ = 0;
  nn::Mlp net_;
};

/// Deterministic actor mu(m, o). Implementations own no parameters; the
/// store is passed in so target copies share the architecture.
class Policy {
 public:
  struct Pass {
    virtual ~Pass() = default;
    nn::Vector action;
  };

  virtual ~Policy() = default;
  virtual std::unique_ptr<Pass> forward(const nn::ParamStore& store, int agent, const Message& msg,
                                        const nn::Vector& obs) const = 0;
  /// Accumulates actor gradients for dL/da; returns dL/dm.
  virtual Message backward(nn::ParamStore& store, const Pass& pass, const nn::Vector& grad_action) const = 0;
  /// Attention module producing the actor's incoming messages, if trained jointly.
  virtual const nn::MultiHeadAttention* attention() const { return nullptr; }

  nn::Vector act(const nn::ParamStore& store, int agent, const Message& msg, const nn::Vector& obs) const {
    return forward(store, agent, msg, obs)->action;
  }
};

/// Manager actor: obs is the scaled joint observation, action the unit goal.
class ManagerPolicy final : public Policy {
 public:
  explicit ManagerPolicy(const CoRideModel& model) : model_(&model) {}
  std::unique_ptr<Pass> forward(const nn::ParamStore& store, int agent, const Message& msg,
                                const nn::Vector& obs) const override;
  Message backward(nn::ParamStore& store, const Pass& pass, const nn::Vector& grad_action) const override;
  const nn::MultiHeadAttention* attention() const override;

 private:
  const CoRideModel* model_;
};

/// Worker actor: obs is [scaled observation | district goal], action is omega.
class WorkerPolicy final : public Policy {
 public:
  explicit WorkerPolicy(const CoRideModel& model) : model_(&model) {}
  std::unique_ptr<Pass> forward(const nn::ParamStore& store, int agent, const Message& msg,
                                const nn::Vector& obs) const override;
  Message backward(nn::ParamStore& store, const Pass& pass, const nn::Vector& grad_action) const override;
  const nn::MultiHeadAttention* attention() const override;

 private:
  const CoRideModel* model_;
};

/// Q value with gradients with respect to (m, o, a); used by update_actor.
using QFunction = std::function<Critic::Grads(const Message&, const nn::Vector&, const nn::Vector&)>;

/// Wraps a critic; parameter gradients it accumulates are discarded.
QFunction critic_q_function(const Critic& critic, nn::ParamStore& store);

/// y = r + gamma (1 - done) Q'(m, o', mu'(m, o')).
double critic_target(double reward, bool done, const Message& msg, const nn::Vector& obs_next, int agent,
                     const Policy& target_actor, const nn::ParamStore& target_actor_params,
                     const Critic& target_critic, const nn::ParamStore& target_critic_params, double gamma);

/// Gradient of mean (y - Q(m_{t-1}, o_t, a_t))^2 into params (cleared first); returns the loss.
double critic_gradient(const Critic& critic, nn::ParamStore& params, std::span<const Transition* const> batch,
                       std::span<const double> targets);

/// One Adam step on mean (y - Q(m_{t-1}, o_t, a_t))^2; returns the pre-step loss.
double update_critic(const Critic& critic, nn::ParamStore& params, nn::Adam& optimizer,
                     std::span<const Transition* const> batch, std::span<const double> targets);

/// Gradient of -mean Q(m, o, mu(m, o)) into params (cleared first); returns the mean Q.
double actor_gradient(const Policy& actor, nn::ParamStore& params, const QFunction& q,
                      std::span<const Transition* const> batch);

/// One Adam ascent step on mean Q(m, o, mu(m, o)). When the policy has an
/// attention module and a transition carries its context, m is recomputed
/// so the attention parameters are trained too. Returns the pre-step mean Q.
double update_actor(const Policy& actor, nn::ParamStore& params, nn::Adam& optimizer, const QFunction& q,
                    std::span<const Transition* const> batch);

struct DdpgConfig {
  double gamma = 0.95;
  std::size_t capacity = 100000;
  int batch = 32;
  int warmup = 500;
  double soft_tau = 0.01;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double max_grad_norm = 0.0;
  int critic_hidden = 64;
  double reward_scale = 0.1;
  double action_noise = 0.0;  // std of Gaussian noise on omega while training; 0 = none
};

struct TrainConfig {
  AgentConfig agents;
  DdpgConfig ddpg;
  int episodes = 20;
  bool fleet_management = true;
  TemperatureSchedule temperature;  // horizon <= 0 means episodes * steps
  int checkpoint_every = 5;
  std::string checkpoint_dir;  // empty disables checkpoint files
  bool keep_best = true;       // also keep the parameters of the highest-ADI training episode
};

struct EpisodeLog {
  int episode = 0;
  std::uint64_t seed = 0;
  double adi = 0.0;
  double orr = 0.0;
  double mean_intrinsic = 0.0;
  double mean_critic_loss = 0.0;
};

struct TrainResult {
  std::unique_ptr<CoRideModel> model;  // final parameters
  std::unique_ptr<CoRideModel> best;   // snapshot after the highest-ADI episode, if kept
  int best_episode = -1;
  PoissonRates rates;
  std::vector<EpisodeLog> logs;
  std::vector<std::string> checkpoints;
};

/// Poisson rates fitted from one RAN rollout (episode index -1).
PoissonRates calibrate_rates(const Scenario& scenario, std::uint64_t seed);

/// Seeded training loop: rollouts with coride_step, per-role replay,
/// one critic and actor update per role and environment step after warmup,
/// soft target updates and periodic checkpoints.
TrainResult train(const TrainConfig& config, const Scenario& scenario, std::uint64_t seed);

struct EvalOptions {
  double temperature = 0.01;
  bool fleet_management = true;
  bool record_attention = false;
};

struct EvalResult {
  EpisodeMetrics metrics;
  std::vector<AttentionRecord> attention;
};

/// One evaluation episode of a trained model (no learning).
EvalResult run_coride_episode(const CoRideModel& model, const PoissonRates& rates, const Scenario& scenario,
                              std::uint64_t seed, int episode, const EvalOptions& options,
                              const StepObserver& observer = {});

void write_episode_log(std::ostream& out, const std::vector<EpisodeLog>& logs);

}  // namespace coride
