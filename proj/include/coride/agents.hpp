#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "coride/hexgrid.hpp"
#include "coride/market.hpp"
#include "coride/nn/attention.hpp"
#include "coride/nn/checkpoint.hpp"
#include "coride/nn/layers.hpp"
#include "coride/nn/recurrent.hpp"
#include "coride/ranking.hpp"

namespace coride {

using Goal = nn::Vector;
using Message = nn::Vector;

struct AgentConfig {
  int hidden = 64;          // recurrent and message width
  int goal_dim = 16;
  int goal_embed_dim = 16;  // length of the worker's goal embedding before tiling
  int dilation = 4;         // manager recurrence
  int heads = 4;
  int embed_dim = 8;        // grid embedding width inside ranking features
  int mlp_hidden = 64;
  double attention_temperature = 1.0;
  int horizon = 4;          // intrinsic reward look-back c
  double beta = 0.5;        // weight of the manager reward in the worker reward
  bool attention = true;    // false freezes messages at zero
  FeatureConfig features;
  std::uint64_t projection_seed = 17;
};

inline constexpr double kGoalEpsilon = 1e-8;

/// g = raw / |raw|, or the first basis vector when |raw| < kGoalEpsilon.
Goal normalize_goal(const nn::Vector& raw);

/// Network-facing worker observation: counts divided by count_scale, prices
/// by the reference price, durations by the max duration.
nn::Vector scale_worker_observation(const Observation& obs, const FeatureConfig& features);
nn::Vector scale_manager_observation(const Eigen::VectorXd& joint, const FeatureConfig& features);

/// Manager: two-layer MLP over [obs | msg], dilated recurrence, linear goal head.
class ManagerNet {
 public:
  struct Pass {
    nn::Vector input;
    nn::Mlp::Cache encoder;
    nn::Vector encoded;
    nn::RecurrentState before;
    nn::RecurrentState after;
    nn::Vector hidden;  // attention input h^M
    nn::Vector raw_goal;
    Goal goal;
  };

  ManagerNet() = default;
  ManagerNet(nn::ParamStore& store, int obs_len, const AgentConfig& config);

  void init(nn::ParamStore& store, Rng& rng) const;
  int obs_len() const { return obs_len_; }
  nn::RecurrentState initial_state() const { return rnn_.initial_state(); }

  Pass act(const nn::ParamStore& store, const nn::Vector& obs, const Message& msg,
           const nn::RecurrentState& state) const;

  /// Accumulates gradients for dL/dgoal (and optionally dL/dhidden); returns dL/dmsg.
  nn::Vector backward(nn::ParamStore& store, const Pass& pass, const nn::Vector& grad_goal,
                      const nn::Vector* grad_hidden = nullptr) const;

 private:
  int obs_len_ = 0;
  int hidden_ = 0;
  nn::Mlp encoder_;
  nn::DilatedRnn rnn_;
  nn::Dense goal_head_;
};

/// Worker: recurrent cell over [obs | msg | grid embedding]; the ranking
/// weights are W_a [u | u * tile(W_phi g)] + b_a.
class WorkerNet {
 public:
  struct Pass {
    GridId grid = 0;
    nn::Vector input;
    nn::RecurrentState before;
    nn::RecurrentState after;
    nn::Vector u;
    Goal goal;
    nn::Vector goal_embedding;
    nn::Vector tiled;
    nn::Vector joint;
    nn::Vector omega;
  };

  struct Grads {
    nn::Vector message;
    nn::Vector goal;
    nn::Vector observation;
  };

  WorkerNet() = default;
  WorkerNet(nn::ParamStore& store, int grids, const AgentConfig& config);

  void init(nn::ParamStore& store, Rng& rng) const;
  int action_len() const { return action_len_; }
  nn::ParamHandle embeddings() const { return embedding_; }
  nn::RecurrentState initial_state() const { return nn::RecurrentState::zeros(hidden_); }

  nn::Vector goal_embed(const nn::ParamStore& store, const Goal& goal) const;

  Pass act(const nn::ParamStore& store, GridId grid, const nn::Vector& obs, const Message& msg, const Goal& goal,
           const nn::RecurrentState& state) const;

  Grads backward(nn::ParamStore& store, const Pass& pass, const nn::Vector& grad_omega,
                 const nn::Vector* grad_u = nullptr) const;

 private:
  int grids_ = 0;
  int hidden_ = 0;
  int embed_dim_ = 0;
  int action_len_ = 0;
  nn::ParamHandle embedding_;
  nn::RnnCell rnn_;
  nn::Dense goal_embed_;
  nn::Dense action_head_;
};

/// Attention inputs of one level at one step: h per agent and, per agent,
/// the indices it attends over.
struct AttentionContext {
  std::vector<nn::Vector> inputs;
  std::vector<std::vector<int>> neighborhoods;
};

/// Shared-parameter actors for both levels plus their attention modules.
class CoRideModel {
 public:
  CoRideModel(const GridWorld& world, const AgentConfig& config, std::uint64_t seed);

  const AgentConfig& config() const { return config_; }
  int manager_obs_len() const { return manager_obs_len_; }
  int worker_obs_len() const { return Observation::kLength; }
  int worker_context_len() const { return Observation::kLength + config_.goal_dim; }

  const ManagerNet& manager() const { return manager_; }
  const WorkerNet& worker() const { return worker_; }
  const nn::MultiHeadAttention& manager_attention() const { return manager_attention_; }
  const nn::MultiHeadAttention& worker_attention() const { return worker_attention_; }

  nn::ParamStore manager_params;
  nn::ParamStore worker_params;

  const Eigen::MatrixXd& projection() const { return projection_; }
  const std::vector<std::vector<int>>& worker_neighborhoods() const { return worker_neighborhoods_; }
  const std::vector<std::vector<int>>& manager_neighborhoods() const { return manager_neighborhoods_; }

  Eigen::MatrixXd embedding_table() const { return worker_params.value(worker_.embeddings()); }

 private:
  AgentConfig config_;
  int manager_obs_len_ = 0;
  ManagerNet manager_;
  WorkerNet worker_;
  nn::MultiHeadAttention manager_attention_;
  nn::MultiHeadAttention worker_attention_;
  Eigen::MatrixXd projection_;
  std::vector<std::vector<int>> worker_neighborhoods_;   // grid -> district siblings (incl. self)
  std::vector<std::vector<int>> manager_neighborhoods_;  // district -> adjacent districts (incl. self)
};

/// (1/n) sum_{i=1..n} cos(P (o_t - o_{t-i}), g_{t-i}) with n = min(c, available
/// past steps). obs_history ends at o_t; goal_history[k] is the goal emitted
/// alongside obs_history[k]. Zero differences contribute 0. An empty
/// projection means observations are already in goal space.
double intrinsic_reward(std::span<const nn::Vector> obs_history, std::span<const Goal> goal_history, int horizon,
                        const Eigen::MatrixXd& projection = Eigen::MatrixXd());

/// Per-agent messages for one attention level.
struct AttentionOutput {
  std::vector<Message> messages;
  std::vector<std::vector<std::vector<double>>> alpha;  // [agent][head][neighbor]
};

AttentionOutput attention_exchange(const nn::MultiHeadAttention& attention, const nn::ParamStore& store,
                                   const AttentionContext& context);

struct AttentionRecord {
  int step = 0;
  int level = 0;  // 0 = manager, 1 = worker
  int head = 0;
  int source = 0;  // attending agent
  int target = 0;  // attended neighbor
  double weight = 0.0;
};

/// Recurrent states, last messages and short histories carried across steps.
struct AgentMemory {
  std::vector<nn::RecurrentState> manager_state;
  std::vector<nn::RecurrentState> worker_state;
  std::vector<Message> manager_message;
  std::vector<Message> worker_message;
  std::shared_ptr<const AttentionContext> manager_context;
  std::shared_ptr<const AttentionContext> worker_context;
  std::vector<std::deque<nn::Vector>> obs_history;
  std::vector<std::deque<Goal>> goal_history;

  static AgentMemory initial(const CoRideModel& model, const GridWorld& world);
};

struct StepOptions {
  double temperature = 1.0;
  bool fleet_management = true;
  bool greedy = false;
  std::uint64_t seed = 0;
  int episode = 0;
  const PoissonRates* rates = nullptr;
  int bucket = 0;
  bool record_attention = false;
  double action_noise = 0.0;  // std of Gaussian noise added to omega
};

struct CoRideStepResult {
  Decisions decisions;
  SimState next_state;
  StepOutcome outcome;

  std::vector<double> manager_rewards;    // per district
  std::vector<double> intrinsic_rewards;  // per grid, evaluated at this step's observation
  std::vector<bool> has_intrinsic;

  std::vector<nn::Vector> manager_obs;
  std::vector<Goal> goals;
  std::vector<Message> manager_message_in;
  std::vector<Message> manager_message_out;
  std::shared_ptr<const AttentionContext> manager_context_in;

  std::vector<nn::Vector> worker_obs;
  std::vector<nn::Vector> omega;
  std::vector<Message> worker_message_in;
  std::vector<Message> worker_message_out;
  std::shared_ptr<const AttentionContext> worker_context_in;

  std::vector<AttentionRecord> attention;
  int manager_attention_calls = 0;
  int worker_attention_calls = 0;
};

/// Candidate items for one grid: pending real orders, then fleet items when enabled.
std::vector<Order> item_space(const GridWorld& world, const SimState& state, GridId grid, bool fleet_management);

/// One joint decision step: goals, ranking weights, Selected-k per grid,
/// worker attention per district, the simulator transition, rewards and
/// manager attention. Updates memory in place.
CoRideStepResult coride_step(const GridWorld& world, const SimState& state, const CoRideModel& model,
                             AgentMemory& memory, const StepOptions& options);

std::vector<nn::NamedTensor> model_tensors(const CoRideModel& model);
void restore_model(CoRideModel& model, const std::vector<nn::NamedTensor>& tensors);

}  // namespace coride
