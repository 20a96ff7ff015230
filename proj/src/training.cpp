#include "coride/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>

#include "coride/baselines.hpp"

namespace coride {

// ---- replay -----------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity, int msg_len, int obs_len, int action_len)
    : capacity_(capacity), msg_len_(msg_len), obs_len_(obs_len), action_len_(action_len) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (t.msg_prev.size() != msg_len_ || t.msg.size() != msg_len_ || t.obs.size() != obs_len_ ||
      t.obs_next.size() != obs_len_ || t.action.size() != action_len_) {
    throw std::invalid_argument("replay: transition shape does not match the buffer");
  }
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[cursor_] = std::move(t);
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw std::out_of_range("replay index out of range");
  const std::size_t oldest = items_.size() < capacity_ ? 0 : cursor_;
  return items_[(oldest + i) % items_.size()];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (n > items_.size()) throw std::invalid_argument("replay: batch larger than buffer");
  std::vector<const Transition*> out;
  std::set<std::size_t> seen;
  while (out.size() < n) {
    const auto i = static_cast<std::size_t>(uniform_index(rng, static_cast<int>(items_.size())));
    if (seen.insert(i).second) out.push_back(&items_[i]);
  }
  return out;
}

// ---- critic -----------------------------------------------------------------

Critic::Critic(nn::ParamStore& store, const std::string& name, int msg_len, int obs_len, int action_len, int hidden)
    : msg_len_(msg_len),
      obs_len_(obs_len),
      action_len_(action_len),
      net_(store, name, {msg_len + obs_len + action_len, hidden, hidden, 1}) {}

void Critic::init(nn::ParamStore& store, Rng& rng) const { net_.init(store, rng, 0.1); }

double Critic::q(const nn::ParamStore& store, const Message& m, const nn::Vector& o, const nn::Vector& a,
                 nn::Mlp::Cache* cache) const {
  if (m.size() != msg_len_ || o.size() != obs_len_ || a.size() != action_len_) {
    throw std::invalid_argument("critic: input shape mismatch");
  }
  nn::Vector x(msg_len_ + obs_len_ + action_len_);
  x << m, o, a;
  return net_.forward(store, x, cache)[0];
}

Critic::Grads Critic::backward(nn::ParamStore& store, const nn::Mlp::Cache& cache, double grad_q) const {
  const nn::Vector gx = net_.backward(store, cache, nn::Vector::Constant(1, grad_q));
  Grads g;
  g.q = cache.output[0];
  g.message = gx.head(msg_len_);
  g.obs = gx.segment(msg_len_, obs_len_);
  g.action = gx.tail(action_len_);
  return g;
}

QFunction critic_q_function(const Critic& critic, nn::ParamStore& store) {
  return [&critic, &store](const Message& m, const nn::Vector& o, const nn::Vector& a) {
    nn::Mlp::Cache cache;
    critic.q(store, m, o, a, &cache);
    Critic::Grads g = critic.backward(store, cache, 1.0);
    store.zero_grad();
    return g;
  };
}

// ---- actors -----------------------------------------------------------------

namespace {

struct ManagerPass final : Policy::Pass {
  ManagerNet::Pass inner;
};

struct WorkerPass final : Policy::Pass {
  WorkerNet::Pass inner;
};

}  // namespace

std::unique_ptr<Policy::Pass> ManagerPolicy::forward(const nn::ParamStore& store, int, const Message& msg,
                                                     const nn::Vector& obs) const {
  auto p = std::make_unique<ManagerPass>();
  p->inner = model_->manager().act(store, obs, msg, model_->manager().initial_state());
  p->action = p->inner.goal;
  return p;
}

Message ManagerPolicy::backward(nn::ParamStore& store, const Pass& pass, const nn::Vector& grad_action) const {
  return model_->manager().backward(store, static_cast<const ManagerPass&>(pass).inner, grad_action);
}

const nn::MultiHeadAttention* ManagerPolicy::attention() const {
  return model_->config().attention ? &model_->manager_attention() : nullptr;
}

std::unique_ptr<Policy::Pass> WorkerPolicy::forward(const nn::ParamStore& store, int agent, const Message& msg,
                                                    const nn::Vector& obs) const {
  if (obs.size() != model_->worker_context_len()) throw std::invalid_argument("worker policy: bad observation length");
  auto p = std::make_unique<WorkerPass>();
  p->inner = model_->worker().act(store, agent, obs.head(Observation::kLength), msg,
                                  obs.tail(model_->config().goal_dim), model_->worker().initial_state());
  p->action = p->inner.omega;
  return p;
}

Message WorkerPolicy::backward(nn::ParamStore& store, const Pass& pass, const nn::Vector& grad_action) const {
  return model_->worker().backward(store, static_cast<const WorkerPass&>(pass).inner, grad_action).message;
}

const nn::MultiHeadAttention* WorkerPolicy::attention() const {
  return model_->config().attention ? &model_->worker_attention() : nullptr;
}

// ---- updates ----------------------------------------------------------------

double critic_target(double reward, bool done, const Message& msg, const nn::Vector& obs_next, int agent,
                     const Policy& target_actor, const nn::ParamStore& target_actor_params,
                     const Critic& target_critic, const nn::ParamStore& target_critic_params, double gamma) {
  if (done || gamma == 0.0) return reward;
  const nn::Vector a = target_actor.act(target_actor_params, agent, msg, obs_next);
  return reward + gamma * target_critic.q(target_critic_params, msg, obs_next, a);
}

double critic_gradient(const Critic& critic, nn::ParamStore& params, std::span<const Transition* const> batch,
                       std::span<const double> targets) {
  if (batch.empty()) throw std::invalid_argument("update_critic: empty batch");
  if (targets.size() != batch.size()) throw std::invalid_argument("update_critic: one target per transition");
  const double n = static_cast<double>(batch.size());
  double loss = 0.0;
  params.zero_grad();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = *batch[i];
    nn::Mlp::Cache cache;
    const double q = critic.q(params, t.msg_prev, t.obs, t.action, &cache);
    const double residual = q - targets[i];
    loss += residual * residual;
    critic.backward(params, cache, 2.0 * residual / n);
  }
  return loss / n;
}

double update_critic(const Critic& critic, nn::ParamStore& params, nn::Adam& optimizer,
                     std::span<const Transition* const> batch, std::span<const double> targets) {
  const double loss = critic_gradient(critic, params, batch, targets);
  optimizer.step(params);
  return loss;
}

double actor_gradient(const Policy& actor, nn::ParamStore& params, const QFunction& q,
                      std::span<const Transition* const> batch) {
  if (batch.empty()) throw std::invalid_argument("update_actor: empty batch");
  const double n = static_cast<double>(batch.size());
  const nn::MultiHeadAttention* attention = actor.attention();
  double objective = 0.0;
  params.zero_grad();
  for (const Transition* t : batch) {
    const bool recompute = attention && t->context;
    nn::MultiHeadAttention::AgentCache cache;
    Message m = t->msg_prev;
    if (recompute) {
      const auto& nb = t->context->neighborhoods.at(t->agent);
      m = attention->message(params, t->context->inputs, nb, t->agent, &cache);
    }
    auto pass = actor.forward(params, t->agent, m, t->obs);
    const Critic::Grads g = q(m, t->obs, pass->action);
    objective += g.q;
    // Minimize -J: the gradient of the loss with respect to a is -dQ/da / n.
    Message gm = actor.backward(params, *pass, -g.action / n);
    if (recompute) {
      gm -= g.message / n;
      attention->backward(params, t->context->inputs, t->context->neighborhoods.at(t->agent), t->agent, cache, gm);
    }
  }
  return objective / n;
}

double update_actor(const Policy& actor, nn::ParamStore& params, nn::Adam& optimizer, const QFunction& q,
                    std::span<const Transition* const> batch) {
  const double objective = actor_gradient(actor, params, q, batch);
  optimizer.step(params);
  return objective;
}

// ---- training loop ----------------------------------------------------------

PoissonRates calibrate_rates(const Scenario& scenario, std::uint64_t seed) {
  constexpr int kCalibrationEpisode = -1;
  CountHistory history(scenario.world->size(), scenario.env.buckets);
  SimState state = begin_episode(scenario, seed, kCalibrationEpisode);
  std::int64_t next_id = 0;
  for (int t = 0; t < scenario.env.steps; ++t) {
    open_step(scenario, state, seed, kCalibrationEpisode, next_id);
    history.record_state(state, time_bucket(state.clock, scenario.env.steps_per_day, scenario.env.buckets));
    auto [next, outcome] = step(*scenario.world, state, decide_all(RuleKind::Ran, state, seed, kCalibrationEpisode));
    state = std::move(next);
  }
  return fit_poisson_rates(history);
}

namespace {

struct Role {
  std::unique_ptr<Policy> actor;
  nn::ParamStore* actor_params = nullptr;
  nn::ParamStore target_actor;
  nn::ParamStore critic_params;
  nn::ParamStore target_critic;
  Critic critic;
  nn::Adam actor_opt;
  nn::Adam critic_opt;
  ReplayBuffer buffer;
  Rng replay_rng;

  Role(std::unique_ptr<Policy> a, nn::ParamStore& params, const std::string& name, int msg_len, int obs_len,
       int action_len, const DdpgConfig& cfg, Rng& init_rng, Rng replay)
      : actor(std::move(a)),
        actor_params(&params),
        target_actor(params),
        buffer(cfg.capacity, msg_len, obs_len, action_len),
        replay_rng(std::move(replay)) {
    critic = Critic(critic_params, name + ".critic", msg_len, obs_len, action_len, cfg.critic_hidden);
    critic.init(critic_params, init_rng);
    target_critic = critic_params;
    actor_opt = nn::Adam(params, {cfg.actor_lr, 0.9, 0.999, 1e-8, cfg.max_grad_norm});
    critic_opt = nn::Adam(critic_params, {cfg.critic_lr, 0.9, 0.999, 1e-8, cfg.max_grad_norm});
  }

  // Returns the critic loss, or a negative value when no update ran.
  double update(const DdpgConfig& cfg) {
    if (buffer.size() < static_cast<std::size_t>(cfg.warmup)) return -1.0;
    const auto batch = buffer.sample(static_cast<std::size_t>(cfg.batch), replay_rng);
    std::vector<double> targets;
    targets.reserve(batch.size());
    for (const Transition* t : batch) {
      targets.push_back(critic_target(t->reward, t->done, t->msg, t->obs_next, t->agent, *actor, target_actor, critic,
                                      target_critic, cfg.gamma));
    }
    const double loss = update_critic(critic, critic_params, critic_opt, batch, targets);
    update_actor(*actor, *actor_params, actor_opt, critic_q_function(critic, critic_params), batch);
    nn::soft_update(target_actor, *actor_params, cfg.soft_tau);
    nn::soft_update(target_critic, critic_params, cfg.soft_tau);
    return loss;
  }
};

nn::Vector worker_context(const nn::Vector& obs, const Goal& goal) {
  nn::Vector v(obs.size() + goal.size());
  v << obs, goal;
  return v;
}

void validate(const TrainConfig& c, const Scenario& s) {
  if (!s.world || !s.source) throw std::invalid_argument("train: scenario needs a world and an order source");
  if (c.episodes < 0) throw std::invalid_argument("train: episodes must be non-negative");
  if (c.ddpg.batch < 1) throw std::invalid_argument("train: batch must be positive");
  if (c.ddpg.batch > c.ddpg.warmup) throw std::invalid_argument("train: batch exceeds the replay warmup");
  if (static_cast<std::size_t>(c.ddpg.warmup) > c.ddpg.capacity) {
    throw std::invalid_argument("train: warmup exceeds the replay capacity");
  }
  if (!(c.ddpg.gamma >= 0.0 && c.ddpg.gamma <= 1.0)) throw std::invalid_argument("train: gamma must lie in [0, 1]");
  if (!(c.ddpg.soft_tau >= 0.0 && c.ddpg.soft_tau <= 1.0)) throw std::invalid_argument("train: soft_tau must lie in [0, 1]");
  if (c.checkpoint_every < 1) throw std::invalid_argument("train: checkpoint_every must be positive");
}

}  // namespace

TrainResult train(const TrainConfig& config, const Scenario& scenario, std::uint64_t seed) {
  validate(config, scenario);
  const GridWorld& world = *scenario.world;
  const DdpgConfig& dc = config.ddpg;
  TrainResult result;
  result.model = std::make_unique<CoRideModel>(world, config.agents, seed);
  CoRideModel& model = *result.model;
  result.rates = calibrate_rates(scenario, seed);

  Rng critic_init = make_stream({seed, tag(StreamTag::Init), 1});
  const int h = config.agents.hidden;
  Role manager(std::make_unique<ManagerPolicy>(model), model.manager_params, "manager", h, model.manager_obs_len(),
               config.agents.goal_dim, dc, critic_init, make_stream({seed, tag(StreamTag::Replay), 0}));
  Role worker(std::make_unique<WorkerPolicy>(model), model.worker_params, "worker", h, model.worker_context_len(),
              model.worker().action_len(), dc, critic_init, make_stream({seed, tag(StreamTag::Replay), 1}));

  TemperatureSchedule schedule = config.temperature;
  if (schedule.horizon <= 0) schedule.horizon = static_cast<long>(config.episodes) * scenario.env.steps;

  auto save = [&](int episode) {
    if (config.checkpoint_dir.empty()) return;
    std::filesystem::create_directories(config.checkpoint_dir);
    const auto path = (std::filesystem::path(config.checkpoint_dir) / ("checkpoint_ep" + std::to_string(episode) + ".bin")).string();
    nn::save_checkpoint_file(path, model_tensors(model));
    result.checkpoints.push_back(path);
  };
  save(0);

  const double scale = dc.reward_scale;
  const double beta = config.agents.beta;
  long global_step = 0;
  for (int e = 0; e < config.episodes; ++e) {
    SimState state = begin_episode(scenario, seed, e);
    AgentMemory memory = AgentMemory::initial(model, world);
    EpisodeMetrics metrics;
    std::int64_t next_id = 0;
    double intrinsic_sum = 0.0;
    long intrinsic_count = 0;
    double loss_sum = 0.0;
    long loss_count = 0;
    std::optional<CoRideStepResult> prev;

    // Transitions for step t are completed once o_{t+1}, g_{t+1} and r^W_{t+1} exist.
    auto finalize = [&](const CoRideStepResult& p, const std::vector<nn::Vector>& manager_next,
                        const std::vector<nn::Vector>& worker_next, const std::vector<Goal>& goals_next,
                        const std::vector<double>& intrinsic_next, bool done) {
      for (DistrictId d = 0; d < world.district_count(); ++d) {
        manager.buffer.push({d, p.manager_message_in[d], p.manager_obs[d], p.goals[d], scale * p.manager_rewards[d],
                             manager_next[d], p.manager_message_out[d], done, p.manager_context_in});
      }
      for (GridId g = 0; g < world.size(); ++g) {
        const DistrictId d = world.district_of(g);
        intrinsic_sum += intrinsic_next[g];
        ++intrinsic_count;
        const double reward = scale * (intrinsic_next[g] + beta * p.manager_rewards[d]);
        worker.buffer.push({g, p.worker_message_in[g], worker_context(p.worker_obs[g], p.goals[d]), p.omega[g], reward,
                            worker_context(worker_next[g], goals_next[d]), p.worker_message_out[g], done,
                            p.worker_context_in});
      }
    };

    for (int t = 0; t < scenario.env.steps; ++t, ++global_step) {
      open_step(scenario, state, seed, e, next_id);
      StepOptions opt;
      opt.temperature = anneal_temperature(global_step, schedule);
      opt.fleet_management = config.fleet_management;
      opt.seed = seed;
      opt.episode = e;
      opt.rates = &result.rates;
      opt.bucket = time_bucket(state.clock, scenario.env.steps_per_day, scenario.env.buckets);
      opt.action_noise = dc.action_noise;
      CoRideStepResult r = coride_step(world, state, model, memory, opt);
      metrics.add(r.outcome);
      if (prev) finalize(*prev, r.manager_obs, r.worker_obs, r.goals, r.intrinsic_rewards, false);
      state = r.next_state;
      prev = std::move(r);

      for (Role* role : {&manager, &worker}) {
        const double loss = role->update(dc);
        if (loss >= 0.0) {
          loss_sum += loss;
          ++loss_count;
        }
      }
    }

    if (prev) {
      // Terminal transition: observe the final state and score it against the goal history.
      std::vector<nn::Vector> manager_next(world.district_count());
      for (DistrictId d = 0; d < world.district_count(); ++d) {
        manager_next[d] = scale_manager_observation(observe_manager(world, state, d), config.agents.features);
      }
      std::vector<nn::Vector> worker_next(world.size());
      std::vector<double> intrinsic(world.size(), 0.0);
      for (GridId g = 0; g < world.size(); ++g) {
        worker_next[g] = scale_worker_observation(observe_worker(state, g), config.agents.features);
        std::vector<nn::Vector> o(memory.obs_history[g].begin(), memory.obs_history[g].end());
        o.push_back(worker_next[g]);
        if (static_cast<int>(o.size()) > config.agents.horizon + 1) o.erase(o.begin());
        const auto& goals = memory.goal_history[g];
        const std::vector<Goal> gh(goals.end() - static_cast<long>(o.size() - 1), goals.end());
        intrinsic[g] = intrinsic_reward(o, gh, config.agents.horizon, model.projection());
      }
      finalize(*prev, manager_next, worker_next, prev->goals, intrinsic, true);
    }

    if (!model.manager_params.all_finite() || !model.worker_params.all_finite()) {
      throw std::runtime_error("training diverged: non-finite parameters in episode " + std::to_string(e));
    }

    EpisodeLog log;
    log.episode = e;
    log.seed = seed;
    log.adi = metrics.adi;
    log.orr = metrics.orr();
    log.mean_intrinsic = intrinsic_count ? intrinsic_sum / static_cast<double>(intrinsic_count) : 0.0;
    log.mean_critic_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    result.logs.push_back(log);

    if (config.keep_best && (!result.best || log.adi > result.logs[result.best_episode].adi)) {
      result.best = std::make_unique<CoRideModel>(model);
      result.best_episode = e;
    }
    if ((e + 1) % config.checkpoint_every == 0 || e + 1 == config.episodes) save(e + 1);
  }
  if (result.best && !config.checkpoint_dir.empty()) {
    const auto path = (std::filesystem::path(config.checkpoint_dir) / "checkpoint_best.bin").string();
    nn::save_checkpoint_file(path, model_tensors(*result.best));
    result.checkpoints.push_back(path);
  }
  return result;
}

EvalResult run_coride_episode(const CoRideModel& model, const PoissonRates& rates, const Scenario& scenario,
                              std::uint64_t seed, int episode, const EvalOptions& options,
                              const StepObserver& observer) {
  EvalResult out;
  SimState state = begin_episode(scenario, seed, episode);
  AgentMemory memory = AgentMemory::initial(model, *scenario.world);
  std::int64_t next_id = 0;
  for (int t = 0; t < scenario.env.steps; ++t) {
    open_step(scenario, state, seed, episode, next_id);
    StepOptions opt;
    opt.temperature = options.temperature;
    opt.fleet_management = options.fleet_management;
    opt.seed = seed;
    opt.episode = episode;
    opt.rates = &rates;
    opt.bucket = time_bucket(state.clock, scenario.env.steps_per_day, scenario.env.buckets);
    opt.record_attention = options.record_attention;
    CoRideStepResult r = coride_step(*scenario.world, state, model, memory, opt);
    if (observer) observer(state, r.decisions);
    out.metrics.add(r.outcome);
    if (options.record_attention) out.attention.insert(out.attention.end(), r.attention.begin(), r.attention.end());
    state = std::move(r.next_state);
  }
  return out;
}

void write_episode_log(std::ostream& out, const std::vector<EpisodeLog>& logs) {
  out << "episode,seed,adi,orr,mean_intrinsic,mean_critic_loss\n";
  out << std::setprecision(10);
  for (const auto& l : logs) {
    out << l.episode << ',' << l.seed << ',' << l.adi << ',' << l.orr << ',' << l.mean_intrinsic << ','
        << l.mean_critic_loss << '\n';
  }
}

}  // namespace coride
