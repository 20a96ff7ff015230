#include "coride/agents.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coride {

Goal normalize_goal(const nn::Vector& raw) {
  if (raw.size() == 0) throw std::invalid_argument("goal: empty vector");
  const double norm = raw.norm();
  if (!(norm >= kGoalEpsilon)) {
    Goal g = Goal::Zero(raw.size());
    g[0] = 1.0;
    return g;
  }
  return raw / norm;
}

nn::Vector scale_worker_observation(const Observation& obs, const FeatureConfig& f) {
  nn::Vector v = obs.flatten();
  v[0] /= f.count_scale;
  v[1] /= f.count_scale;
  v[3] /= f.count_scale;
  v[4] /= f.reference_price;
  v[5] /= f.reference_price;
  v[6] /= f.max_duration;
  v[7] /= f.max_duration;
  v[8] /= f.count_scale;
  return v;
}

nn::Vector scale_manager_observation(const Eigen::VectorXd& joint, const FeatureConfig& f) {
  if (joint.size() % Observation::kLength != 0) throw std::invalid_argument("manager observation has a ragged length");
  nn::Vector v = joint;
  for (Eigen::Index base = 0; base < v.size(); base += Observation::kLength) {
    v[base + 0] /= f.count_scale;
    v[base + 1] /= f.count_scale;
    v[base + 3] /= f.count_scale;
    v[base + 4] /= f.reference_price;
    v[base + 5] /= f.reference_price;
    v[base + 6] /= f.max_duration;
    v[base + 7] /= f.max_duration;
    v[base + 8] /= f.count_scale;
  }
  return v;
}

// ---- manager ----------------------------------------------------------------

ManagerNet::ManagerNet(nn::ParamStore& store, int obs_len, const AgentConfig& c)
    : obs_len_(obs_len),
      hidden_(c.hidden),
      encoder_(store, "manager.encoder", {obs_len + c.hidden, c.mlp_hidden, c.hidden}),
      rnn_(store, "manager.rnn", c.hidden, c.hidden, c.dilation),
      goal_head_(store, "manager.goal", c.hidden, c.goal_dim) {}

void ManagerNet::init(nn::ParamStore& store, Rng& rng) const {
  encoder_.init(store, rng);
  rnn_.init(store, rng);
  goal_head_.init(store, rng);
}

ManagerNet::Pass ManagerNet::act(const nn::ParamStore& store, const nn::Vector& obs, const Message& msg,
                                 const nn::RecurrentState& state) const {
  if (obs.size() != obs_len_ || msg.size() != hidden_) throw std::invalid_argument("manager_act: shape mismatch");
  Pass p;
  p.input.resize(obs_len_ + hidden_);
  p.input << obs, msg;
  p.encoded = encoder_.forward(store, p.input, &p.encoder);
  p.before = state;
  std::tie(p.after, p.hidden) = rnn_.step(store, state, p.encoded);
  p.raw_goal = goal_head_.forward(store, p.hidden);
  p.goal = normalize_goal(p.raw_goal);
  return p;
}

nn::Vector ManagerNet::backward(nn::ParamStore& store, const Pass& p, const nn::Vector& grad_goal,
                                const nn::Vector* grad_hidden) const {
  const double norm = p.raw_goal.norm();
  nn::Vector grad_raw = nn::Vector::Zero(p.raw_goal.size());
  if (norm >= kGoalEpsilon) grad_raw = (grad_goal - p.goal * p.goal.dot(grad_goal)) / norm;
  nn::Vector gh = goal_head_.backward(store, p.hidden, grad_raw);
  if (grad_hidden) gh += *grad_hidden;
  auto [gx, ring] = rnn_.backward(store, p.before, p.after, p.encoded, gh);
  const nn::Vector gin = encoder_.backward(store, p.encoder, gx);
  return gin.tail(hidden_);
}

// ---- worker -----------------------------------------------------------------

WorkerNet::WorkerNet(nn::ParamStore& store, int grids, const AgentConfig& c)
    : grids_(grids),
      hidden_(c.hidden),
      embed_dim_(c.embed_dim),
      action_len_(feature_length(c.embed_dim)),
      rnn_(store, "worker.rnn", Observation::kLength + c.hidden + c.embed_dim, c.hidden),
      goal_embed_(store, "worker.goal_embed", c.goal_dim, c.goal_embed_dim, false),
      action_head_(store, "worker.action", 2 * c.hidden, feature_length(c.embed_dim)) {
  embedding_ = store.add("worker.embedding", grids, c.embed_dim);
}

void WorkerNet::init(nn::ParamStore& store, Rng& rng) const {
  rnn_.init(store, rng);
  goal_embed_.init(store, rng);
  action_head_.init(store, rng);
  nn::init_normal(store, embedding_, 0.1, rng);
}

nn::Vector WorkerNet::goal_embed(const nn::ParamStore& store, const Goal& goal) const {
  return goal_embed_.forward(store, goal);
}

WorkerNet::Pass WorkerNet::act(const nn::ParamStore& store, GridId grid, const nn::Vector& obs, const Message& msg,
                               const Goal& goal, const nn::RecurrentState& state) const {
  if (grid < 0 || grid >= grids_) throw std::invalid_argument("worker_act: unknown grid");
  if (obs.size() != Observation::kLength || msg.size() != hidden_) {
    throw std::invalid_argument("worker_act: shape mismatch");
  }
  Pass p;
  p.grid = grid;
  p.input.resize(Observation::kLength + hidden_ + embed_dim_);
  p.input << obs, msg, store.value(embedding_).row(grid).transpose();
  p.before = state;
  std::tie(p.after, p.u) = rnn_.step(store, state, p.input);
  p.goal = goal;
  p.goal_embedding = goal_embed(store, goal);
  const Eigen::Index w = p.goal_embedding.size();
  p.tiled.resize(hidden_);
  for (int i = 0; i < hidden_; ++i) p.tiled[i] = w == 0 ? 0.0 : p.goal_embedding[i % w];
  p.joint.resize(2 * hidden_);
  p.joint << p.u, p.u.cwiseProduct(p.tiled);
  p.omega = action_head_.forward(store, p.joint);
  return p;
}

WorkerNet::Grads WorkerNet::backward(nn::ParamStore& store, const Pass& p, const nn::Vector& grad_omega,
                                     const nn::Vector* grad_u) const {
  const nn::Vector gj = action_head_.backward(store, p.joint, grad_omega);
  nn::Vector gu = gj.head(hidden_) + gj.tail(hidden_).cwiseProduct(p.tiled);
  if (grad_u) gu += *grad_u;
  const nn::Vector g_tiled = gj.tail(hidden_).cwiseProduct(p.u);
  const Eigen::Index w = p.goal_embedding.size();
  nn::Vector g_embed = nn::Vector::Zero(w);
  for (int i = 0; i < hidden_; ++i) g_embed[i % w] += g_tiled[i];

  Grads out;
  out.goal = goal_embed_.backward(store, p.goal, g_embed);
  auto [gx, gh] = rnn_.cell_backward(store, p.before.ring[0], p.input, p.after.ring[0], gu);
  out.observation = gx.head(Observation::kLength);
  out.message = gx.segment(Observation::kLength, hidden_);
  store.grad(embedding_).row(p.grid) += gx.tail(embed_dim_).transpose();
  return out;
}

// ---- model ------------------------------------------------------------------

CoRideModel::CoRideModel(const GridWorld& world, const AgentConfig& config, std::uint64_t seed) : config_(config) {
  if (config.hidden % config.heads != 0) throw std::invalid_argument("hidden size must divide into heads");
  if (config.horizon < 1) throw std::invalid_argument("intrinsic horizon must be at least 1");
  manager_obs_len_ = world.max_district_size() * Observation::kLength;
  manager_ = ManagerNet(manager_params, manager_obs_len_, config);
  worker_ = WorkerNet(worker_params, world.size(), config);
  const int key = config.hidden / config.heads;
  manager_attention_ = nn::MultiHeadAttention(manager_params, "manager.attention", config.hidden, config.heads, key, key,
                                              config.hidden, config.attention_temperature);
  worker_attention_ = nn::MultiHeadAttention(worker_params, "worker.attention", config.hidden, config.heads, key, key,
                                             config.hidden, config.attention_temperature);

  Rng rng = make_stream({seed, tag(StreamTag::Init)});
  manager_.init(manager_params, rng);
  manager_attention_.init(manager_params, rng);
  worker_.init(worker_params, rng);
  worker_attention_.init(worker_params, rng);

  Rng proj = make_stream({config.projection_seed});
  std::normal_distribution<double> normal(0.0, 1.0);
  projection_.resize(config.goal_dim, Observation::kLength);
  for (Eigen::Index j = 0; j < projection_.cols(); ++j) {
    for (Eigen::Index i = 0; i < projection_.rows(); ++i) projection_(i, j) = normal(proj);
  }

  for (GridId g = 0; g < world.size(); ++g) {
    const auto members = world.members(world.district_of(g));
    worker_neighborhoods_.emplace_back(members.begin(), members.end());
  }
  for (DistrictId d = 0; d < world.district_count(); ++d) {
    const auto adj = world.adjacent_districts(d);
    std::vector<int> n(adj.begin(), adj.end());
    if (std::find(n.begin(), n.end(), d) == n.end()) n.push_back(d);
    std::sort(n.begin(), n.end());
    manager_neighborhoods_.push_back(std::move(n));
  }
}

std::vector<nn::NamedTensor> model_tensors(const CoRideModel& model) {
  return nn::collect_tensors({{"manager", &model.manager_params}, {"worker", &model.worker_params}});
}

void restore_model(CoRideModel& model, const std::vector<nn::NamedTensor>& tensors) {
  nn::restore_store(model.manager_params, "manager", tensors);
  nn::restore_store(model.worker_params, "worker", tensors);
}

// ---- intrinsic reward -------------------------------------------------------

double intrinsic_reward(std::span<const nn::Vector> obs_history, std::span<const Goal> goal_history, int horizon,
                        const Eigen::MatrixXd& projection) {
  if (obs_history.size() < 2) throw std::invalid_argument("intrinsic_reward: needs at least one past step");
  if (horizon < 1) throw std::invalid_argument("intrinsic_reward: horizon must be at least 1");
  const std::size_t last = obs_history.size() - 1;
  if (goal_history.size() < last) throw std::invalid_argument("intrinsic_reward: goal history too short");
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(horizon), last);
  double total = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    nn::Vector diff = obs_history[last] - obs_history[last - i];
    if (projection.size() != 0) diff = projection * diff;
    const Goal& g = goal_history[last - i];
    if (diff.size() != g.size()) throw std::invalid_argument("intrinsic_reward: observation and goal lengths differ");
    const double dn = diff.norm();
    const double gn = g.norm();
    if (dn == 0.0 || gn == 0.0) continue;
    total += std::clamp(diff.dot(g) / (dn * gn), -1.0, 1.0);
  }
  return total / static_cast<double>(n);
}

// ---- attention --------------------------------------------------------------

AttentionOutput attention_exchange(const nn::MultiHeadAttention& attention, const nn::ParamStore& store,
                                   const AttentionContext& context) {
  auto r = attention.forward(store, context.inputs, context.neighborhoods);
  return {std::move(r.messages), std::move(r.alpha)};
}

AgentMemory AgentMemory::initial(const CoRideModel& model, const GridWorld& world) {
  AgentMemory m;
  const int h = model.config().hidden;
  m.manager_state.assign(world.district_count(), model.manager().initial_state());
  m.worker_state.assign(world.size(), model.worker().initial_state());
  m.manager_message.assign(world.district_count(), Message::Zero(h));
  m.worker_message.assign(world.size(), Message::Zero(h));
  m.obs_history.assign(world.size(), {});
  m.goal_history.assign(world.size(), {});
  return m;
}

// ---- one step ---------------------------------------------------------------

std::vector<Order> item_space(const GridWorld& world, const SimState& state, GridId grid, bool fleet_management) {
  std::vector<Order> items = state.pending.at(grid);
  if (fleet_management) {
    auto fakes = build_fake_orders(world, grid);
    items.insert(items.end(), fakes.begin(), fakes.end());
  }
  return items;
}

namespace {

void record_alpha(std::vector<AttentionRecord>& out, int step, int level, int agent, std::span<const int> neighborhood,
                  const std::vector<std::vector<double>>& alpha) {
  for (std::size_t n = 0; n < alpha.size(); ++n) {
    for (std::size_t j = 0; j < neighborhood.size(); ++j) {
      out.push_back({step, level, static_cast<int>(n), agent, neighborhood[j], alpha[n][j]});
    }
  }
}

}  // namespace

CoRideStepResult coride_step(const GridWorld& world, const SimState& state, const CoRideModel& model,
                             AgentMemory& memory, const StepOptions& options) {
  const AgentConfig& cfg = model.config();
  const int grids = world.size();
  const int districts = world.district_count();
  if (state.grid_count() != grids) throw std::invalid_argument("coride_step: state does not match the world");

  CoRideStepResult r;
  r.manager_message_in = memory.manager_message;
  r.worker_message_in = memory.worker_message;
  r.manager_context_in = memory.manager_context;
  r.worker_context_in = memory.worker_context;

  // Observations and intrinsic rewards for the transition into this state.
  r.worker_obs.resize(grids);
  r.intrinsic_rewards.assign(grids, 0.0);
  r.has_intrinsic.assign(grids, false);
  for (GridId g = 0; g < grids; ++g) {
    r.worker_obs[g] = scale_worker_observation(observe_worker(state, g), cfg.features);
    auto& hist = memory.obs_history[g];
    hist.push_back(r.worker_obs[g]);
    while (static_cast<int>(hist.size()) > cfg.horizon + 1) hist.pop_front();
    auto& goals = memory.goal_history[g];
    if (hist.size() >= 2) {
      const std::vector<nn::Vector> o(hist.begin(), hist.end());
      const std::vector<Goal> gh(goals.end() - static_cast<long>(o.size() - 1), goals.end());
      r.intrinsic_rewards[g] = intrinsic_reward(o, gh, cfg.horizon, model.projection());
      r.has_intrinsic[g] = true;
    }
  }

  const Eigen::MatrixXd embeddings = model.embedding_table();
  r.decisions.assign(grids, {});
  r.omega.resize(grids);
  r.goals.resize(districts);
  r.manager_obs.resize(districts);
  std::vector<nn::Vector> manager_h(districts);

  auto worker_ctx = std::make_shared<AttentionContext>();
  worker_ctx->inputs.resize(grids);
  worker_ctx->neighborhoods = model.worker_neighborhoods();
  r.worker_message_out = memory.worker_message;

  for (DistrictId d = 0; d < districts; ++d) {
    r.manager_obs[d] = scale_manager_observation(observe_manager(world, state, d), cfg.features);
    auto mp = model.manager().act(model.manager_params, r.manager_obs[d], memory.manager_message[d],
                                  memory.manager_state[d]);
    r.goals[d] = mp.goal;
    manager_h[d] = mp.hidden;
    memory.manager_state[d] = std::move(mp.after);

    const auto members = world.members(d);
    for (GridId g : members) {
      auto wp = model.worker().act(model.worker_params, g, r.worker_obs[g], memory.worker_message[g], r.goals[d],
                                   memory.worker_state[g]);
      r.omega[g] = wp.omega;
      if (options.action_noise > 0.0) {
        Rng noise = make_stream({options.seed, tag(StreamTag::Policy), static_cast<std::uint64_t>(options.episode),
                                 static_cast<std::uint64_t>(state.clock), static_cast<std::uint64_t>(g)});
        std::normal_distribution<double> normal(0.0, options.action_noise);
        for (Eigen::Index i = 0; i < r.omega[g].size(); ++i) r.omega[g][i] += normal(noise);
      }
      worker_ctx->inputs[g] = wp.u;
      memory.worker_state[g] = std::move(wp.after);

      const auto items = item_space(world, state, g, options.fleet_management);
      const int k = std::min(state.idle[g], static_cast<int>(items.size()));
      if (k <= 0) continue;
      const Eigen::MatrixXd features = featurize_all(items, state, embeddings, cfg.features);
      const Eigen::VectorXd s = score(r.omega[g], features);
      const std::span<const double> sv(s.data(), static_cast<std::size_t>(s.size()));
      std::vector<int> picked;
      if (options.greedy) {
        picked = top_k(sv, k);
      } else {
        Rng rng = make_stream({options.seed, tag(StreamTag::Selection), static_cast<std::uint64_t>(options.episode),
                               static_cast<std::uint64_t>(state.clock), static_cast<std::uint64_t>(g)});
        picked = selected_k(sv, k, options.temperature, rng);
      }
      for (int i : picked) r.decisions[g].push_back(items[i]);
    }

    // Worker-level exchange within the district once all its members have acted.
    if (cfg.attention) {
      ++r.worker_attention_calls;
      for (GridId g : members) {
        nn::MultiHeadAttention::AgentCache cache;
        const auto& nb = worker_ctx->neighborhoods[g];
        r.worker_message_out[g] =
            model.worker_attention().message(model.worker_params, worker_ctx->inputs, nb, g, &cache);
        if (options.record_attention) record_alpha(r.attention, state.clock, 1, g, nb, cache.alpha);
      }
    }
  }

  const WorldStats stats = compute_world_stats(state, options.rates, options.bucket);
  auto [next, outcome] = step(world, state, r.decisions);
  r.manager_rewards.resize(districts);
  for (DistrictId d = 0; d < districts; ++d) {
    r.manager_rewards[d] = manager_reward(world, state, outcome, d, stats);
  }

  r.manager_message_out = memory.manager_message;
  auto manager_ctx = std::make_shared<AttentionContext>();
  manager_ctx->inputs = manager_h;
  manager_ctx->neighborhoods = model.manager_neighborhoods();
  if (cfg.attention) {
    ++r.manager_attention_calls;
    for (DistrictId d = 0; d < districts; ++d) {
      nn::MultiHeadAttention::AgentCache cache;
      const auto& nb = manager_ctx->neighborhoods[d];
      r.manager_message_out[d] = model.manager_attention().message(model.manager_params, manager_ctx->inputs, nb, d,
                                                                   &cache);
      if (options.record_attention) record_alpha(r.attention, state.clock, 0, d, nb, cache.alpha);
    }
  }

  for (GridId g = 0; g < grids; ++g) {
    auto& goals = memory.goal_history[g];
    goals.push_back(r.goals[world.district_of(g)]);
    while (static_cast<int>(goals.size()) > cfg.horizon) goals.pop_front();
  }
  memory.manager_message = r.manager_message_out;
  memory.worker_message = r.worker_message_out;
  if (cfg.attention) {
    memory.manager_context = manager_ctx;
    memory.worker_context = worker_ctx;
  }

  r.next_state = std::move(next);
  r.outcome = std::move(outcome);
  return r;
}

}  // namespace coride
