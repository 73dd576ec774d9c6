#include "mapgo/umpo.hpp"

#include "mapgo/checkpoint.hpp"

#include <cmath>

namespace mapgo {

void ActorCriticConfig::validate() const {
  require(gamma >= 0.0 && gamma <= 1.0, "actor-critic: gamma must lie in [0, 1]");
  require(tau > 0.0 && tau <= 1.0, "actor-critic: tau must lie in (0, 1]");
  require(actor_learning_rate > 0.0 && critic_learning_rate > 0.0, "actor-critic: learning rates must be positive");
  require(action_l2 >= 0.0, "actor-critic: action_l2 must be non-negative");
  require(!clip_targets || gamma < 1.0, "actor-critic: target clipping needs gamma < 1");
}

Batch Batch::from(std::span<const Transition> transitions) {
  require(!transitions.empty(), "batch: no transitions");
  const auto n = static_cast<Eigen::Index>(transitions.size());
  const auto& first = transitions.front();
  Batch b;
  b.states.resize(first.state.size(), n);
  b.actions.resize(first.action.size(), n);
  b.next_states.resize(first.next_state.size(), n);
  b.goals.resize(first.goal.size(), n);
  b.rewards.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = transitions[static_cast<std::size_t>(i)];
    b.states.col(i) = t.state;
    b.actions.col(i) = t.action;
    b.next_states.col(i) = t.next_state;
    b.goals.col(i) = t.goal;
    b.rewards[i] = t.reward;
  }
  return b;
}

namespace {

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

Vector goal_slice(const Vector& v, int dim) { return v.head(dim); }

}  // namespace

ActorCritic::ActorCritic(int state_dim, int action_dim, int goal_dim, double action_bound, Vector state_center,
                         Vector state_scale, Vector goal_center, Vector goal_scale, ActorCriticConfig config,
                         std::uint64_t seed)
    : state_dim_(state_dim), action_dim_(action_dim), goal_dim_(goal_dim), action_bound_(action_bound),
      state_center_(std::move(state_center)), state_scale_(std::move(state_scale)),
      goal_center_(std::move(goal_center)), goal_scale_(std::move(goal_scale)), config_(std::move(config)) {
  config_.validate();
  require(action_bound_ > 0.0, "actor-critic: action bound must be positive");
  require(state_center_.size() == state_dim && state_scale_.size() == state_dim, "actor-critic: state scaling size");
  require(goal_center_.size() == goal_dim && goal_scale_.size() == goal_dim, "actor-critic: goal scaling size");
  Rng init(seed);
  actor_ = nn::Mlp(layer_sizes(state_dim + goal_dim, config_.actor_hidden, action_dim), nn::OutputActivation::Tanh,
                   init, config_.actor_final_scale);
  critic_ = nn::Mlp(layer_sizes(state_dim + action_dim + goal_dim, config_.critic_hidden, 1),
                    nn::OutputActivation::Identity, init);
  target_critic_ = critic_;
  actor_opt_ = nn::AdamState(actor_.num_parameters(), config_.actor_learning_rate);
  critic_opt_ = nn::AdamState(critic_.num_parameters(), config_.critic_learning_rate);
}

ActorCritic::ActorCritic(const Environment& env, ActorCriticConfig config, std::uint64_t seed)
    : ActorCritic(env.state_dim(), env.action_dim(), env.goal_dim(), env.action_bound(), env.state_center(),
                  env.state_half_range(), goal_slice(env.state_center(), env.goal_dim()),
                  goal_slice(env.state_half_range(), env.goal_dim()), std::move(config), seed) {}

Matrix ActorCritic::actor_inputs(const Matrix& states, const Matrix& goals) const {
  require(states.rows() == state_dim_ && goals.rows() == goal_dim_ && states.cols() == goals.cols(),
          "actor-critic: input dimension mismatch");
  Matrix x(state_dim_ + goal_dim_, states.cols());
  x.topRows(state_dim_) = (states.colwise() - state_center_).array().colwise() / state_scale_.array();
  x.bottomRows(goal_dim_) = (goals.colwise() - goal_center_).array().colwise() / goal_scale_.array();
  return x;
}

Matrix ActorCritic::critic_inputs(const Matrix& states, const Matrix& actions, const Matrix& goals) const {
  require(states.rows() == state_dim_ && actions.rows() == action_dim_ && goals.rows() == goal_dim_ &&
              states.cols() == actions.cols() && states.cols() == goals.cols(),
          "actor-critic: input dimension mismatch");
  Matrix x(state_dim_ + action_dim_ + goal_dim_, states.cols());
  x.topRows(state_dim_) = (states.colwise() - state_center_).array().colwise() / state_scale_.array();
  x.middleRows(state_dim_, action_dim_) = actions / action_bound_;
  x.bottomRows(goal_dim_) = (goals.colwise() - goal_center_).array().colwise() / goal_scale_.array();
  return x;
}

Matrix ActorCritic::act_batch(const Matrix& states, const Matrix& goals) const {
  return action_bound_ * actor_.forward(actor_inputs(states, goals));
}

Action ActorCritic::act(const State& state, const Goal& goal) const {
  return act_batch(Matrix(state), Matrix(goal)).col(0);
}

Vector ActorCritic::q_values(const Matrix& states, const Matrix& actions, const Matrix& goals) const {
  return critic_.forward(critic_inputs(states, actions, goals)).row(0).transpose();
}

Vector ActorCritic::target_q_values(const Matrix& states, const Matrix& actions, const Matrix& goals) const {
  return target_critic_.forward(critic_inputs(states, actions, goals)).row(0).transpose();
}

void ActorCritic::save_to(Checkpoint& ckpt) const {
  ckpt.networks["actor"] = actor_;
  ckpt.networks["critic"] = critic_;
  ckpt.networks["target_critic"] = target_critic_;
  ckpt.vectors["state_center"] = state_center_;
  ckpt.vectors["state_scale"] = state_scale_;
  ckpt.vectors["goal_center"] = goal_center_;
  ckpt.vectors["goal_scale"] = goal_scale_;
  ckpt.vectors["action_bound"] = Vector::Constant(1, action_bound_);
}

void ActorCritic::load_from(const Checkpoint& ckpt) {
  const auto& actor = ckpt.network("actor");
  const auto& critic = ckpt.network("critic");
  require(actor.sizes() == actor_.sizes() && critic.sizes() == critic_.sizes(),
          "actor-critic load: architecture mismatch");
  actor_ = actor;
  critic_ = critic;
  target_critic_ = ckpt.network("target_critic");
  state_center_ = ckpt.vector("state_center");
  state_scale_ = ckpt.vector("state_scale");
  goal_center_ = ckpt.vector("goal_center");
  goal_scale_ = ckpt.vector("goal_scale");
  action_bound_ = ckpt.vector("action_bound")[0];
}

Vector critic_targets(const ActorCritic& ac, const Batch& batch) {
  const Matrix next_actions = ac.act_batch(batch.next_states, batch.goals);
  Vector y = batch.rewards + ac.config().gamma * ac.target_q_values(batch.next_states, next_actions, batch.goals);
  if (ac.config().clip_targets) y = y.cwiseMax(-1.0 / (1.0 - ac.config().gamma)).cwiseMin(0.0);
  return y;
}

double critic_loss_and_gradient(const ActorCritic& ac, const Batch& batch, nn::Gradients* grad) {
  require(batch.size() > 0, "critic update: empty batch");
  const Vector targets = critic_targets(ac, batch);
  nn::Mlp::Cache cache;
  const Matrix q = ac.critic().forward(ac.critic_inputs(batch.states, batch.actions, batch.goals), cache);
  const Eigen::RowVectorXd diff = q.row(0) - targets.transpose();
  const auto n = static_cast<double>(batch.size());
  if (grad != nullptr) ac.critic().backward(cache, Matrix(2.0 * diff / n), grad, nullptr);
  return diff.squaredNorm() / n;
}

double actor_objective_and_gradient(const ActorCritic& ac, const Batch& batch, nn::Gradients* grad) {
  require(batch.size() > 0, "actor update: empty batch");
  nn::Mlp::Cache actor_cache, critic_cache;
  const Matrix squashed = ac.actor().forward(ac.actor_inputs(batch.states, batch.goals), actor_cache);
  const Matrix actions = ac.action_bound() * squashed;
  const Matrix q = ac.critic().forward(ac.critic_inputs(batch.states, actions, batch.goals), critic_cache);
  const auto n = static_cast<double>(batch.size());
  if (grad != nullptr) {
    Matrix d_input;
    ac.critic().backward(critic_cache, Matrix::Constant(1, q.cols(), 1.0 / n), nullptr, &d_input);
    // The critic sees actions / bound == squashed, so this slice is dJ / d squashed.
    Matrix d_squashed = d_input.middleRows(ac.state_dim(), ac.action_dim());
    if (ac.config().action_l2 > 0.0) d_squashed -= (2.0 * ac.config().action_l2 / n) * squashed;
    ac.actor().backward(actor_cache, d_squashed, grad, nullptr);
  }
  return q.sum() / n - ac.config().action_l2 * squashed.squaredNorm() / n;
}

double critic_update(ActorCritic& ac, const Batch& batch) {
  nn::Gradients grad;
  const double loss = critic_loss_and_gradient(ac, batch, &grad);
  nn::adam_step(ac.critic(), grad, ac.critic_optimizer());
  return loss;
}

double actor_update(ActorCritic& ac, const Batch& batch) {
  nn::Gradients grad;
  const double objective = actor_objective_and_gradient(ac, batch, &grad);
  grad.flat = -grad.flat;
  nn::adam_step(ac.actor(), grad, ac.actor_optimizer());
  return objective;
}

void soft_target_update(ActorCritic& ac, double tau) {
  nn::polyak_update(ac.target_critic().parameters(), ac.critic().parameters(), tau);
}

std::string to_string(RolloutGoalStrategy s) {
  switch (s) {
    case RolloutGoalStrategy::Relabel: return "relabel";
    case RolloutGoalStrategy::NoRelabel: return "no-relabel";
    case RolloutGoalStrategy::NowDesired: return "now-desired";
  }
  return "unknown";
}

RolloutGoalStrategy parse_rollout_goal_strategy(const std::string& name) {
  if (name == "relabel") return RolloutGoalStrategy::Relabel;
  if (name == "no-relabel" || name == "norelabel") return RolloutGoalStrategy::NoRelabel;
  if (name == "now-desired" || name == "nowdesired") return RolloutGoalStrategy::NowDesired;
  throw ContractViolation("unknown rollout goal strategy: " + name);
}

Action ExplorationNoise::apply(const Action& action, double bound, Rng& rng) const {
  if (random_action_probability > 0.0 && std::bernoulli_distribution(random_action_probability)(rng)) {
    std::uniform_real_distribution<double> uniform(-bound, bound);
    Action a(action.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = uniform(rng);
    return a;
  }
  if (sigma <= 0.0) return clip_action(action, bound);
  std::normal_distribution<double> normal(0.0, sigma * bound);
  Action a = action;
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += normal(rng);
  return clip_action(a, bound);
}

std::size_t branched_rollouts(const ReplayBuffer& env_buffer, const TransitionModel& model, const GoalPolicy& policy,
                              const BranchedRolloutSettings& settings, const GoalSpace& space,
                              const std::function<Goal(Rng&)>& desired_goal_sampler, double action_bound,
                              ReplayBuffer& model_buffer, std::uint64_t& next_trajectory_id, Rng& rng) {
  require(!env_buffer.empty(), "branched rollouts: environment buffer is empty");
  require(model.ready(), "branched rollouts: transition model is not trained yet");
  require(settings.length >= 1 && settings.count >= 0, "branched rollouts: invalid length or count");
  require(settings.goal_strategy != RolloutGoalStrategy::NowDesired || static_cast<bool>(desired_goal_sampler),
          "branched rollouts: now-desired needs a desired-goal sampler");
  if (settings.count == 0) return 0;

  const auto n = static_cast<Eigen::Index>(settings.count);
  const Trajectory& probe = env_buffer.trajectory(0);
  Matrix states(probe.transitions.front().state.size(), n);
  Matrix goals(space.goal_dim, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const Trajectory& traj = env_buffer.sample_trajectory(rng);
    const int length = traj.length();
    const int t = std::uniform_int_distribution<int>(0, length - 1)(rng);
    states.col(c) = traj.transitions[static_cast<std::size_t>(t)].state;
    switch (settings.goal_strategy) {
      case RolloutGoalStrategy::Relabel: {
        const int later = std::uniform_int_distribution<int>(1, length - t)(rng);
        goals.col(c) = space.achieved(traj.visited(t + later));
        break;
      }
      case RolloutGoalStrategy::NoRelabel:
        goals.col(c) = traj.behavioral_goal;
        break;
      case RolloutGoalStrategy::NowDesired:
        goals.col(c) = desired_goal_sampler(rng);
        break;
    }
  }

  std::vector<Trajectory> rollouts(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < n; ++c) {
    auto& r = rollouts[static_cast<std::size_t>(c)];
    r.id = next_trajectory_id++;
    r.behavioral_goal = goals.col(c);
    r.transitions.reserve(static_cast<std::size_t>(settings.length));
  }
  for (int step = 0; step < settings.length; ++step) {
    Matrix actions = policy.act_batch(states, goals);
    for (Eigen::Index c = 0; c < n; ++c) actions.col(c) = settings.noise.apply(actions.col(c), action_bound, rng);
    const Matrix next = model.sample_next_batch(states, actions, rng);
    for (Eigen::Index c = 0; c < n; ++c) {
      Transition t;
      t.state = states.col(c);
      t.action = actions.col(c);
      t.next_state = next.col(c);
      t.goal = goals.col(c);
      t.reward = space.reward(t.next_state, t.goal);
      t.step_index = step;
      auto& r = rollouts[static_cast<std::size_t>(c)];
      t.trajectory_id = r.id;
      r.transitions.push_back(std::move(t));
    }
    states = next;
  }
  std::size_t added = 0;
  for (auto& r : rollouts) {
    added += r.transitions.size();
    model_buffer.add(std::move(r));
  }
  return added;
}

int MixtureConfig::real_count() const {
  return static_cast<int>(std::ceil(alpha * static_cast<double>(batch_size) - 1e-9));
}

void MixtureConfig::validate() const {
  require(alpha >= 0.0 && alpha <= 1.0, "mixture: alpha must lie in [0, 1]");
  require(batch_size >= 1, "mixture: batch size must be positive");
}

MixedBatch mixed_batch(const ReplayBuffer& env_buffer, const ReplayBuffer& model_buffer, const MixtureConfig& cfg,
                       Rng& rng) {
  cfg.validate();
  require(!env_buffer.empty() || !model_buffer.empty(), "mixed batch: both buffers are empty");
  auto real = static_cast<std::size_t>(cfg.real_count());
  if (model_buffer.empty()) real = static_cast<std::size_t>(cfg.batch_size);
  if (env_buffer.empty()) real = 0;
  MixedBatch out;
  out.real = env_buffer.sample(real, rng);
  out.model = model_buffer.sample(static_cast<std::size_t>(cfg.batch_size) - real, rng);
  return out;
}

UmpoStats umpo_train(ActorCritic& ac, const ReplayBuffer& env_buffer, ReplayBuffer& model_buffer,
                     const TransitionModel* model, const RelabelStrategy& relabel_strategy,
                     const UmpoSettings& settings, const GoalSpace& space,
                     const std::function<Goal(Rng&)>& desired_goal_sampler, std::uint64_t& next_model_trajectory_id,
                     Rng& rng) {
  UmpoStats stats;
  if (settings.gradient_steps <= 0 && !settings.model_rollouts) return stats;
  for (int it = 0; it < settings.iterations; ++it) {
    if (settings.model_rollouts && model != nullptr && model->ready() && !env_buffer.empty()) {
      stats.rollout_transitions +=
          branched_rollouts(env_buffer, *model, ac, settings.rollouts, space, desired_goal_sampler, ac.action_bound(),
                            model_buffer, next_model_trajectory_id, rng);
    }
    for (int step = 0; step < settings.gradient_steps; ++step) {
      MixedBatch mb = mixed_batch(env_buffer, model_buffer, settings.mixture, rng);
      std::vector<Transition> batch =
          relabel_batch(mb.real, env_buffer.lookup(), relabel_strategy, settings.relabel_fraction, space, rng);
      stats.real_samples += batch.size();
      stats.model_samples += mb.model.size();
      batch.insert(batch.end(), std::make_move_iterator(mb.model.begin()), std::make_move_iterator(mb.model.end()));
      const Batch b = Batch::from(batch);
      stats.mean_critic_loss += critic_update(ac, b);
      stats.mean_actor_q += actor_update(ac, b);
      soft_target_update(ac, ac.config().tau);
      ++stats.gradient_steps;
    }
  }
  if (stats.gradient_steps > 0) {
    stats.mean_critic_loss /= stats.gradient_steps;
    stats.mean_actor_q /= stats.gradient_steps;
  }
  return stats;
}

}  // namespace mapgo
