#pragma once

// Universal model-based policy optimisation: goal-conditioned DDPG updates on
// a mixture of real transitions and short branched model rollouts.

#include "mapgo/dynamics.hpp"
#include "mapgo/nn.hpp"
#include "mapgo/relabel.hpp"
#include "mapgo/replay_buffer.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace mapgo {

struct Checkpoint;

struct ActorCriticConfig {
  std::vector<int> actor_hidden = {256, 256, 256};
  std::vector<int> critic_hidden = {256, 256, 256};
  double actor_learning_rate = 1e-3;
  double critic_learning_rate = 1e-3;
  double gamma = 0.98;
  double tau = 0.005;
  /// Scale applied to the actor's final layer at initialisation.
  double actor_final_scale = 1e-2;
  /// Weight of the mean squared (bound-normalised) action penalty in the actor loss.
  double action_l2 = 0.0;
  /// Clip critic targets to [-1 / (1 - gamma), 0], the range of any sparse-reward return.
  bool clip_targets = false;

  void validate() const;
};

/// Column-major training batch (one transition per column).
struct Batch {
  Matrix states;
  Matrix actions;
  Matrix next_states;
  Matrix goals;
  Vector rewards;

  Eigen::Index size() const { return states.cols(); }
  static Batch from(std::span<const Transition> transitions);
};

/// Deterministic goal-conditioned actor pi(s, g), critic Q(s, a, g) and a
/// delayed target critic. Inputs are scaled to roughly [-1, 1] with the
/// environment's state box; actions are tanh-squashed to the action bound.
class ActorCritic final : public GoalPolicy {
 public:
  ActorCritic(int state_dim, int action_dim, int goal_dim, double action_bound, Vector state_center,
              Vector state_scale, Vector goal_center, Vector goal_scale, ActorCriticConfig config,
              std::uint64_t seed);
  /// Sizes and scaling taken from the environment (goal scaling reuses the state box).
  ActorCritic(const Environment& env, ActorCriticConfig config, std::uint64_t seed);

  Action act(const State& state, const Goal& goal) const override;
  Matrix act_batch(const Matrix& states, const Matrix& goals) const override;

  /// Q(s, a, g) for each column.
  Vector q_values(const Matrix& states, const Matrix& actions, const Matrix& goals) const;
  Vector target_q_values(const Matrix& states, const Matrix& actions, const Matrix& goals) const;

  Matrix actor_inputs(const Matrix& states, const Matrix& goals) const;
  Matrix critic_inputs(const Matrix& states, const Matrix& actions, const Matrix& goals) const;

  nn::Mlp& actor() { return actor_; }
  const nn::Mlp& actor() const { return actor_; }
  nn::Mlp& critic() { return critic_; }
  const nn::Mlp& critic() const { return critic_; }
  nn::Mlp& target_critic() { return target_critic_; }
  const nn::Mlp& target_critic() const { return target_critic_; }
  nn::AdamState& actor_optimizer() { return actor_opt_; }
  nn::AdamState& critic_optimizer() { return critic_opt_; }
  const ActorCriticConfig& config() const { return config_; }
  double action_bound() const { return action_bound_; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  int goal_dim() const { return goal_dim_; }

  void save_to(Checkpoint& ckpt) const;
  void load_from(const Checkpoint& ckpt);

 private:
  int state_dim_, action_dim_, goal_dim_;
  double action_bound_;
  Vector state_center_, state_scale_, goal_center_, goal_scale_;
  ActorCriticConfig config_;
  nn::Mlp actor_, critic_, target_critic_;
  nn::AdamState actor_opt_, critic_opt_;
};

/// y = r + gamma * Q'(s', pi(s', g), g), no gradient flows through y.
Vector critic_targets(const ActorCritic& ac, const Batch& batch);

/// Mean squared TD error and its gradient with respect to the critic parameters.
double critic_loss_and_gradient(const ActorCritic& ac, const Batch& batch, nn::Gradients* grad);

/// Mean Q(s, pi(s, g), g) minus action_l2 * mean |pi / bound|^2, with its
/// gradient with respect to the actor parameters.
double actor_objective_and_gradient(const ActorCritic& ac, const Batch& batch, nn::Gradients* grad);

/// One Adam step on the critic; returns the pre-step loss.
double critic_update(ActorCritic& ac, const Batch& batch);
/// One Adam step ascending the actor objective; returns the pre-step mean Q.
double actor_update(ActorCritic& ac, const Batch& batch);
/// target <- tau * online + (1 - tau) * target.
void soft_target_update(ActorCritic& ac, double tau);

enum class RolloutGoalStrategy { Relabel, NoRelabel, NowDesired };
std::string to_string(RolloutGoalStrategy s);
RolloutGoalStrategy parse_rollout_goal_strategy(const std::string& name);

/// Behaviour-policy noise: Gaussian perturbation plus occasional uniform actions.
struct ExplorationNoise {
  double sigma = 0.2;
  double random_action_probability = 0.3;

  Action apply(const Action& action, double bound, Rng& rng) const;
};

struct BranchedRolloutSettings {
  int length = 5;     // k
  int count = 400;    // K
  RolloutGoalStrategy goal_strategy = RolloutGoalStrategy::Relabel;
  ExplorationNoise noise{};
};

/// Starts `count` rollouts of `length` model steps from uniformly chosen stored
/// states, each pursuing a goal chosen per `goal_strategy`, and stores every
/// rollout as a trajectory in `model_buffer`. Returns the number of transitions added.
std::size_t branched_rollouts(const ReplayBuffer& env_buffer, const TransitionModel& model, const GoalPolicy& policy,
                              const BranchedRolloutSettings& settings, const GoalSpace& space,
                              const std::function<Goal(Rng&)>& desired_goal_sampler, double action_bound,
                              ReplayBuffer& model_buffer, std::uint64_t& next_trajectory_id, Rng& rng);

struct MixtureConfig {
  double alpha = 0.05;
  int batch_size = 256;

  /// ceil(alpha * B).
  int real_count() const;
  void validate() const;
};

struct MixedBatch {
  std::vector<Transition> real;
  std::vector<Transition> model;
};

/// Samples ceil(alpha B) real and B - ceil(alpha B) model transitions. An empty
/// model buffer degrades to an all-real batch (and vice versa).
MixedBatch mixed_batch(const ReplayBuffer& env_buffer, const ReplayBuffer& model_buffer, const MixtureConfig& cfg,
                       Rng& rng);

struct UmpoSettings {
  int iterations = 1;
  int gradient_steps = 200;
  MixtureConfig mixture{};
  bool model_rollouts = true;
  BranchedRolloutSettings rollouts{};
  double relabel_fraction = 0.8;
};

struct UmpoStats {
  int gradient_steps = 0;
  std::size_t rollout_transitions = 0;
  double mean_critic_loss = 0.0;
  double mean_actor_q = 0.0;
  std::size_t real_samples = 0;
  std::size_t model_samples = 0;
};

/// Per iteration: refresh model data with branched rollouts (when enabled and
/// the model is ready), then run critic/actor/target updates on mixed batches
/// whose real part passes through `relabel_strategy`.
UmpoStats umpo_train(ActorCritic& ac, const ReplayBuffer& env_buffer, ReplayBuffer& model_buffer,
                     const TransitionModel* model, const RelabelStrategy& relabel_strategy,
                     const UmpoSettings& settings, const GoalSpace& space,
                     const std::function<Goal(Rng&)>& desired_goal_sampler, std::uint64_t& next_model_trajectory_id,
                     Rng& rng);

}  // namespace mapgo
