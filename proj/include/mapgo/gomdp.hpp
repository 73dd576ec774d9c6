#pragma once

// Goal-oriented MDP primitives: vectors, goal mapping, sparse goal reward,
// experience tuples and the environment interface (with the 2D-World task).

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mapgo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

using State = Vector;
using Action = Vector;
using Goal = Vector;

/// Raised when a caller breaks a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline void require(bool condition, const char* message) {
  if (!condition) throw ContractViolation(message);
}

inline constexpr double kSuccessReward = 0.0;
inline constexpr double kFailureReward = -1.0;

/// Sparse goal reward: 0 when the achieved goal lies within `epsilon`
/// (Euclidean) of `goal`, -1 otherwise.
double goal_reward(const Goal& achieved, const Goal& goal, double epsilon);

/// Goal space of an environment: the mapping phi from states to goals and the
/// reward threshold.
struct GoalSpace {
  int goal_dim = 0;
  double epsilon = 0.15;
  std::function<Goal(const State&)> mapping;

  Goal achieved(const State& s) const { return mapping(s); }

  /// Reward for reaching `next_state` when pursuing `goal`.
  double reward(const State& next_state, const Goal& goal) const {
    return goal_reward(mapping(next_state), goal, epsilon);
  }

  /// Identity mapping on the first `dim` state coordinates.
  static GoalSpace identity(int dim, double epsilon);
};

struct Transition {
  State state;
  Action action;
  State next_state;
  Goal goal;
  double reward = kFailureReward;
  std::uint64_t trajectory_id = 0;
  int step_index = 0;
};

struct Trajectory {
  std::uint64_t id = 0;
  Goal behavioral_goal;
  std::vector<Transition> transitions;

  int length() const { return static_cast<int>(transitions.size()); }

  /// Visited state j in [0, L]: s_0 is the first state, s_j = transitions[j-1].next_state.
  const State& visited(int j) const;

  const State& final_state() const { return transitions.back().next_state; }
};

/// Checks the chaining and id invariants; returns false on the first violation.
bool trajectory_is_chained(const Trajectory& trajectory);

enum class SuccessMode { FinalStep, AnyStep };

/// True iff the trajectory satisfies the success predicate. Throws on empty input.
bool episode_success(const Trajectory& trajectory, SuccessMode mode = SuccessMode::FinalStep);

struct EnvironmentConfig {
  std::string name = "2d-world";
  double epsilon = 0.15;
  int horizon = 100;
  double state_low = 0.0;
  double state_high = 20.0;
  double goal_low = 18.5;
  double goal_high = 19.5;
  double action_bound = 1.0;
  SuccessMode success_mode = SuccessMode::FinalStep;

  void validate() const;
};

struct StepResult {
  State next_state;
  double reward = kFailureReward;
};

/// Goal-conditioned environment. Instances own their RNG stream and are not
/// shared between threads.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  const GoalSpace& goal_space() const { return goal_space_; }
  int goal_dim() const { return goal_space_.goal_dim; }
  virtual int horizon() const = 0;
  virtual SuccessMode success_mode() const = 0;
  virtual double action_bound() const = 0;

  /// Per-coordinate centre and half-range of the state box; used to scale network inputs.
  virtual Vector state_center() const = 0;
  virtual Vector state_half_range() const = 0;

  /// Initial-state distribution rho_0.
  virtual State sample_initial_state(Rng& rng) const = 0;
  /// Desired-goal distribution p_g.
  virtual Goal sample_desired_goal(Rng& rng) const = 0;
  /// Centre of the desired-goal region.
  virtual Goal desired_goal_center() const = 0;
  /// Deterministic dynamics M*(s, a), including action clipping.
  virtual State transition(const State& state, const Action& action) const = 0;

  /// Starts an episode: s_0 ~ rho_0 then g ~ p_g, both from the environment's RNG.
  std::pair<State, Goal> reset();
  /// Advances from `state`; the reward is evaluated against the current episode goal.
  StepResult step(const State& state, const Action& action) const;

  void set_goal(Goal goal) { goal_ = std::move(goal); }
  const Goal& goal() const { return goal_; }
  Rng& rng() { return rng_; }
  void seed(std::uint64_t seed) { rng_.seed(seed); }

 protected:
  Environment(GoalSpace goal_space, std::uint64_t seed) : goal_space_(std::move(goal_space)), rng_(seed) {}

 private:
  GoalSpace goal_space_;
  Rng rng_;
  Goal goal_;
};

/// Point mass in [0,20]^2 moved by clipped displacements; fixed start (0,0),
/// goals uniform on [18.5,19.5]^2.
class TwoDWorld final : public Environment {
 public:
  explicit TwoDWorld(EnvironmentConfig config = {}, std::uint64_t seed = 0);

  int state_dim() const override { return 2; }
  int action_dim() const override { return 2; }
  int horizon() const override { return config_.horizon; }
  SuccessMode success_mode() const override { return config_.success_mode; }
  double action_bound() const override { return config_.action_bound; }
  Vector state_center() const override;
  Vector state_half_range() const override;

  State sample_initial_state(Rng& rng) const override;
  Goal sample_desired_goal(Rng& rng) const override;
  Goal desired_goal_center() const override;
  State transition(const State& state, const Action& action) const override;

  const EnvironmentConfig& config() const { return config_; }

 private:
  EnvironmentConfig config_;
};

/// Builds the environment named in `config`.
std::unique_ptr<Environment> make_environment(const EnvironmentConfig& config, std::uint64_t seed);

/// Clips every component to [-bound, bound].
Action clip_action(const Action& action, double bound);

}  // namespace mapgo
