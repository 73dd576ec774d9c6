#include "mapgo/gomdp.hpp"

#include <algorithm>

namespace mapgo {

double goal_reward(const Goal& achieved, const Goal& goal, double epsilon) {
  require(achieved.size() == goal.size(), "goal_reward: goal dimension mismatch");
  return (achieved - goal).norm() <= epsilon ? kSuccessReward : kFailureReward;
}

GoalSpace GoalSpace::identity(int dim, double epsilon) {
  GoalSpace space;
  space.goal_dim = dim;
  space.epsilon = epsilon;
  space.mapping = [dim](const State& s) -> Goal {
    require(s.size() >= dim, "goal mapping: state shorter than goal");
    return s.head(dim);
  };
  return space;
}

const State& Trajectory::visited(int j) const {
  require(!transitions.empty(), "trajectory is empty");
  require(j >= 0 && j <= length(), "visited state index out of range");
  return j == 0 ? transitions.front().state : transitions[static_cast<std::size_t>(j - 1)].next_state;
}

bool trajectory_is_chained(const Trajectory& trajectory) {
  const auto& ts = trajectory.transitions;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i].trajectory_id != trajectory.id) return false;
    if (i + 1 < ts.size() && ts[i].next_state != ts[i + 1].state) return false;
  }
  return true;
}

bool episode_success(const Trajectory& trajectory, SuccessMode mode) {
  require(!trajectory.transitions.empty(), "episode_success: empty trajectory");
  if (mode == SuccessMode::FinalStep) return trajectory.transitions.back().reward == kSuccessReward;
  return std::any_of(trajectory.transitions.begin(), trajectory.transitions.end(),
                     [](const Transition& t) { return t.reward == kSuccessReward; });
}

void EnvironmentConfig::validate() const {
  require(epsilon > 0.0, "environment: epsilon must be positive");
  require(horizon >= 1, "environment: horizon must be at least 1");
  require(state_high > state_low, "environment: empty state box");
  require(goal_high >= goal_low, "environment: empty goal region");
  require(action_bound > 0.0, "environment: action bound must be positive");
}

std::pair<State, Goal> Environment::reset() {
  State s0 = sample_initial_state(rng_);
  goal_ = sample_desired_goal(rng_);
  return {std::move(s0), goal_};
}

StepResult Environment::step(const State& state, const Action& action) const {
  require(goal_.size() == goal_space_.goal_dim, "step called before reset");
  StepResult result;
  result.next_state = transition(state, action);
  result.reward = goal_space_.reward(result.next_state, goal_);
  return result;
}

Action clip_action(const Action& action, double bound) {
  return action.cwiseMax(-bound).cwiseMin(bound);
}

TwoDWorld::TwoDWorld(EnvironmentConfig config, std::uint64_t seed)
    : Environment(GoalSpace::identity(2, config.epsilon), seed), config_(std::move(config)) {
  config_.validate();
}

Vector TwoDWorld::state_center() const {
  return Vector::Constant(2, 0.5 * (config_.state_low + config_.state_high));
}

Vector TwoDWorld::state_half_range() const {
  return Vector::Constant(2, 0.5 * (config_.state_high - config_.state_low));
}

State TwoDWorld::sample_initial_state(Rng&) const { return State::Constant(2, config_.state_low); }

Goal TwoDWorld::desired_goal_center() const {
  return Goal::Constant(2, 0.5 * (config_.goal_low + config_.goal_high));
}

Goal TwoDWorld::sample_desired_goal(Rng& rng) const {
  std::uniform_real_distribution<double> uniform(config_.goal_low, config_.goal_high);
  Goal g(2);
  g[0] = uniform(rng);
  g[1] = uniform(rng);
  return g;
}

State TwoDWorld::transition(const State& state, const Action& action) const {
  require(state.size() == 2 && action.size() == 2, "2d-world: state and action must be 2-vectors");
  State next = state + clip_action(action, config_.action_bound);
  return next.cwiseMax(config_.state_low).cwiseMin(config_.state_high);
}

std::unique_ptr<Environment> make_environment(const EnvironmentConfig& config, std::uint64_t seed) {
  if (config.name == "2d-world") return std::make_unique<TwoDWorld>(config, seed);
  throw ContractViolation("unknown environment: " + config.name);
}

}  // namespace mapgo
