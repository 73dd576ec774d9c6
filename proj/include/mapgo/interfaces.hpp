#pragma once

// Goal-conditioned policies and (possibly learned) transition models, as
// consumed by relabeling and branched rollouts. Batched calls take one sample
// per column.

#include "mapgo/gomdp.hpp"

#include <functional>

namespace mapgo {

class GoalPolicy {
 public:
  virtual ~GoalPolicy() = default;
  virtual Action act(const State& state, const Goal& goal) const = 0;
  virtual Matrix act_batch(const Matrix& states, const Matrix& goals) const;
};

class FunctionPolicy final : public GoalPolicy {
 public:
  explicit FunctionPolicy(std::function<Action(const State&, const Goal&)> fn) : fn_(std::move(fn)) {}
  Action act(const State& state, const Goal& goal) const override { return fn_(state, goal); }

 private:
  std::function<Action(const State&, const Goal&)> fn_;
};

class TransitionModel {
 public:
  virtual ~TransitionModel() = default;
  /// Draws s' ~ M(. | s, a).
  virtual State sample_next(const State& state, const Action& action, Rng& rng) const = 0;
  virtual Matrix sample_next_batch(const Matrix& states, const Matrix& actions, Rng& rng) const;
  /// False while the model cannot be sampled (e.g. an ensemble before its first training).
  virtual bool ready() const { return true; }
};

/// The environment's own deterministic dynamics behind the model interface.
class TrueDynamics final : public TransitionModel {
 public:
  explicit TrueDynamics(const Environment& env) : env_(&env) {}
  State sample_next(const State& state, const Action& action, Rng&) const override {
    return env_->transition(state, action);
  }

 private:
  const Environment* env_;
};

}  // namespace mapgo
