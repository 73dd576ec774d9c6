#pragma once

// Goal relabeling: the hindsight strategies (future / final / episode) and
// foresight goal inference, which replaces a transition's goal with where the
// current policy is predicted to end up under a learned model.

#include "mapgo/interfaces.hpp"
#include "mapgo/replay_buffer.hpp"

#include <span>
#include <string>
#include <vector>

namespace mapgo {

enum class RelabelKind { None, HerFuture, HerFinal, HerEpisode, Fgi };
enum class GoalSource { Original, HindsightTrajectory, ModelRollout };

std::string to_string(RelabelKind kind);
std::string to_string(GoalSource source);
RelabelKind parse_relabel_kind(const std::string& name);

struct FgiSettings {
  /// Longest model rollout H; larger draws fall back to hindsight.
  int max_rollout = 20;
  /// Branch on the trajectory length (L > H) instead of the drawn rollout step.
  bool literal_branch = false;
  /// Number of model rollouts averaged into the foresight goal.
  int samples = 1;
  /// Roll the policy towards the transition's stored goal instead of a
  /// hindsight interim goal.
  bool condition_on_stored_goal = false;
};

struct RelabelStrategy {
  RelabelKind kind = RelabelKind::HerFuture;
  FgiSettings fgi;
  const TransitionModel* model = nullptr;
  const GoalPolicy* policy = nullptr;

  void validate() const;
};

struct RelabelOutcome {
  Goal goal;
  double reward = kFailureReward;
  GoalSource source = GoalSource::HindsightTrajectory;
};

/// Goal = phi(s_{t+k}) with k uniform on [1, L-t], optionally clamped to
/// `max_offset` (> 0). k = 1 picks the transition's own next state (reward 0);
/// at t = L-1 that is the only choice and the result equals her_final.
RelabelOutcome her_future(const Trajectory& trajectory, int t, const GoalSpace& space, Rng& rng, int max_offset = 0);

/// Goal = phi(s_L).
RelabelOutcome her_final(const Trajectory& trajectory, int t, const GoalSpace& space);

/// Goal = phi(s_j) with j uniform on [1, L] (any state reached in the episode).
RelabelOutcome her_episode(const Trajectory& trajectory, int t, const GoalSpace& space, Rng& rng);

/// Foresight goal inference for transition t of `trajectory`.
///
/// Draws h uniformly from [1, L-1]. When h > H the goal comes from her_future
/// with the offset clamped to H. Otherwise an interim goal g' is drawn by
/// her_future, the model is rolled h steps from s_{t+1} with actions
/// policy(s, g'), and the goal becomes phi of the final rolled state. The reward
/// is always recomputed from the stored next state.
RelabelOutcome fgi_relabel(const Trajectory& trajectory, int t, const TransitionModel& model,
                           const GoalPolicy& policy, const FgiSettings& settings, const GoalSpace& space, Rng& rng);

/// Dispatches on `strategy.kind`. RelabelKind::None keeps the stored goal.
RelabelOutcome relabel(const RelabelStrategy& strategy, const Trajectory& trajectory, int t, const GoalSpace& space,
                       Rng& rng);

/// Relabels each transition independently with probability `fraction`; the
/// rest keep their goals. Foresight rollouts of a batch run in lockstep.
/// `sources`, when given, receives the origin of every output goal.
std::vector<Transition> relabel_batch(std::span<const Transition> batch, const TrajectoryLookup& lookup,
                                      const RelabelStrategy& strategy, double fraction, const GoalSpace& space,
                                      Rng& rng, std::vector<GoalSource>* sources = nullptr);

}  // namespace mapgo
