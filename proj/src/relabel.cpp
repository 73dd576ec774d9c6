#include "mapgo/relabel.hpp"

#include "mapgo/dynamics.hpp"

#include <algorithm>

namespace mapgo {

std::string to_string(RelabelKind kind) {
  switch (kind) {
    case RelabelKind::None: return "none";
    case RelabelKind::HerFuture: return "her-future";
    case RelabelKind::HerFinal: return "her-final";
    case RelabelKind::HerEpisode: return "her-episode";
    case RelabelKind::Fgi: return "fgi";
  }
  return "unknown";
}

std::string to_string(GoalSource source) {
  switch (source) {
    case GoalSource::Original: return "original";
    case GoalSource::HindsightTrajectory: return "hindsight-trajectory";
    case GoalSource::ModelRollout: return "model-rollout";
  }
  return "unknown";
}

RelabelKind parse_relabel_kind(const std::string& name) {
  if (name == "none") return RelabelKind::None;
  if (name == "her-future" || name == "future" || name == "her") return RelabelKind::HerFuture;
  if (name == "her-final" || name == "final") return RelabelKind::HerFinal;
  if (name == "her-episode" || name == "episode") return RelabelKind::HerEpisode;
  if (name == "fgi") return RelabelKind::Fgi;
  throw ContractViolation("unknown relabel strategy: " + name);
}

void RelabelStrategy::validate() const {
  if (kind != RelabelKind::Fgi) return;
  require(fgi.max_rollout >= 1, "fgi: maximum rollout length must be at least 1");
  require(fgi.samples >= 1, "fgi: sample count must be at least 1");
  require(model != nullptr && policy != nullptr, "fgi: needs a transition model and a policy");
  require(model->ready(), "fgi: transition model is not trained yet");
}

namespace {

RelabelOutcome outcome_for(const Transition& t, Goal goal, const GoalSpace& space, GoalSource source) {
  RelabelOutcome out;
  out.reward = space.reward(t.next_state, goal);
  out.goal = std::move(goal);
  out.source = source;
  return out;
}

const Transition& transition_at(const Trajectory& trajectory, int t) {
  require(!trajectory.transitions.empty(), "relabel: empty trajectory");
  require(t >= 0 && t < trajectory.length(), "relabel: step index out of range");
  return trajectory.transitions[static_cast<std::size_t>(t)];
}

/// Decision half of FGI: either a finished hindsight outcome or a rollout to run.
struct FgiPlan {
  bool rollout = false;
  int steps = 0;
  Goal interim_goal;
  RelabelOutcome fallback;
};

FgiPlan plan_fgi(const Trajectory& trajectory, int t, const FgiSettings& settings, const GoalSpace& space, Rng& rng) {
  const int length = trajectory.length();
  require(length >= 2, "fgi: trajectory must contain at least two transitions");
  transition_at(trajectory, t);
  FgiPlan plan;
  plan.steps = std::uniform_int_distribution<int>(1, length - 1)(rng);
  const bool use_hindsight =
      settings.literal_branch ? length > settings.max_rollout : plan.steps > settings.max_rollout;
  if (use_hindsight) {
    plan.fallback = her_future(trajectory, t, space, rng, settings.max_rollout);
    return plan;
  }
  plan.rollout = true;
  plan.interim_goal = settings.condition_on_stored_goal ? trajectory.transitions[static_cast<std::size_t>(t)].goal
                                                        : her_future(trajectory, t, space, rng).goal;
  return plan;
}

}  // namespace

RelabelOutcome her_final(const Trajectory& trajectory, int t, const GoalSpace& space) {
  const Transition& tr = transition_at(trajectory, t);
  return outcome_for(tr, space.achieved(trajectory.final_state()), space, GoalSource::HindsightTrajectory);
}

RelabelOutcome her_future(const Trajectory& trajectory, int t, const GoalSpace& space, Rng& rng, int max_offset) {
  const Transition& tr = transition_at(trajectory, t);
  const int length = trajectory.length();
  int k = std::uniform_int_distribution<int>(1, length - t)(rng);
  if (max_offset > 0) k = std::min(k, max_offset);
  return outcome_for(tr, space.achieved(trajectory.visited(t + k)), space, GoalSource::HindsightTrajectory);
}

RelabelOutcome her_episode(const Trajectory& trajectory, int t, const GoalSpace& space, Rng& rng) {
  const Transition& tr = transition_at(trajectory, t);
  const int j = std::uniform_int_distribution<int>(1, trajectory.length())(rng);
  return outcome_for(tr, space.achieved(trajectory.visited(j)), space, GoalSource::HindsightTrajectory);
}

RelabelOutcome fgi_relabel(const Trajectory& trajectory, int t, const TransitionModel& model,
                           const GoalPolicy& policy, const FgiSettings& settings, const GoalSpace& space, Rng& rng) {
  require(model.ready(), "fgi: transition model is not trained yet");
  require(settings.max_rollout >= 1 && settings.samples >= 1, "fgi: invalid settings");
  FgiPlan plan = plan_fgi(trajectory, t, settings, space, rng);
  if (!plan.rollout) return plan.fallback;

  const Transition& tr = trajectory.transitions[static_cast<std::size_t>(t)];
  Goal sum = Goal::Zero(space.goal_dim);
  for (int i = 0; i < settings.samples; ++i) {
    const auto states = rollout(model, tr.next_state, plan.interim_goal, policy, plan.steps, rng);
    sum += space.achieved(states.back());
  }
  return outcome_for(tr, sum / static_cast<double>(settings.samples), space, GoalSource::ModelRollout);
}

RelabelOutcome relabel(const RelabelStrategy& strategy, const Trajectory& trajectory, int t, const GoalSpace& space,
                       Rng& rng) {
  switch (strategy.kind) {
    case RelabelKind::None: {
      const Transition& tr = transition_at(trajectory, t);
      return outcome_for(tr, tr.goal, space, GoalSource::Original);
    }
    case RelabelKind::HerFuture: return her_future(trajectory, t, space, rng);
    case RelabelKind::HerFinal: return her_final(trajectory, t, space);
    case RelabelKind::HerEpisode: return her_episode(trajectory, t, space, rng);
    case RelabelKind::Fgi:
      strategy.validate();
      return fgi_relabel(trajectory, t, *strategy.model, *strategy.policy, strategy.fgi, space, rng);
  }
  throw ContractViolation("relabel: unknown strategy");
}

std::vector<Transition> relabel_batch(std::span<const Transition> batch, const TrajectoryLookup& lookup,
                                      const RelabelStrategy& strategy, double fraction, const GoalSpace& space,
                                      Rng& rng, std::vector<GoalSource>* sources) {
  require(fraction >= 0.0 && fraction <= 1.0, "relabel_batch: fraction must lie in [0, 1]");
  strategy.validate();
  std::vector<Transition> out(batch.begin(), batch.end());
  std::vector<GoalSource> origin(out.size(), GoalSource::Original);

  struct Job {
    std::size_t index;
    int steps;
    Goal interim_goal;
  };
  std::vector<Job> jobs;
  std::bernoulli_distribution coin(fraction);
  const bool always = fraction >= 1.0;

  for (std::size_t i = 0; i < out.size(); ++i) {
    Transition& tr = out[i];
    if (fraction <= 0.0 || strategy.kind == RelabelKind::None) continue;
    if (!always && !coin(rng)) continue;
    const Trajectory* traj = lookup(tr.trajectory_id);
    require(traj != nullptr, "relabel_batch: transition refers to an unknown trajectory");
    const int t = tr.step_index;
    if (strategy.kind == RelabelKind::Fgi) {
      FgiPlan plan = plan_fgi(*traj, t, strategy.fgi, space, rng);
      if (plan.rollout) {
        jobs.push_back({i, plan.steps, std::move(plan.interim_goal)});
        continue;
      }
      tr.goal = std::move(plan.fallback.goal);
      tr.reward = plan.fallback.reward;
      origin[i] = plan.fallback.source;
      continue;
    }
    RelabelOutcome o = relabel(strategy, *traj, t, space, rng);
    tr.goal = std::move(o.goal);
    tr.reward = o.reward;
    origin[i] = o.source;
  }

  if (!jobs.empty()) {
    const auto replicas = static_cast<std::size_t>(strategy.fgi.samples);
    const auto n = static_cast<Eigen::Index>(jobs.size() * replicas);
    const auto sdim = out[jobs.front().index].next_state.size();
    const auto gdim = jobs.front().interim_goal.size();
    Matrix states(sdim, n), goals(gdim, n);
    std::vector<int> steps(static_cast<std::size_t>(n));
    int longest = 0;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      for (std::size_t r = 0; r < replicas; ++r) {
        const auto c = static_cast<Eigen::Index>(j * replicas + r);
        states.col(c) = out[jobs[j].index].next_state;
        goals.col(c) = jobs[j].interim_goal;
        steps[static_cast<std::size_t>(c)] = jobs[j].steps;
      }
      longest = std::max(longest, jobs[j].steps);
    }
    for (int step = 1; step <= longest; ++step) {
      std::vector<Eigen::Index> active;
      for (Eigen::Index c = 0; c < n; ++c)
        if (steps[static_cast<std::size_t>(c)] >= step) active.push_back(c);
      const Matrix s = states(Eigen::all, active);
      const Matrix a = strategy.policy->act_batch(s, goals(Eigen::all, active));
      states(Eigen::all, active) = strategy.model->sample_next_batch(s, a, rng);
    }
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      Goal sum = Goal::Zero(space.goal_dim);
      for (std::size_t r = 0; r < replicas; ++r)
        sum += space.achieved(states.col(static_cast<Eigen::Index>(j * replicas + r)));
      Transition& tr = out[jobs[j].index];
      tr.goal = sum / static_cast<double>(replicas);
      tr.reward = space.reward(tr.next_state, tr.goal);
      origin[jobs[j].index] = GoalSource::ModelRollout;
    }
  }

  if (sources != nullptr) *sources = std::move(origin);
  return out;
}

}  // namespace mapgo
