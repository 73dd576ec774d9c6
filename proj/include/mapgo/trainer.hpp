#pragma once

// The outer training loop: goal selection, environment rollouts, model
// updates, relabeled policy optimisation and periodic evaluation.

#include "mapgo/config.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mapgo {

/// Independent stream seed for (seed, stream); splitmix64 finaliser.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Build identifier baked in at configure time (git describe or "unknown").
const char* build_id();

/// Chooses the initial state and behavioural goal of the next episode.
class GoalSelector {
 public:
  virtual ~GoalSelector() = default;
  virtual std::pair<State, Goal> select(const ReplayBuffer& env_buffer, Environment& env,
                                        const GoalPolicy& policy) = 0;
};

/// Behavioural goal = desired goal from the environment reset.
class DefaultGoalSelector final : public GoalSelector {
 public:
  std::pair<State, Goal> select(const ReplayBuffer& env_buffer, Environment& env, const GoalPolicy& policy) override;
};

struct EvaluationResult {
  double success_rate = 0.0;
  double mean_return = 0.0;
  int episodes = 0;
};

/// Runs the noise-free policy for `episodes` fresh episodes of an environment
/// built from `config` and seeded with `seed`.
EvaluationResult evaluate(const GoalPolicy& policy, const EnvironmentConfig& config, int episodes, std::uint64_t seed);

/// Rolls one episode from `start` towards `goal`; `noise` may be null.
Trajectory collect_episode(Environment& env, const GoalPolicy& policy, const State& start, const Goal& goal,
                           const ExplorationNoise* noise, Rng& rng, std::uint64_t id);

struct RelabeledGoalRow {
  int episode = 0;
  std::string strategy;
  std::uint64_t trajectory = 0;
  int t = 0;
  State state;
  Goal original_goal;
  Goal achieved_goal;
  Goal relabeled_goal;
  GoalSource source = GoalSource::Original;
};

/// Relabels every transition of every probe trajectory once (fraction 1).
std::vector<RelabeledGoalRow> snapshot_relabeled_goals(const std::vector<Trajectory>& probe,
                                                       const RelabelStrategy& strategy, const GoalSpace& space,
                                                       int episode, Rng& rng);

/// Columns: episode,strategy,trajectory,t,state_*,original_goal_*,achieved_goal_*,relabeled_goal_*,source
void write_goal_csv(const std::filesystem::path& path, const std::vector<RelabeledGoalRow>& rows);
std::vector<RelabeledGoalRow> read_goal_csv(const std::filesystem::path& path);

struct SnapshotSummary {
  int episode = 0;
  std::string strategy;
  std::size_t rows = 0;
  std::size_t model_rollout_rows = 0;
  /// Mean distance from relabeled goals to `reference`, over all rows and over
  /// model-rollout rows only (0 when there are none).
  double mean_distance = 0.0;
  double mean_distance_model_rollout = 0.0;
  Goal reference;
};

SnapshotSummary summarize_snapshot(const std::vector<RelabeledGoalRow>& rows, const Goal& reference);

struct EvaluationRow {
  long env_steps = 0;
  int episode = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;
};

struct EpisodeRow {
  int episode = 0;
  long env_steps = 0;
  bool success = false;
  double episode_return = 0.0;
  int gradient_steps = 0;
  double critic_loss = 0.0;
  double actor_q = 0.0;
  std::size_t rollout_transitions = 0;
  std::size_t model_buffer_size = 0;
};

struct ModelTrainRow {
  int episode = 0;
  long env_steps = 0;
  bool skipped = false;
  int epochs = 0;
  std::string stop_reason;
  std::vector<double> validation;
  std::vector<int> elites;
};

struct RunLog {
  nlohmann::json config = nlohmann::json::object();
  std::string build;
  std::vector<EvaluationRow> evaluations;
  std::vector<EpisodeRow> episodes;
  std::vector<ModelTrainRow> model_training;
  std::vector<SnapshotSummary> snapshots;

  /// One JSON object per line, in event order within each kind: header,
  /// episode / model / snapshot / evaluation rows interleaved by episode.
  std::string to_jsonl() const;
  static RunLog from_jsonl(const std::string& text);
  /// Final success rate (last evaluation), or 0 without evaluations.
  double final_success_rate() const;
};

struct RunOptions {
  /// Output directory; empty keeps everything in memory.
  std::filesystem::path out_dir;
  bool resume = false;
  std::optional<std::uint64_t> seed_override;
  std::shared_ptr<GoalSelector> goal_selector;
  /// Called after every episode (for progress output).
  std::function<void(const EpisodeRow&)> on_episode;
  std::function<void(const EvaluationRow&)> on_evaluation;
};

/// Trains per `config`. Writes run.jsonl, curve.csv, goals_<episode>.csv and
/// checkpoints under `options.out_dir` when it is set.
RunLog run_training(const ExperimentConfig& config, const RunOptions& options = {});

/// Writes `curve.csv` (env_steps,success_rate,mean_return).
void write_curve_csv(const std::filesystem::path& path, const std::vector<EvaluationRow>& rows);
std::vector<EvaluationRow> read_curve_csv(const std::filesystem::path& path);

/// Loaded training checkpoint: the policy, the ensemble (when present) and the probe set.
struct LoadedRun {
  ExperimentConfig config;
  std::unique_ptr<Environment> env;
  std::unique_ptr<ActorCritic> agent;
  std::unique_ptr<DynamicsEnsemble> model;
  std::vector<Trajectory> probe;
  int episode = 0;
  long env_steps = 0;
};

LoadedRun load_run_checkpoint(const std::filesystem::path& path);

}  // namespace mapgo
