#pragma once

#include "mapgo/dynamics.hpp"
#include "mapgo/gomdp.hpp"
#include "mapgo/relabel.hpp"
#include "mapgo/umpo.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace mapgo {

/// Malformed or unreadable configuration (unknown keys, bad enum names, missing file).
class ConfigError : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

/// Relabeling of real training samples.
struct RelabelConfig {
  /// Foresight goal inference on; otherwise `her` is used directly.
  bool fgi = false;
  RelabelKind her = RelabelKind::HerFuture;
  double fraction = 0.8;
  FgiSettings fgi_settings{};
};

struct TrainingConfig {
  int batch_size = 256;
  double gradient_steps_per_env_step = 2.0;
  int iterations_per_episode = 1;
};

struct UmpoConfig {
  bool enabled = false;
  double alpha = 0.05;
  int rollout_length = 5;
  int rollouts_per_iteration = 400;
  RolloutGoalStrategy rollout_goal = RolloutGoalStrategy::Relabel;
  std::size_t model_buffer_capacity = 100000;
  /// Apply the exploration noise to model-rollout actions as well.
  bool rollout_noise = true;
};

struct ModelConfig {
  EnsembleConfig ensemble{};
  int train_every_episodes = 1;
};

struct EvaluationConfig {
  long every_env_steps = 5000;
  int episodes = 100;
};

struct SnapshotConfig {
  std::vector<int> episodes;
  int probe_trajectories = 50;
  std::vector<std::string> strategies = {"her"};
};

/// Everything a training run needs. Parsed from / echoed to JSON; see
/// docs/config-schema.md.
struct ExperimentConfig {
  std::string name = "mapgo";
  EnvironmentConfig environment{};
  RelabelConfig relabel{};
  TrainingConfig training{};
  UmpoConfig umpo{};
  ActorCriticConfig agent{};
  ExplorationNoise exploration{};
  ModelConfig model{};
  std::size_t buffer_capacity = 100000;
  int episodes = 1000;
  EvaluationConfig evaluation{};
  SnapshotConfig snapshots{};
  std::uint64_t seed = 0;
  bool write_checkpoints = true;

  bool needs_model() const { return relabel.fgi || umpo.enabled; }
  void validate() const;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

}  // namespace mapgo
