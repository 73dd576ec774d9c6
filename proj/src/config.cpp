#include "mapgo/config.hpp"

#include <fstream>
#include <set>

namespace mapgo {

using nlohmann::json;

namespace {


void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string("config: '") + section + "' must be an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!keys.contains(key)) throw ConfigError(std::string("config: unknown key '") + key + "' in " + section);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string success_mode_name(SuccessMode m) { return m == SuccessMode::FinalStep ? "final-step" : "any-step"; }

SuccessMode parse_success_mode(const std::string& s) {
  if (s == "final-step") return SuccessMode::FinalStep;
  if (s == "any-step") return SuccessMode::AnyStep;
  throw ConfigError("config: unknown success mode '" + s + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  environment.validate();
  require(relabel.fraction >= 0.0 && relabel.fraction <= 1.0, "config: relabel fraction must lie in [0, 1]");
  require(relabel.fgi_settings.max_rollout >= 1, "config: fgi max rollout must be at least 1");
  require(relabel.fgi_settings.samples >= 1, "config: fgi samples must be at least 1");
  require(!relabel.fgi || relabel.her != RelabelKind::Fgi, "config: her strategy cannot be fgi");
  require(training.batch_size >= 1, "config: batch size must be positive");
  require(training.gradient_steps_per_env_step >= 0.0, "config: gradient steps per env step must be non-negative");
  require(training.iterations_per_episode >= 1, "config: iterations per episode must be positive");
  require(umpo.alpha >= 0.0 && umpo.alpha <= 1.0, "config: alpha must lie in [0, 1]");
  require(umpo.rollout_length >= 1 && umpo.rollouts_per_iteration >= 0, "config: invalid rollout settings");
  require(umpo.model_buffer_capacity >= 1, "config: model buffer capacity must be positive");
  agent.validate();
  require(exploration.sigma >= 0.0, "config: exploration sigma must be non-negative");
  require(exploration.random_action_probability >= 0.0 && exploration.random_action_probability <= 1.0,
          "config: random action probability must lie in [0, 1]");
  model.ensemble.validate();
  require(model.train_every_episodes >= 1, "config: model training cadence must be positive");
  require(buffer_capacity >= static_cast<std::size_t>(environment.horizon), "config: buffer smaller than an episode");
  require(episodes >= 0, "config: episode budget must be non-negative");
  require(evaluation.every_env_steps >= 1 && evaluation.episodes >= 1, "config: invalid evaluation settings");
  require(snapshots.probe_trajectories >= 1, "config: probe set must be non-empty");
  for (const auto& s : snapshots.strategies) {
    const auto kind = parse_relabel_kind(s);
    require(kind != RelabelKind::None, "config: snapshot strategy cannot be none");
  }
}

json ExperimentConfig::to_json() const {
  json j;
  j["name"] = name;
  j["seed"] = seed;
  j["episodes"] = episodes;
  j["buffer_capacity"] = buffer_capacity;
  j["write_checkpoints"] = write_checkpoints;
  j["environment"] = {{"name", environment.name},
                      {"epsilon", environment.epsilon},
                      {"horizon", environment.horizon},
                      {"state_low", environment.state_low},
                      {"state_high", environment.state_high},
                      {"goal_low", environment.goal_low},
                      {"goal_high", environment.goal_high},
                      {"action_bound", environment.action_bound},
                      {"success_mode", success_mode_name(environment.success_mode)}};
  j["relabel"] = {{"fgi", relabel.fgi},
                  {"her", to_string(relabel.her)},
                  {"fraction", relabel.fraction},
                  {"fgi_max_rollout", relabel.fgi_settings.max_rollout},
                  {"fgi_literal_branch", relabel.fgi_settings.literal_branch},
                  {"fgi_samples", relabel.fgi_settings.samples},
                  {"fgi_condition_on_stored_goal", relabel.fgi_settings.condition_on_stored_goal}};
  j["training"] = {{"batch_size", training.batch_size},
                   {"gradient_steps_per_env_step", training.gradient_steps_per_env_step},
                   {"iterations_per_episode", training.iterations_per_episode}};
  j["umpo"] = {{"enabled", umpo.enabled},
               {"alpha", umpo.alpha},
               {"rollout_length", umpo.rollout_length},
               {"rollouts_per_iteration", umpo.rollouts_per_iteration},
               {"rollout_goal", to_string(umpo.rollout_goal)},
               {"model_buffer_capacity", umpo.model_buffer_capacity},
               {"rollout_noise", umpo.rollout_noise}};
  j["agent"] = {{"actor_hidden", agent.actor_hidden},
                {"critic_hidden", agent.critic_hidden},
                {"actor_lr", agent.actor_learning_rate},
                {"critic_lr", agent.critic_learning_rate},
                {"gamma", agent.gamma},
                {"tau", agent.tau},
                {"actor_final_scale", agent.actor_final_scale},
                {"action_l2", agent.action_l2},
                {"clip_targets", agent.clip_targets},
                {"exploration_sigma", exploration.sigma},
                {"random_action_probability", exploration.random_action_probability}};
  const auto& e = model.ensemble;
  j["model"] = {{"members", e.members},
                {"elites", e.elites},
                {"hidden", e.hidden},
                {"lr", e.learning_rate},
                {"validation_fraction", e.validation_fraction},
                {"batch_size", e.batch_size},
                {"max_epochs", e.max_epochs},
                {"patience", e.patience},
                {"improvement_threshold", e.improvement_threshold},
                {"min_samples", e.min_samples},
                {"max_batches_per_epoch", e.max_batches_per_epoch},
                {"predict_delta", e.predict_delta},
                {"log_variance_min", e.log_variance_min},
                {"log_variance_max", e.log_variance_max},
                {"train_every_episodes", model.train_every_episodes}};
  j["evaluation"] = {{"every_env_steps", evaluation.every_env_steps}, {"episodes", evaluation.episodes}};
  j["snapshots"] = {{"episodes", snapshots.episodes},
                    {"probe_trajectories", snapshots.probe_trajectories},
                    {"strategies", snapshots.strategies}};
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  check_keys(j, "config",
             {"name", "seed", "episodes", "buffer_capacity", "write_checkpoints", "environment", "relabel", "training",
              "umpo", "agent", "model", "evaluation", "snapshots"});
  read(j, "name", c.name);
  read(j, "seed", c.seed);
  read(j, "episodes", c.episodes);
  read(j, "buffer_capacity", c.buffer_capacity);
  read(j, "write_checkpoints", c.write_checkpoints);

  if (j.contains("environment")) {
    const auto& e = j.at("environment");
    check_keys(e, "environment",
               {"name", "epsilon", "horizon", "state_low", "state_high", "goal_low", "goal_high", "action_bound",
                "success_mode"});
    read(e, "name", c.environment.name);
    read(e, "epsilon", c.environment.epsilon);
    read(e, "horizon", c.environment.horizon);
    read(e, "state_low", c.environment.state_low);
    read(e, "state_high", c.environment.state_high);
    read(e, "goal_low", c.environment.goal_low);
    read(e, "goal_high", c.environment.goal_high);
    read(e, "action_bound", c.environment.action_bound);
    if (e.contains("success_mode")) c.environment.success_mode = parse_success_mode(e.at("success_mode"));
  }
  if (j.contains("relabel")) {
    const auto& r = j.at("relabel");
    check_keys(r, "relabel", {"fgi", "her", "fraction", "fgi_max_rollout", "fgi_literal_branch", "fgi_samples",
                               "fgi_condition_on_stored_goal"});
    read(r, "fgi", c.relabel.fgi);
    if (r.contains("her")) c.relabel.her = parse_relabel_kind(r.at("her"));
    read(r, "fraction", c.relabel.fraction);
    read(r, "fgi_max_rollout", c.relabel.fgi_settings.max_rollout);
    read(r, "fgi_literal_branch", c.relabel.fgi_settings.literal_branch);
    read(r, "fgi_samples", c.relabel.fgi_settings.samples);
    read(r, "fgi_condition_on_stored_goal", c.relabel.fgi_settings.condition_on_stored_goal);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    check_keys(t, "training", {"batch_size", "gradient_steps_per_env_step", "iterations_per_episode"});
    read(t, "batch_size", c.training.batch_size);
    read(t, "gradient_steps_per_env_step", c.training.gradient_steps_per_env_step);
    read(t, "iterations_per_episode", c.training.iterations_per_episode);
  }
  if (j.contains("umpo")) {
    const auto& u = j.at("umpo");
    check_keys(u, "umpo",
               {"enabled", "alpha", "rollout_length", "rollouts_per_iteration", "rollout_goal",
                "model_buffer_capacity", "rollout_noise"});
    read(u, "enabled", c.umpo.enabled);
    read(u, "alpha", c.umpo.alpha);
    read(u, "rollout_length", c.umpo.rollout_length);
    read(u, "rollouts_per_iteration", c.umpo.rollouts_per_iteration);
    if (u.contains("rollout_goal")) c.umpo.rollout_goal = parse_rollout_goal_strategy(u.at("rollout_goal"));
    read(u, "model_buffer_capacity", c.umpo.model_buffer_capacity);
    read(u, "rollout_noise", c.umpo.rollout_noise);
  }
  if (j.contains("agent")) {
    const auto& a = j.at("agent");
    check_keys(a, "agent",
               {"actor_hidden", "critic_hidden", "actor_lr", "critic_lr", "gamma", "tau", "actor_final_scale",
                "action_l2", "clip_targets", "exploration_sigma", "random_action_probability"});
    read(a, "actor_hidden", c.agent.actor_hidden);
    read(a, "critic_hidden", c.agent.critic_hidden);
    read(a, "actor_lr", c.agent.actor_learning_rate);
    read(a, "critic_lr", c.agent.critic_learning_rate);
    read(a, "gamma", c.agent.gamma);
    read(a, "tau", c.agent.tau);
    read(a, "actor_final_scale", c.agent.actor_final_scale);
    read(a, "action_l2", c.agent.action_l2);
    read(a, "clip_targets", c.agent.clip_targets);
    read(a, "exploration_sigma", c.exploration.sigma);
    read(a, "random_action_probability", c.exploration.random_action_probability);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, "model",
               {"members", "elites", "hidden", "lr", "validation_fraction", "batch_size", "max_epochs", "patience",
                "improvement_threshold", "min_samples", "max_batches_per_epoch", "predict_delta", "log_variance_min",
                "log_variance_max", "train_every_episodes"});
    auto& e = c.model.ensemble;
    read(m, "members", e.members);
    read(m, "elites", e.elites);
    read(m, "hidden", e.hidden);
    read(m, "lr", e.learning_rate);
    read(m, "validation_fraction", e.validation_fraction);
    read(m, "batch_size", e.batch_size);
    read(m, "max_epochs", e.max_epochs);
    read(m, "patience", e.patience);
    read(m, "improvement_threshold", e.improvement_threshold);
    read(m, "min_samples", e.min_samples);
    read(m, "max_batches_per_epoch", e.max_batches_per_epoch);
    read(m, "predict_delta", e.predict_delta);
    read(m, "log_variance_min", e.log_variance_min);
    read(m, "log_variance_max", e.log_variance_max);
    read(m, "train_every_episodes", c.model.train_every_episodes);
  }
  if (j.contains("evaluation")) {
    const auto& v = j.at("evaluation");
    check_keys(v, "evaluation", {"every_env_steps", "episodes"});
    read(v, "every_env_steps", c.evaluation.every_env_steps);
    read(v, "episodes", c.evaluation.episodes);
  }
  if (j.contains("snapshots")) {
    const auto& s = j.at("snapshots");
    check_keys(s, "snapshots", {"episodes", "probe_trajectories", "strategies"});
    read(s, "episodes", c.snapshots.episodes);
    read(s, "probe_trajectories", c.snapshots.probe_trajectories);
    read(s, "strategies", c.snapshots.strategies);
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace mapgo
