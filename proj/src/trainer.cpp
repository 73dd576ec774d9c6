#include "mapgo/trainer.hpp"

#include "mapgo/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <malloc.h>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#ifndef MAPGO_BUILD_ID
#define MAPGO_BUILD_ID "unknown"
#endif

namespace mapgo {

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

const char* build_id() { return MAPGO_BUILD_ID; }

std::pair<State, Goal> DefaultGoalSelector::select(const ReplayBuffer&, Environment& env, const GoalPolicy&) {
  return env.reset();
}

EvaluationResult evaluate(const GoalPolicy& policy, const EnvironmentConfig& config, int episodes,
                          std::uint64_t seed) {
  require(episodes >= 1, "evaluate: episode count must be positive");
  auto env = make_environment(config, seed);
  const auto n = static_cast<Eigen::Index>(episodes);
  Matrix states(env->state_dim(), n), goals(env->goal_dim(), n);
  for (Eigen::Index c = 0; c < n; ++c) {
    auto [s0, g] = env->reset();
    states.col(c) = s0;
    goals.col(c) = g;
  }
  const GoalSpace& space = env->goal_space();
  Vector returns = Vector::Zero(n);
  Vector last = Vector::Constant(n, kFailureReward);
  std::vector<bool> any(static_cast<std::size_t>(n), false);
  for (int step = 0; step < env->horizon(); ++step) {
    const Matrix actions = policy.act_batch(states, goals);
    for (Eigen::Index c = 0; c < n; ++c) {
      states.col(c) = env->transition(states.col(c), actions.col(c));
      const double r = space.reward(states.col(c), goals.col(c));
      returns[c] += r;
      last[c] = r;
      if (r == kSuccessReward) any[static_cast<std::size_t>(c)] = true;
    }
  }
  int successes = 0;
  for (Eigen::Index c = 0; c < n; ++c) {
    const bool ok = env->success_mode() == SuccessMode::FinalStep ? last[c] == kSuccessReward
                                                                  : any[static_cast<std::size_t>(c)];
    successes += ok ? 1 : 0;
  }
  EvaluationResult out;
  out.episodes = episodes;
  out.success_rate = static_cast<double>(successes) / episodes;
  out.mean_return = returns.mean();
  return out;
}

Trajectory collect_episode(Environment& env, const GoalPolicy& policy, const State& start, const Goal& goal,
                           const ExplorationNoise* noise, Rng& rng, std::uint64_t id) {
  const GoalSpace& space = env.goal_space();
  Trajectory traj;
  traj.id = id;
  traj.behavioral_goal = goal;
  traj.transitions.reserve(static_cast<std::size_t>(env.horizon()));
  State s = start;
  for (int step = 0; step < env.horizon(); ++step) {
    Action a = policy.act(s, goal);
    a = noise != nullptr ? noise->apply(a, env.action_bound(), rng) : clip_action(a, env.action_bound());
    Transition t;
    t.state = s;
    t.action = a;
    t.next_state = env.transition(s, a);
    t.goal = goal;
    t.reward = space.reward(t.next_state, goal);
    t.trajectory_id = id;
    t.step_index = step;
    s = t.next_state;
    traj.transitions.push_back(std::move(t));
  }
  return traj;
}

std::vector<RelabeledGoalRow> snapshot_relabeled_goals(const std::vector<Trajectory>& probe,
                                                       const RelabelStrategy& strategy, const GoalSpace& space,
                                                       int episode, Rng& rng) {
  require(!probe.empty(), "snapshot: probe set is empty");
  strategy.validate();
  std::vector<Transition> batch;
  for (const auto& traj : probe) batch.insert(batch.end(), traj.transitions.begin(), traj.transitions.end());
  std::map<std::uint64_t, const Trajectory*> by_id;
  for (const auto& traj : probe) by_id[traj.id] = &traj;
  const TrajectoryLookup lookup = [&by_id](std::uint64_t id) -> const Trajectory* {
    auto it = by_id.find(id);
    return it == by_id.end() ? nullptr : it->second;
  };
  std::vector<GoalSource> sources;
  const auto relabeled = relabel_batch(batch, lookup, strategy, 1.0, space, rng, &sources);
  std::vector<RelabeledGoalRow> rows;
  rows.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    RelabeledGoalRow row;
    row.episode = episode;
    row.strategy = to_string(strategy.kind);
    row.trajectory = batch[i].trajectory_id;
    row.t = batch[i].step_index;
    row.state = batch[i].state;
    row.original_goal = batch[i].goal;
    row.achieved_goal = space.achieved(batch[i].next_state);
    row.relabeled_goal = relabeled[i].goal;
    row.source = sources[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

void write_vector(std::ostream& out, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ',' << v[i];
}

void header_columns(std::ostream& out, const char* name, Eigen::Index dim) {
  for (Eigen::Index i = 0; i < dim; ++i) out << ',' << name << '_' << i;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

GoalSource parse_source(const std::string& s) {
  if (s == "original") return GoalSource::Original;
  if (s == "hindsight-trajectory") return GoalSource::HindsightTrajectory;
  if (s == "model-rollout") return GoalSource::ModelRollout;
  throw std::runtime_error("goal csv: unknown source '" + s + "'");
}

}  // namespace

void write_goal_csv(const fs::path& path, const std::vector<RelabeledGoalRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  const Eigen::Index sdim = rows.empty() ? 0 : rows.front().state.size();
  const Eigen::Index gdim = rows.empty() ? 0 : rows.front().relabeled_goal.size();
  out << "episode,strategy,trajectory,t";
  header_columns(out, "state", sdim);
  header_columns(out, "original_goal", gdim);
  header_columns(out, "achieved_goal", gdim);
  header_columns(out, "relabeled_goal", gdim);
  out << ",source\n";
  for (const auto& r : rows) {
    out << r.episode << ',' << r.strategy << ',' << r.trajectory << ',' << r.t;
    write_vector(out, r.state);
    write_vector(out, r.original_goal);
    write_vector(out, r.achieved_goal);
    write_vector(out, r.relabeled_goal);
    out << ',' << to_string(r.source) << '\n';
  }
}

std::vector<RelabeledGoalRow> read_goal_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("goal csv: missing header in " + path.string());
  const auto header = split(line, ',');
  Eigen::Index sdim = 0, gdim = 0;
  for (const auto& h : header) {
    if (h.rfind("state_", 0) == 0) ++sdim;
    if (h.rfind("relabeled_goal_", 0) == 0) ++gdim;
  }
  const std::size_t expected = 4 + static_cast<std::size_t>(sdim + 3 * gdim) + 1;
  if (header.size() != expected) throw std::runtime_error("goal csv: malformed header in " + path.string());
  std::vector<RelabeledGoalRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != expected) throw std::runtime_error("goal csv: ragged row in " + path.string());
    RelabeledGoalRow r;
    std::size_t k = 0;
    r.episode = std::stoi(cells[k++]);
    r.strategy = cells[k++];
    r.trajectory = std::stoull(cells[k++]);
    r.t = std::stoi(cells[k++]);
    auto take = [&](Eigen::Index dim) {
      Vector v(dim);
      for (Eigen::Index i = 0; i < dim; ++i) v[i] = std::stod(cells[k++]);
      return v;
    };
    r.state = take(sdim);
    r.original_goal = take(gdim);
    r.achieved_goal = take(gdim);
    r.relabeled_goal = take(gdim);
    r.source = parse_source(cells[k]);
    rows.push_back(std::move(r));
  }
  return rows;
}

SnapshotSummary summarize_snapshot(const std::vector<RelabeledGoalRow>& rows, const Goal& reference) {
  SnapshotSummary s;
  s.reference = reference;
  s.rows = rows.size();
  if (!rows.empty()) {
    s.episode = rows.front().episode;
    s.strategy = rows.front().strategy;
  }
  double all = 0.0, model = 0.0;
  for (const auto& r : rows) {
    const double d = (r.relabeled_goal - reference).norm();
    all += d;
    if (r.source == GoalSource::ModelRollout) {
      model += d;
      ++s.model_rollout_rows;
    }
  }
  if (s.rows > 0) s.mean_distance = all / static_cast<double>(s.rows);
  if (s.model_rollout_rows > 0) s.mean_distance_model_rollout = model / static_cast<double>(s.model_rollout_rows);
  return s;
}

// ---------------------------------------------------------------------------
// Run log

namespace {

json to_json(const EvaluationRow& r) {
  return {{"type", "evaluation"},
          {"env_steps", r.env_steps},
          {"episode", r.episode},
          {"success_rate", r.success_rate},
          {"mean_return", r.mean_return}};
}

json to_json(const EpisodeRow& r) {
  return {{"type", "episode"},
          {"episode", r.episode},
          {"env_steps", r.env_steps},
          {"success", r.success},
          {"return", r.episode_return},
          {"gradient_steps", r.gradient_steps},
          {"critic_loss", r.critic_loss},
          {"actor_q", r.actor_q},
          {"rollout_transitions", r.rollout_transitions},
          {"model_buffer_size", r.model_buffer_size}};
}

json to_json(const ModelTrainRow& r) {
  return {{"type", "model_train"}, {"episode", r.episode},       {"env_steps", r.env_steps},
          {"skipped", r.skipped},  {"epochs", r.epochs},         {"stop_reason", r.stop_reason},
          {"validation", r.validation}, {"elites", r.elites}};
}

json to_json(const SnapshotSummary& s) {
  return {{"type", "snapshot"},
          {"episode", s.episode},
          {"strategy", s.strategy},
          {"rows", s.rows},
          {"model_rollout_rows", s.model_rollout_rows},
          {"mean_distance", s.mean_distance},
          {"mean_distance_model_rollout", s.mean_distance_model_rollout},
          {"reference", std::vector<double>(s.reference.data(), s.reference.data() + s.reference.size())}};
}

}  // namespace

std::string RunLog::to_jsonl() const {
  std::ostringstream out;
  out << json{{"type", "header"}, {"build", build}, {"config", config}}.dump() << '\n';
  // Events of one episode appear as episode, model_train, snapshot, evaluation.
  std::size_t ie = 0, im = 0, is = 0, iv = 0;
  auto flush_upto = [&](int episode) {
    while (im < model_training.size() && model_training[im].episode <= episode)
      out << to_json(model_training[im++]).dump() << '\n';
    while (is < snapshots.size() && snapshots[is].episode <= episode) out << to_json(snapshots[is++]).dump() << '\n';
    while (iv < evaluations.size() && evaluations[iv].episode <= episode)
      out << to_json(evaluations[iv++]).dump() << '\n';
  };
  flush_upto(0);
  for (; ie < episodes.size(); ++ie) {
    out << to_json(episodes[ie]).dump() << '\n';
    flush_upto(episodes[ie].episode);
  }
  flush_upto(std::numeric_limits<int>::max());
  return out.str();
}

RunLog RunLog::from_jsonl(const std::string& text) {
  RunLog log;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const std::string type = j.at("type");
    if (type == "header") {
      log.config = j.at("config");
      log.build = j.at("build");
    } else if (type == "evaluation") {
      log.evaluations.push_back({j.at("env_steps"), j.at("episode"), j.at("success_rate"), j.at("mean_return")});
    } else if (type == "episode") {
      EpisodeRow r;
      r.episode = j.at("episode");
      r.env_steps = j.at("env_steps");
      r.success = j.at("success");
      r.episode_return = j.at("return");
      r.gradient_steps = j.at("gradient_steps");
      r.critic_loss = j.at("critic_loss");
      r.actor_q = j.at("actor_q");
      r.rollout_transitions = j.at("rollout_transitions");
      r.model_buffer_size = j.at("model_buffer_size");
      log.episodes.push_back(r);
    } else if (type == "model_train") {
      ModelTrainRow r;
      r.episode = j.at("episode");
      r.env_steps = j.at("env_steps");
      r.skipped = j.at("skipped");
      r.epochs = j.at("epochs");
      r.stop_reason = j.at("stop_reason");
      r.validation = j.at("validation").get<std::vector<double>>();
      r.elites = j.at("elites").get<std::vector<int>>();
      log.model_training.push_back(r);
    } else if (type == "snapshot") {
      SnapshotSummary s;
      s.episode = j.at("episode");
      s.strategy = j.at("strategy");
      s.rows = j.at("rows");
      s.model_rollout_rows = j.at("model_rollout_rows");
      s.mean_distance = j.at("mean_distance");
      s.mean_distance_model_rollout = j.at("mean_distance_model_rollout");
      const auto ref = j.at("reference").get<std::vector<double>>();
      s.reference = Eigen::Map<const Vector>(ref.data(), static_cast<Eigen::Index>(ref.size()));
      log.snapshots.push_back(s);
    } else {
      throw std::runtime_error("run log: unknown row type '" + type + "'");
    }
  }
  return log;
}

double RunLog::final_success_rate() const { return evaluations.empty() ? 0.0 : evaluations.back().success_rate; }

void write_curve_csv(const fs::path& path, const std::vector<EvaluationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "env_steps,success_rate,mean_return\n";
  for (const auto& r : rows) out << r.env_steps << ',' << r.success_rate << ',' << r.mean_return << '\n';
}

std::vector<EvaluationRow> read_curve_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "env_steps,success_rate,mean_return")
    throw std::runtime_error("curve csv: unexpected header in " + path.string());
  std::vector<EvaluationRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 3) throw std::runtime_error("curve csv: ragged row in " + path.string());
    EvaluationRow r;
    r.env_steps = std::stol(cells[0]);
    r.success_rate = std::stod(cells[1]);
    r.mean_return = std::stod(cells[2]);
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

constexpr std::uint64_t kEnvStream = 1;
constexpr std::uint64_t kAgentStream = 2;
constexpr std::uint64_t kModelInitStream = 3;
constexpr std::uint64_t kTrainStream = 4;
constexpr std::uint64_t kModelTrainStream = 5;
constexpr std::uint64_t kEvalStream = 6;
constexpr std::uint64_t kSnapshotStream = 1u << 20;

std::string rng_state(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void restore_rng(Rng& rng, const std::string& state) {
  std::istringstream in(state);
  in >> rng;
  if (!in) throw CheckpointError("checkpoint: corrupt rng state");
}

void save_adam(Checkpoint& ckpt, const std::string& name, const nn::AdamState& s) {
  ckpt.vectors[name + "_m"] = s.first_moment;
  ckpt.vectors[name + "_v"] = s.second_moment;
  ckpt.header["adam_steps"][name] = s.step;
}

void load_adam(const Checkpoint& ckpt, const std::string& name, nn::AdamState& s) {
  if (!ckpt.vectors.contains(name + "_m")) return;
  s.first_moment = ckpt.vector(name + "_m");
  s.second_moment = ckpt.vector(name + "_v");
  s.step = ckpt.header.at("adam_steps").at(name);
}

std::vector<Trajectory> buffer_contents(const ReplayBuffer& buffer) {
  std::vector<Trajectory> out;
  out.reserve(buffer.num_trajectories());
  for (std::size_t i = 0; i < buffer.num_trajectories(); ++i) out.push_back(buffer.trajectory(i));
  return out;
}

struct TrainingState {
  ExperimentConfig config;
  std::unique_ptr<Environment> env;
  std::unique_ptr<ActorCritic> agent;
  std::unique_ptr<DynamicsEnsemble> model;
  ReplayBuffer env_buffer;
  ReplayBuffer model_buffer;
  std::vector<Trajectory> probe;
  Rng train_rng;
  Rng model_rng;
  std::uint64_t next_env_id = 0;
  std::uint64_t next_model_id = 0;
  int episode = 0;
  long env_steps = 0;
  long next_evaluation = 0;
  RunLog log;

  explicit TrainingState(const ExperimentConfig& cfg)
      : config(cfg),
        env(make_environment(cfg.environment, derive_seed(cfg.seed, kEnvStream))),
        agent(std::make_unique<ActorCritic>(*env, cfg.agent, derive_seed(cfg.seed, kAgentStream))),
        env_buffer(cfg.buffer_capacity),
        model_buffer(cfg.umpo.model_buffer_capacity),
        train_rng(derive_seed(cfg.seed, kTrainStream)),
        model_rng(derive_seed(cfg.seed, kModelTrainStream)) {
    if (cfg.needs_model())
      model = std::make_unique<DynamicsEnsemble>(env->state_dim(), env->action_dim(), cfg.model.ensemble,
                                                 derive_seed(cfg.seed, kModelInitStream));
    log.config = cfg.to_json();
    log.build = build_id();
  }

  Checkpoint policy_checkpoint() const {
    Checkpoint ckpt;
    ckpt.header["format"] = "mapgo-run";
    ckpt.header["config"] = config.to_json();
    ckpt.header["build"] = build_id();
    ckpt.header["episode"] = episode;
    ckpt.header["env_steps"] = env_steps;
    ckpt.header["has_model"] = model != nullptr;
    agent->save_to(ckpt);
    if (model) model->save_to(ckpt, "model/");
    ckpt.trajectories["probe"] = probe;
    return ckpt;
  }

  Checkpoint full_checkpoint() {
    Checkpoint ckpt = policy_checkpoint();
    save_adam(ckpt, "actor_adam", agent->actor_optimizer());
    save_adam(ckpt, "critic_adam", agent->critic_optimizer());
    ckpt.header["resumable"] = true;
    ckpt.header["env_rng"] = rng_state(env->rng());
    ckpt.header["train_rng"] = rng_state(train_rng);
    ckpt.header["model_rng"] = rng_state(model_rng);
    ckpt.header["next_env_id"] = next_env_id;
    ckpt.header["next_model_id"] = next_model_id;
    ckpt.header["next_evaluation"] = next_evaluation;
    ckpt.header["run_log"] = log.to_jsonl();
    ckpt.trajectories["env_buffer"] = buffer_contents(env_buffer);
    ckpt.trajectories["model_buffer"] = buffer_contents(model_buffer);
    return ckpt;
  }

  void restore(const Checkpoint& ckpt) {
    if (!ckpt.header.value("resumable", false)) throw CheckpointError("checkpoint is not resumable");
    if (ckpt.header.at("config") != config.to_json())
      throw CheckpointError("checkpoint was written with a different config");
    agent->load_from(ckpt);
    load_adam(ckpt, "actor_adam", agent->actor_optimizer());
    load_adam(ckpt, "critic_adam", agent->critic_optimizer());
    if (model) model->load_from(ckpt, "model/");
    probe = ckpt.trajectories.at("probe");
    env_buffer.clear();
    for (const auto& t : ckpt.trajectories.at("env_buffer")) env_buffer.add(t);
    model_buffer.clear();
    for (const auto& t : ckpt.trajectories.at("model_buffer")) model_buffer.add(t);
    restore_rng(env->rng(), ckpt.header.at("env_rng"));
    restore_rng(train_rng, ckpt.header.at("train_rng"));
    restore_rng(model_rng, ckpt.header.at("model_rng"));
    next_env_id = ckpt.header.at("next_env_id");
    next_model_id = ckpt.header.at("next_model_id");
    next_evaluation = ckpt.header.at("next_evaluation");
    episode = ckpt.header.at("episode");
    env_steps = ckpt.header.at("env_steps");
    log = RunLog::from_jsonl(ckpt.header.at("run_log").get<std::string>());
  }

  RelabelStrategy strategy_for(RelabelKind kind) const {
    RelabelStrategy s;
    s.kind = kind;
    s.fgi = config.relabel.fgi_settings;
    s.model = model.get();
    s.policy = agent.get();
    return s;
  }

  RelabelStrategy training_strategy() const {
    if (config.relabel.fgi && model && model->ready()) return strategy_for(RelabelKind::Fgi);
    return strategy_for(config.relabel.her);
  }
};

void write_outputs(const fs::path& dir, const RunLog& log) {
  if (dir.empty()) return;
  std::ofstream(dir / "run.jsonl") << log.to_jsonl();
  write_curve_csv(dir / "curve.csv", log.evaluations);
}

}  // namespace

RunLog run_training(const ExperimentConfig& base, const RunOptions& options) {
  // Minibatch matrices are allocated and freed thousands of times per episode;
  // keep them on the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);

  ExperimentConfig cfg = base;
  if (options.seed_override) cfg.seed = *options.seed_override;
  cfg.validate();

  TrainingState st(cfg);
  const fs::path& out = options.out_dir;
  if (!out.empty()) {
    fs::create_directories(out);
    if (cfg.write_checkpoints) fs::create_directories(out / "checkpoints");
    if (options.resume && fs::exists(out / "checkpoint.bin")) st.restore(Checkpoint::load(out / "checkpoint.bin"));
  }
  if (cfg.episodes == 0) {
    write_outputs(out, st.log);
    return st.log;
  }

  auto selector = options.goal_selector ? options.goal_selector : std::make_shared<DefaultGoalSelector>();
  Environment& env = *st.env;
  const GoalSpace& space = env.goal_space();
  const std::function<Goal(Rng&)> desired = [&env](Rng& rng) { return env.sample_desired_goal(rng); };
  const std::set<int> snapshot_episodes(cfg.snapshots.episodes.begin(), cfg.snapshots.episodes.end());
  const std::uint64_t eval_seed = derive_seed(cfg.seed, kEvalStream);

  UmpoSettings umpo;
  umpo.iterations = cfg.training.iterations_per_episode;
  umpo.gradient_steps = static_cast<int>(std::lround(cfg.training.gradient_steps_per_env_step * env.horizon() /
                                                     cfg.training.iterations_per_episode));
  umpo.mixture.alpha = cfg.umpo.alpha;
  umpo.mixture.batch_size = cfg.training.batch_size;
  umpo.rollouts.length = cfg.umpo.rollout_length;
  umpo.rollouts.count = cfg.umpo.rollouts_per_iteration;
  umpo.rollouts.goal_strategy = cfg.umpo.rollout_goal;
  umpo.rollouts.noise = cfg.umpo.rollout_noise ? cfg.exploration : ExplorationNoise{0.0, 0.0};
  umpo.relabel_fraction = cfg.relabel.fraction;

  auto run_evaluation = [&] {
    const EvaluationResult r = evaluate(*st.agent, cfg.environment, cfg.evaluation.episodes, eval_seed);
    EvaluationRow row{st.env_steps, st.episode, r.success_rate, r.mean_return};
    st.log.evaluations.push_back(row);
    st.next_evaluation = (st.env_steps / cfg.evaluation.every_env_steps + 1) * cfg.evaluation.every_env_steps;
    if (!out.empty()) {
      if (cfg.write_checkpoints) {
        st.policy_checkpoint().save(out / "checkpoints" / ("step_" + std::to_string(st.env_steps) + ".bin"));
        st.full_checkpoint().save(out / "checkpoint.bin");
      }
      write_outputs(out, st.log);
    }
    if (options.on_evaluation) options.on_evaluation(row);
  };

  if (st.episode == 0 && st.log.evaluations.empty()) run_evaluation();

  while (st.episode < cfg.episodes) {
    ++st.episode;
    auto [start, goal] = selector->select(st.env_buffer, env, *st.agent);
    require(goal.size() == space.goal_dim, "goal selector returned a goal of the wrong dimension");
    Trajectory traj = collect_episode(env, *st.agent, start, goal, &cfg.exploration, st.train_rng, st.next_env_id++);
    EpisodeRow row;
    row.episode = st.episode;
    row.success = episode_success(traj, env.success_mode());
    for (const auto& t : traj.transitions) row.episode_return += t.reward;
    st.env_steps += traj.length();
    row.env_steps = st.env_steps;
    if (static_cast<int>(st.probe.size()) < cfg.snapshots.probe_trajectories) st.probe.push_back(traj);
    st.env_buffer.add(std::move(traj));

    if (st.model && st.episode % cfg.model.train_every_episodes == 0) {
      std::vector<Transition> data;
      data.reserve(st.env_buffer.size());
      st.env_buffer.for_each([&](const Transition& t) { data.push_back(t); });
      const ModelTrainReport report = st.model->train(data, st.model_rng);
      ModelTrainRow m;
      m.episode = st.episode;
      m.env_steps = st.env_steps;
      m.skipped = report.skipped;
      m.epochs = report.epochs;
      m.stop_reason = report.skipped ? report.reason : report.stop_reason;
      m.validation = report.final_validation;
      m.elites = report.elites;
      st.log.model_training.push_back(std::move(m));
      if (!report.skipped) st.model_buffer.clear();
    }

    umpo.model_rollouts = cfg.umpo.enabled && st.model && st.model->ready();
    const UmpoStats stats = umpo_train(*st.agent, st.env_buffer, st.model_buffer, st.model.get(),
                                       st.training_strategy(), umpo, space, desired, st.next_model_id, st.train_rng);
    row.gradient_steps = stats.gradient_steps;
    row.critic_loss = stats.mean_critic_loss;
    row.actor_q = stats.mean_actor_q;
    row.rollout_transitions = stats.rollout_transitions;
    row.model_buffer_size = st.model_buffer.size();
    st.log.episodes.push_back(row);

    if (snapshot_episodes.contains(st.episode)) {
      std::vector<RelabeledGoalRow> rows;
      for (const auto& name : cfg.snapshots.strategies) {
        const RelabelKind kind = parse_relabel_kind(name);
        if (kind == RelabelKind::Fgi && !(st.model && st.model->ready())) continue;
        Rng rng(derive_seed(cfg.seed, kSnapshotStream + static_cast<std::uint64_t>(st.episode) * 16 +
                                          static_cast<std::uint64_t>(kind)));
        auto part = snapshot_relabeled_goals(st.probe, st.strategy_for(kind), space, st.episode, rng);
        st.log.snapshots.push_back(summarize_snapshot(part, env.desired_goal_center()));
        rows.insert(rows.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
      }
      if (!out.empty() && !rows.empty()) write_goal_csv(out / ("goals_" + std::to_string(st.episode) + ".csv"), rows);
    }

    if (options.on_episode) options.on_episode(row);
    if (st.env_steps >= st.next_evaluation) run_evaluation();
  }
  write_outputs(out, st.log);
  return st.log;
}

LoadedRun load_run_checkpoint(const fs::path& path) {
  const Checkpoint ckpt = Checkpoint::load(path);
  if (ckpt.header.value("format", "") != "mapgo-run") throw CheckpointError("not a training checkpoint: " + path.string());
  LoadedRun run;
  run.config = ExperimentConfig::from_json(ckpt.header.at("config"));
  run.env = make_environment(run.config.environment, derive_seed(run.config.seed, kEnvStream));
  run.agent = std::make_unique<ActorCritic>(*run.env, run.config.agent, derive_seed(run.config.seed, kAgentStream));
  run.agent->load_from(ckpt);
  if (ckpt.header.value("has_model", false)) {
    run.model = std::make_unique<DynamicsEnsemble>(run.env->state_dim(), run.env->action_dim(),
                                                   run.config.model.ensemble, 0);
    run.model->load_from(ckpt, "model/");
  }
  if (ckpt.trajectories.contains("probe")) run.probe = ckpt.trajectories.at("probe");
  run.episode = ckpt.header.at("episode");
  run.env_steps = ckpt.header.at("env_steps");
  return run;
}

}  // namespace mapgo
