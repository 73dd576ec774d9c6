#include "mapgo/checkpoint.hpp"
#include "mapgo/trainer.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>

using namespace mapgo;
namespace fs = std::filesystem;

namespace {

int cmd_train(const fs::path& config_path, std::optional<std::uint64_t> seed, const fs::path& out, bool resume,
              bool quiet) {
  const ExperimentConfig cfg = ExperimentConfig::load(config_path);
  RunOptions opts;
  opts.out_dir = out;
  opts.resume = resume;
  opts.seed_override = seed;
  if (!quiet) {
    opts.on_evaluation = [](const EvaluationRow& r) {
      std::cout << "episode " << r.episode << "  env_steps " << r.env_steps << "  success " << r.success_rate
                << "  return " << r.mean_return << std::endl;
    };
  }
  const RunLog log = run_training(cfg, opts);
  std::cout << "final success rate " << log.final_success_rate() << "\n";
  return 0;
}

int cmd_evaluate(const fs::path& checkpoint, int episodes, std::uint64_t seed) {
  const LoadedRun run = load_run_checkpoint(checkpoint);
  const EvaluationResult r = evaluate(*run.agent, run.config.environment, episodes, seed);
  nlohmann::json j{{"checkpoint", checkpoint.string()},
                   {"episode", run.episode},
                   {"env_steps", run.env_steps},
                   {"episodes", r.episodes},
                   {"success_rate", r.success_rate},
                   {"mean_return", r.mean_return}};
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_snapshot(const fs::path& checkpoint, const std::string& strategy_name, fs::path out, std::uint64_t seed) {
  const LoadedRun run = load_run_checkpoint(checkpoint);
  if (run.probe.empty()) throw std::runtime_error("checkpoint holds no probe trajectories");
  RelabelStrategy strategy;
  strategy.kind = parse_relabel_kind(strategy_name);
  strategy.fgi = run.config.relabel.fgi_settings;
  strategy.model = run.model.get();
  strategy.policy = run.agent.get();
  if (strategy.kind == RelabelKind::Fgi && run.model == nullptr)
    throw std::runtime_error("checkpoint holds no dynamics model; fgi snapshots need one");
  Rng rng(seed);
  const auto rows = snapshot_relabeled_goals(run.probe, strategy, run.env->goal_space(), run.episode, rng);
  if (out.empty()) out = "goals_" + std::to_string(run.episode) + ".csv";
  write_goal_csv(out, rows);
  const auto s = summarize_snapshot(rows, run.env->desired_goal_center());
  std::cout << "wrote " << rows.size() << " rows to " << out.string() << "  mean distance to target "
            << s.mean_distance << "\n";
  return 0;
}

int cmd_compare(const std::vector<fs::path>& runs, const fs::path& report) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& dir : runs) {
    const auto curve = read_curve_csv(dir / "curve.csv");
    if (curve.empty()) throw std::runtime_error("empty curve in " + dir.string());
    std::string name = dir.filename().string();
    if (fs::exists(dir / "run.jsonl")) {
      std::ifstream in(dir / "run.jsonl");
      std::string first;
      std::getline(in, first);
      const auto header = nlohmann::json::parse(first);
      name = header.at("config").value("name", name);
    }
    double best = 0.0;
    for (const auto& r : curve) best = std::max(best, r.success_rate);
    j.push_back({{"run", dir.string()},
                 {"name", name},
                 {"evaluations", curve.size()},
                 {"final_env_steps", curve.back().env_steps},
                 {"final_success_rate", curve.back().success_rate},
                 {"final_mean_return", curve.back().mean_return},
                 {"best_success_rate", best}});
  }
  // Group by config name: mean and std of the final success rate.
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : j) groups[r.at("name")].push_back(r.at("final_success_rate"));
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& [name, v] : groups) {
    double mean = 0.0, var = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : v) var += (x - mean) * (x - mean);
    summary[name] = {{"runs", v.size()},
                     {"final_success_mean", mean},
                     {"final_success_std", std::sqrt(var / static_cast<double>(v.size()))}};
  }
  std::ofstream(report) << nlohmann::json{{"runs", j}, {"summary", summary}}.dump(2) << "\n";
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Goal-conditioned RL with foresight relabeling and model-based policy optimisation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(build_id()));

  auto* train = app.add_subcommand("train", "Train an agent from an experiment config");
  fs::path config_path, out_dir = "run";
  std::optional<std::uint64_t> seed;
  bool resume = false, quiet = false;
  train->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--out", out_dir, "Output directory");
  train->add_flag("--resume", resume, "Continue from <out>/checkpoint.bin when present");
  train->add_flag("--quiet", quiet, "Only print the final success rate");

  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpointed policy");
  fs::path checkpoint;
  int episodes = 100;
  std::uint64_t eval_seed = 12345;
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", episodes)->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed);

  auto* snap = app.add_subcommand("snapshot-goals", "Relabel the probe trajectories of a checkpoint");
  std::string strategy = "her";
  fs::path snap_out;
  std::uint64_t snap_seed = 0;
  snap->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  snap->add_option("--strategy", strategy)->check(CLI::IsMember({"her", "fgi"}));
  snap->add_option("--out", snap_out, "CSV path (default goals_<episode>.csv)");
  snap->add_option("--seed", snap_seed);

  auto* validate = app.add_subcommand("validate", "Check a config and print it with defaults filled in");
  validate->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  auto* compare = app.add_subcommand("compare", "Summarise the curves of several runs");
  std::vector<fs::path> runs;
  fs::path report = "report.json";
  compare->add_option("--runs", runs)->required()->check(CLI::ExistingDirectory);
  compare->add_option("--report", report);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(config_path, seed, out_dir, resume, quiet);
    if (*eval) return cmd_evaluate(checkpoint, episodes, eval_seed);
    if (*snap) return cmd_snapshot(checkpoint, strategy, snap_out, snap_seed);
    if (*compare) return cmd_compare(runs, report);
    if (*validate) {
      const ExperimentConfig c = ExperimentConfig::load(config_path);
      c.validate();
      std::cout << c.to_json().dump(2) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
