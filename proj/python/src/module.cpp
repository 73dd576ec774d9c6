// Python bindings: the 2D-World task, seeding, config validation and training runs.
#include "mapgo/checkpoint.hpp"
#include "mapgo/config.hpp"
#include "mapgo/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace mapgo;

namespace {

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c = ExperimentConfig::from_json(nlohmann::json::parse(text));
  c.validate();
  return c;
}

EnvironmentConfig parse_environment(const std::string& text) {
  nlohmann::json j = nlohmann::json::object();
  j["environment"] = nlohmann::json::parse(text);
  return parse_config(j.dump()).environment;
}

}  // namespace

PYBIND11_MODULE(_mapgo, m) {
  m.doc() = "Goal relabeling and model-based policy optimization on the 2D-World task";
  m.attr("__version__") = MAPGO_VERSION;

  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const nlohmann::json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("derive_seed", &derive_seed, py::arg("seed"), py::arg("stream"),
        "Independent 64-bit seed for a numbered stream of a run.");
  m.def("goal_reward", &goal_reward, py::arg("achieved"), py::arg("goal"), py::arg("epsilon"));

  py::class_<TwoDWorld>(m, "TwoDWorld")
      .def(py::init([](const std::string& environment, std::uint64_t seed) {
             return TwoDWorld(parse_environment(environment), seed);
           }),
           py::arg("environment") = "{}", py::arg("seed") = 0,
           "`environment` is the JSON text of a config's environment section.")
      .def_property_readonly("horizon", &TwoDWorld::horizon)
      .def_property_readonly("epsilon", [](const TwoDWorld& w) { return w.goal_space().epsilon; })
      .def_property_readonly("action_bound", &TwoDWorld::action_bound)
      .def("reset", &TwoDWorld::reset, "Draws (s0, goal) and makes the goal current.")
      .def("transition", &TwoDWorld::transition, py::arg("state"), py::arg("action"))
      .def("step",
           [](const TwoDWorld& w, const State& s, const Action& a) {
             const StepResult r = w.step(s, a);
             return py::make_tuple(r.next_state, r.reward);
           },
           py::arg("state"), py::arg("action"))
      .def("reward", [](const TwoDWorld& w, const State& s, const Goal& g) { return w.goal_space().reward(s, g); },
           py::arg("next_state"), py::arg("goal"))
      .def_property("goal", &TwoDWorld::goal, &TwoDWorld::set_goal)
      .def_property_readonly("desired_goal_center", &TwoDWorld::desired_goal_center);

  m.def("default_config", [] { return ExperimentConfig{}.to_json().dump(); });
  m.def("normalize_config", [](const std::string& text) { return parse_config(text).to_json().dump(); },
        py::arg("config"), "Validates config JSON and returns it with every default filled in.");

  m.def(
      "run_training",
      [](const std::string& config, const std::string& out_dir, bool resume, std::optional<std::uint64_t> seed) {
        const ExperimentConfig c = parse_config(config);
        RunOptions opts;
        opts.out_dir = out_dir;
        opts.resume = resume;
        opts.seed_override = seed;
        py::gil_scoped_release release;
        return run_training(c, opts).to_jsonl();
      },
      py::arg("config"), py::arg("out_dir") = "", py::arg("resume") = false, py::arg("seed") = py::none(),
      "Runs training and returns the JSON-lines run log.");

  m.def(
      "read_curve_csv",
      [](const std::filesystem::path& path) {
        std::vector<std::tuple<long, double, double>> rows;
        for (const auto& r : read_curve_csv(path)) rows.emplace_back(r.env_steps, r.success_rate, r.mean_return);
        return rows;
      },
      py::arg("path"), "(env_steps, success_rate, mean_return) rows of a curve.csv.");
}
