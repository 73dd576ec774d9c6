#include "helpers.hpp"
#include "mapgo/interfaces.hpp"
#include "mapgo/trainer.hpp"

#include <doctest.h>

using namespace mapgo;
using testing::vec;

TEST_CASE("goal reward is sparse with an inclusive threshold") {
  CHECK(goal_reward(vec({18.9, 19.0}), vec({19.0, 19.0}), 0.15) == 0.0);
  CHECK(goal_reward(vec({19.0, 19.15}), vec({19.0, 19.0}), 0.15) == 0.0);
  CHECK(goal_reward(vec({19.0, 19.1501}), vec({19.0, 19.0}), 0.15) == -1.0);
  CHECK(goal_reward(vec({0.0, 0.0}), vec({19.0, 19.0}), 0.15) == -1.0);
  CHECK_THROWS_AS(goal_reward(vec({1.0}), vec({1.0, 2.0}), 0.15), ContractViolation);
}

TEST_CASE("identity goal space maps the leading coordinates") {
  const GoalSpace space = GoalSpace::identity(2, 0.15);
  CHECK(space.achieved(vec({3.0, 4.0})) == vec({3.0, 4.0}));
  CHECK(space.reward(vec({3.0, 4.0}), vec({3.1, 4.0})) == 0.0);
}

TEST_CASE("2D-World clips actions and clamps states to the box") {
  TwoDWorld env;
  CHECK(env.transition(vec({10.0, 10.0}), vec({5.0, -5.0})) == vec({11.0, 9.0}));
  CHECK(env.transition(vec({19.5, 0.2}), vec({1.0, -1.0})) == vec({20.0, 0.0}));
  CHECK(env.transition(vec({3.0, 4.0}), vec({0.25, -0.5})) == vec({3.25, 3.5}));
  CHECK(clip_action(vec({2.0, -0.3}), 1.0) == vec({1.0, -0.3}));
}

TEST_CASE("2D-World reset starts at the origin with a goal in the target square") {
  TwoDWorld env({}, 11);
  for (int i = 0; i < 100; ++i) {
    auto [s0, g] = env.reset();
    CHECK(s0 == vec({0.0, 0.0}));
    CHECK(g[0] >= 18.5);
    CHECK(g[0] <= 19.5);
    CHECK(g[1] >= 18.5);
    CHECK(g[1] <= 19.5);
    CHECK(env.goal() == g);
  }
  CHECK(env.desired_goal_center() == vec({19.0, 19.0}));
}

TEST_CASE("fixed seed gives a fixed reset pair") {
  TwoDWorld a({}, 5), b({}, 5);
  CHECK(a.reset() == b.reset());
  CHECK(a.reset() == b.reset());
}

TEST_CASE("default goal selector draws uniform goals (KS test)") {
  TwoDWorld env({}, 2024);
  DefaultGoalSelector selector;
  ReplayBuffer buffer;
  const FunctionPolicy idle([](const State&, const Goal&) { return Action::Zero(2); });
  std::vector<double> xs, ys;
  const std::size_t n = 10000;
  for (std::size_t i = 0; i < n; ++i) {
    auto [s0, g] = selector.select(buffer, env, idle);
    CHECK(s0 == vec({0.0, 0.0}));
    xs.push_back(g[0]);
    ys.push_back(g[1]);
  }
  CHECK(testing::ks_uniform(xs, 18.5, 19.5) < testing::ks_critical_01(n));
  CHECK(testing::ks_uniform(ys, 18.5, 19.5) < testing::ks_critical_01(n));
}

TEST_CASE("step uses the episode goal") {
  TwoDWorld env({}, 1);
  CHECK_THROWS_AS(env.step(vec({0.0, 0.0}), vec({1.0, 1.0})), ContractViolation);
  env.set_goal(vec({1.0, 1.0}));
  const StepResult r = env.step(vec({0.0, 0.0}), vec({1.0, 1.0}));
  CHECK(r.next_state == vec({1.0, 1.0}));
  CHECK(r.reward == 0.0);
}

TEST_CASE("invalid environment configs are rejected") {
  EnvironmentConfig c;
  c.epsilon = 0.0;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
  c = {};
  c.horizon = 0;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
  c = {};
  c.state_high = c.state_low;
  CHECK_THROWS_AS(TwoDWorld{c}, ContractViolation);
  c = {};
  c.name = "nowhere";
  CHECK_THROWS_AS(make_environment(c, 0), ContractViolation);
}

TEST_CASE("trajectory indexing and chaining") {
  const Trajectory t = testing::line(4, 7);
  CHECK(t.length() == 4);
  CHECK(t.visited(0) == vec({0.0, 0.0}));
  CHECK(t.visited(3) == vec({3.0, 1.5}));
  CHECK(t.final_state() == vec({4.0, 2.0}));
  CHECK_THROWS_AS(t.visited(5), ContractViolation);
  CHECK(trajectory_is_chained(t));
  Trajectory broken = t;
  broken.transitions[2].state = vec({9.0, 9.0});
  CHECK_FALSE(trajectory_is_chained(broken));
  broken = t;
  broken.transitions[1].trajectory_id = 8;
  CHECK_FALSE(trajectory_is_chained(broken));
}

TEST_CASE("episode success modes") {
  Trajectory t = testing::path({vec({0, 0}), vec({1, 1}), vec({2, 2})}, vec({1, 1}));
  CHECK_FALSE(episode_success(t, SuccessMode::FinalStep));
  CHECK(episode_success(t, SuccessMode::AnyStep));
  t = testing::path({vec({0, 0}), vec({1, 1}), vec({2, 2})}, vec({2, 2.1}));
  CHECK(episode_success(t, SuccessMode::FinalStep));
  CHECK_THROWS_AS(episode_success(Trajectory{}), ContractViolation);
}

TEST_CASE("a random-action policy almost never ends inside the target") {
  // Monte-Carlo oracle: uniform actions in [-1,1]^2 for 100 steps from the origin.
  Rng oracle_rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  TwoDWorld env;
  int hits = 0;
  const int trials = 2000;
  for (int i = 0; i < trials; ++i) {
    State s = vec({0.0, 0.0});
    const Goal g = env.sample_desired_goal(oracle_rng);
    for (int k = 0; k < 100; ++k) s = env.transition(s, vec({u(oracle_rng), u(oracle_rng)}));
    hits += goal_reward(s, g, 0.15) == 0.0 ? 1 : 0;
  }
  CHECK(static_cast<double>(hits) / trials < 0.05);

  Rng policy_rng(3);
  const FunctionPolicy random([&](const State&, const Goal&) { return Action(vec({u(policy_rng), u(policy_rng)})); });
  const EvaluationResult r = evaluate(random, EnvironmentConfig{}, 500, 17);
  CHECK(r.success_rate < 0.05);
  CHECK(r.mean_return <= -95.0);
}

TEST_CASE("a scripted straight-to-goal policy always succeeds") {
  const FunctionPolicy scripted([](const State& s, const Goal& g) { return Action(clip_action(g - s, 1.0)); });
  const EvaluationResult r = evaluate(scripted, EnvironmentConfig{}, 100, 5);
  CHECK(r.success_rate == 1.0);
  CHECK(r.episodes == 100);
  // 19 or 20 failing steps before arrival, then success every step.
  CHECK(r.mean_return > -21.0);
  CHECK(r.mean_return < -17.0);
  const EvaluationResult again = evaluate(scripted, EnvironmentConfig{}, 100, 5);
  CHECK(again.success_rate == r.success_rate);
  CHECK(again.mean_return == r.mean_return);
}
