#include "helpers.hpp"
#include "mapgo/umpo.hpp"

#include <doctest.h>

using namespace mapgo;
using testing::vec;

namespace {

const GoalSpace kSpace = GoalSpace::identity(2, 0.15);

ActorCriticConfig small() {
  ActorCriticConfig c;
  c.actor_hidden = {16, 16};
  c.critic_hidden = {16, 16};
  return c;
}

Batch random_batch(int n, Rng& rng) {
  std::uniform_real_distribution<double> pos(0.0, 20.0), act(-1.0, 1.0);
  Batch b;
  b.states.resize(2, n);
  b.actions.resize(2, n);
  b.next_states.resize(2, n);
  b.goals.resize(2, n);
  b.rewards.resize(n);
  for (int i = 0; i < n; ++i) {
    b.states.col(i) = vec({pos(rng), pos(rng)});
    b.actions.col(i) = vec({act(rng), act(rng)});
    b.next_states.col(i) = b.states.col(i) + b.actions.col(i);
    b.goals.col(i) = vec({pos(rng), pos(rng)});
    b.rewards[i] = goal_reward(b.next_states.col(i), b.goals.col(i), 0.15);
  }
  return b;
}

ReplayBuffer filled_buffer(int trajectories, std::uint64_t first_id = 0) {
  ReplayBuffer buf;
  for (int i = 0; i < trajectories; ++i) buf.add(testing::line(20, first_id + static_cast<std::uint64_t>(i)));
  return buf;
}

}  // namespace

TEST_CASE("critic targets follow the one-step backup") {
  const TwoDWorld env;
  ActorCritic ac(env, small(), 1);
  auto& target = ac.target_critic();
  target.parameters().setZero();
  target.bias(target.num_layers() - 1)[0] = -10.0;
  Rng rng(1);
  Batch b = random_batch(8, rng);
  b.rewards.setConstant(-1.0);
  b.rewards[3] = 0.0;
  const Vector y = critic_targets(ac, b);
  for (Eigen::Index i = 0; i < 8; ++i) CHECK(y[i] == doctest::Approx(i == 3 ? -9.8 : -10.8));

  ActorCriticConfig clipped = small();
  clipped.clip_targets = true;
  ActorCritic ac2(env, clipped, 1);
  ac2.target_critic().parameters().setZero();
  ac2.target_critic().bias(ac2.target_critic().num_layers() - 1)[0] = -1000.0;
  CHECK(critic_targets(ac2, b).maxCoeff() == doctest::Approx(-50.0));
  ac2.target_critic().bias(ac2.target_critic().num_layers() - 1)[0] = 5.0;
  CHECK(critic_targets(ac2, b).minCoeff() == 0.0);
}

TEST_CASE("critic loss gradient matches central differences") {
  const TwoDWorld env;
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    ActorCritic ac(env, small(), static_cast<std::uint64_t>(trial));
    ac.target_critic() = nn::Mlp(ac.critic().sizes(), nn::OutputActivation::Identity, rng);
    const Batch b = random_batch(16, rng);
    nn::Gradients g;
    critic_loss_and_gradient(ac, b, &g);
    const Vector p = ac.critic().parameters();
    const auto f = [&](const Vector& v) {
      ActorCritic copy = ac;
      copy.critic().parameters() = v;
      return critic_loss_and_gradient(copy, b, nullptr);
    };
    const auto r = nn::finite_difference_check(p, f, g.flat, 1e-4);
    CHECK_MESSAGE(r.passed, "worst relative error " << r.max_relative_error);
  }
}

TEST_CASE("actor objective gradient matches central differences") {
  const TwoDWorld env;
  Rng rng(3);
  for (double l2 : {0.0, 0.5}) {
    ActorCriticConfig c = small();
    c.action_l2 = l2;
    c.actor_final_scale = 1.0;
    ActorCritic ac(env, c, 7);
    const Batch b = random_batch(16, rng);
    nn::Gradients g;
    actor_objective_and_gradient(ac, b, &g);
    const Vector p = ac.actor().parameters();
    const auto f = [&](const Vector& v) {
      ActorCritic copy = ac;
      copy.actor().parameters() = v;
      return actor_objective_and_gradient(copy, b, nullptr);
    };
    const auto r = nn::finite_difference_check(p, f, g.flat, 1e-4);
    CHECK_MESSAGE(r.passed, "worst relative error " << r.max_relative_error);
  }
}

TEST_CASE("actions stay within the bound") {
  const TwoDWorld env;
  ActorCriticConfig c = small();
  c.actor_final_scale = 50.0;
  ActorCritic ac(env, c, 4);
  Rng rng(4);
  const Batch b = random_batch(200, rng);
  const Matrix a = ac.act_batch(b.states, b.goals);
  CHECK(a.cwiseAbs().maxCoeff() <= 1.0);
  CHECK(ac.act(b.states.col(0), b.goals.col(0)) == Action(a.col(0)));

  const ExplorationNoise noise;
  for (int i = 0; i < 2000; ++i) {
    const Action n = noise.apply(vec({0.99, -0.99}), 1.0, rng);
    CHECK(n.cwiseAbs().maxCoeff() <= 1.0);
  }
  const ExplorationNoise none{0.0, 0.0};
  CHECK(none.apply(vec({0.3, 2.0}), 1.0, rng) == vec({0.3, 1.0}));
}

TEST_CASE("exploration noise mixes Gaussian and uniform actions") {
  // With sigma = 0 only the uniform branch changes the action.
  const ExplorationNoise noise{0.0, 0.3};
  Rng rng(5);
  int changed = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) changed += noise.apply(vec({0.1, 0.1}), 1.0, rng) != vec({0.1, 0.1}) ? 1 : 0;
  CHECK(changed / static_cast<double>(n) == doctest::Approx(0.3).epsilon(0.05));
  const ExplorationNoise gaussian{0.2, 0.0};
  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) sum_sq += std::pow(gaussian.apply(vec({0.0, 0.0}), 1.0, rng)[0], 2.0);
  CHECK(std::sqrt(sum_sq / n) == doctest::Approx(0.2).epsilon(0.03));
}

TEST_CASE("soft target update moves the target by tau") {
  const TwoDWorld env;
  ActorCritic ac(env, small(), 6);
  Rng rng(6);
  ac.critic() = nn::Mlp(ac.critic().sizes(), nn::OutputActivation::Identity, rng);
  const Vector before = ac.target_critic().parameters();
  const Vector online = ac.critic().parameters();
  soft_target_update(ac, 0.5);
  CHECK((ac.target_critic().parameters() - 0.5 * (before + online)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("mixed batches take ceil(alpha B) real samples") {
  MixtureConfig cfg;
  CHECK(cfg.real_count() == 13);
  cfg.alpha = 0.5;
  cfg.batch_size = 10;
  CHECK(cfg.real_count() == 5);
  cfg.alpha = 0.0;
  CHECK(cfg.real_count() == 0);

  const ReplayBuffer env_buf = filled_buffer(5, 0);
  const ReplayBuffer model_buf = filled_buffer(5, 1000);
  Rng rng(7);
  const MixedBatch mb = mixed_batch(env_buf, model_buf, MixtureConfig{}, rng);
  CHECK(mb.real.size() == 13);
  CHECK(mb.model.size() == 243);
  for (const auto& t : mb.real) CHECK(t.trajectory_id < 1000);
  for (const auto& t : mb.model) CHECK(t.trajectory_id >= 1000);

  const ReplayBuffer empty;
  const MixedBatch only_real = mixed_batch(env_buf, empty, MixtureConfig{}, rng);
  CHECK(only_real.real.size() == 256);
  CHECK(only_real.model.empty());
  CHECK_THROWS_AS(mixed_batch(empty, empty, MixtureConfig{}, rng), ContractViolation);
  MixtureConfig bad;
  bad.alpha = 1.5;
  CHECK_THROWS_AS(mixed_batch(env_buf, model_buf, bad, rng), ContractViolation);
}

TEST_CASE("branched rollouts store short trajectories with the chosen goals") {
  TwoDWorld env;
  const TrueDynamics truth(env);
  ActorCritic ac(env, small(), 8);
  ReplayBuffer env_buf;
  for (std::uint64_t id = 0; id < 3; ++id)
    env_buf.add(testing::path({vec({5, 5}), vec({6, 5}), vec({7, 5}), vec({8, 5})}, vec({15, 15}), id));
  const auto desired = [&](Rng& r) { return env.sample_desired_goal(r); };
  Rng rng(9);
  for (auto strategy : {RolloutGoalStrategy::Relabel, RolloutGoalStrategy::NoRelabel, RolloutGoalStrategy::NowDesired}) {
    BranchedRolloutSettings s;
    s.length = 5;
    s.count = 40;
    s.goal_strategy = strategy;
    ReplayBuffer model_buf;
    std::uint64_t next_id = 500;
    const std::size_t added =
        branched_rollouts(env_buf, truth, ac, s, kSpace, desired, env.action_bound(), model_buf, next_id, rng);
    CHECK(added == 200);
    CHECK(model_buf.size() == 200);
    CHECK(next_id == 540);
    for (std::size_t i = 0; i < model_buf.num_trajectories(); ++i) {
      const Trajectory& r = model_buf.trajectory(i);
      CHECK(r.length() == 5);
      CHECK(trajectory_is_chained(r));
      const State& start = r.transitions.front().state;
      CHECK(start[1] == 5.0);
      CHECK((start[0] >= 5.0 && start[0] <= 7.0));
      for (const auto& t : r.transitions) {
        CHECK(t.goal == r.behavioral_goal);
        CHECK(t.reward == goal_reward(t.next_state, t.goal, 0.15));
        CHECK(t.next_state == env.transition(t.state, t.action));
      }
      const Goal& g = r.behavioral_goal;
      switch (strategy) {
        case RolloutGoalStrategy::Relabel:
          CHECK(g[1] == 5.0);
          CHECK(g[0] > start[0]);
          CHECK(g[0] <= 8.0);
          break;
        case RolloutGoalStrategy::NoRelabel: CHECK(g == vec({15, 15})); break;
        case RolloutGoalStrategy::NowDesired:
          CHECK((g.array() >= 18.5).all());
          CHECK((g.array() <= 19.5).all());
          break;
      }
    }
  }
  CHECK(parse_rollout_goal_strategy("norelabel") == RolloutGoalStrategy::NoRelabel);
  CHECK(parse_rollout_goal_strategy(to_string(RolloutGoalStrategy::NowDesired)) == RolloutGoalStrategy::NowDesired);
  CHECK_THROWS_AS(parse_rollout_goal_strategy("sometimes"), ContractViolation);
}

TEST_CASE("UMPO without model rollouts trains on real data only") {
  TwoDWorld env;
  ActorCritic ac(env, small(), 10);
  const ReplayBuffer env_buf = filled_buffer(4);
  ReplayBuffer model_buf;
  RelabelStrategy her;
  UmpoSettings s;
  s.gradient_steps = 5;
  s.model_rollouts = false;
  s.mixture.batch_size = 32;
  std::uint64_t next_id = 0;
  Rng rng(11);
  const Vector before = ac.critic().parameters();
  const UmpoStats stats = umpo_train(ac, env_buf, model_buf, nullptr, her, s, kSpace, nullptr, next_id, rng);
  CHECK(stats.gradient_steps == 5);
  CHECK(stats.rollout_transitions == 0);
  CHECK(stats.real_samples == 160);
  CHECK(stats.model_samples == 0);
  CHECK(model_buf.empty());
  CHECK(ac.critic().parameters() != before);
}

TEST_CASE("UMPO with a ready model mixes rollout data") {
  TwoDWorld env;
  const TrueDynamics truth(env);
  ActorCritic ac(env, small(), 12);
  const ReplayBuffer env_buf = filled_buffer(4);
  ReplayBuffer model_buf(100000);
  RelabelStrategy her;
  UmpoSettings s;
  s.gradient_steps = 3;
  s.rollouts.count = 20;
  s.mixture.batch_size = 40;
  s.mixture.alpha = 0.25;
  std::uint64_t next_id = 0;
  Rng rng(13);
  const UmpoStats stats = umpo_train(ac, env_buf, model_buf, &truth, her, s, kSpace, nullptr, next_id, rng);
  CHECK(stats.rollout_transitions == 100);
  CHECK(model_buf.size() == 100);
  CHECK(stats.real_samples == 30);
  CHECK(stats.model_samples == 90);
}
