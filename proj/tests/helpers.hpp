#pragma once

#include "mapgo/gomdp.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace testing {

using mapgo::Action;
using mapgo::State;
using mapgo::Trajectory;
using mapgo::Transition;

inline mapgo::Vector vec(std::initializer_list<double> xs) {
  mapgo::Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

/// Trajectory through the given visited states s_0..s_L with goal `goal`,
/// rewards computed with the identity mapping.
inline Trajectory path(const std::vector<State>& visited, const mapgo::Goal& goal, std::uint64_t id = 0,
                       double eps = 0.15) {
  Trajectory t;
  t.id = id;
  t.behavioral_goal = goal;
  for (std::size_t i = 0; i + 1 < visited.size(); ++i) {
    Transition tr;
    tr.state = visited[i];
    tr.next_state = visited[i + 1];
    tr.action = visited[i + 1] - visited[i];
    tr.goal = goal;
    tr.reward = mapgo::goal_reward(tr.next_state, goal, eps);
    tr.trajectory_id = id;
    tr.step_index = static_cast<int>(i);
    t.transitions.push_back(tr);
  }
  return t;
}

/// Straight line from (0,0) moving (1, 0.5) per step for `length` steps.
inline Trajectory line(int length, std::uint64_t id = 0) {
  std::vector<State> visited;
  for (int j = 0; j <= length; ++j) visited.push_back(vec({1.0 * j, 0.5 * j}));
  return path(visited, vec({19.0, 19.0}), id);
}

/// Two-sided Kolmogorov-Smirnov statistic against U[lo, hi].
inline double ks_uniform(std::vector<double> xs, double lo, double hi) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = std::clamp((xs[i] - lo) / (hi - lo), 0.0, 1.0);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic KS critical value at significance 0.01.
inline double ks_critical_01(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

/// Pearson chi-square statistic of `counts` against equal expected frequencies.
inline double chi_square_uniform(const std::vector<long>& counts) {
  double total = 0.0;
  for (long c : counts) total += static_cast<double>(c);
  const double expected = total / static_cast<double>(counts.size());
  double chi = 0.0;
  for (long c : counts) chi += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  return chi;
}

/// Upper 0.001 quantile of chi-square, Wilson-Hilferty approximation.
inline double chi_square_critical_999(int dof) {
  const double z = 3.0902;
  const double k = static_cast<double>(dof);
  const double a = 2.0 / (9.0 * k);
  return k * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

}  // namespace testing
