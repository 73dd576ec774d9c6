#pragma once

#include "mapgo/gomdp.hpp"

#include <deque>
#include <functional>
#include <vector>

namespace mapgo {

/// Resolves a trajectory id to its stored trajectory, or nullptr.
using TrajectoryLookup = std::function<const Trajectory*(std::uint64_t)>;

/// FIFO store of whole trajectories with a transition-count capacity. Eviction
/// always removes complete trajectories (oldest first) so every stored
/// transition stays resolvable to its trajectory.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100000);

  /// Appends a trajectory, evicting the oldest ones until the total fits.
  void add(Trajectory trajectory);
  void clear();

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t num_trajectories() const { return trajectories_.size(); }
  bool empty() const { return size_ == 0; }

  /// Transition `i` in insertion order, 0 <= i < size().
  const Transition& at(std::size_t i) const;
  const Trajectory& trajectory(std::size_t i) const { return trajectories_.at(i); }
  const Trajectory* find(std::uint64_t id) const;
  TrajectoryLookup lookup() const {
    return [this](std::uint64_t id) { return find(id); };
  }

  /// Uniform over stored transitions.
  std::size_t sample_index(Rng& rng) const;
  std::vector<Transition> sample(std::size_t count, Rng& rng) const;
  /// Uniform over stored trajectories.
  const Trajectory& sample_trajectory(Rng& rng) const;

  template <class Fn>
  void for_each(Fn&& fn) const {
    for (const auto& traj : trajectories_)
      for (const auto& t : traj.transitions) fn(t);
  }

 private:
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::deque<Trajectory> trajectories_;
  std::deque<std::size_t> starts_;  // absolute transition offset of each trajectory
  std::size_t evicted_ = 0;         // transitions evicted so far
  bool ids_sorted_ = true;
};

}  // namespace mapgo
