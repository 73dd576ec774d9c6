#include "mapgo/replay_buffer.hpp"

#include <algorithm>

namespace mapgo {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  require(capacity > 0, "replay buffer: capacity must be positive");
}

void ReplayBuffer::add(Trajectory trajectory) {
  const auto length = trajectory.transitions.size();
  require(length > 0, "replay buffer: empty trajectory");
  require(length <= capacity_, "replay buffer: trajectory longer than capacity");
  for (auto& t : trajectory.transitions) t.trajectory_id = trajectory.id;
  while (size_ + length > capacity_) {
    const auto dropped = trajectories_.front().transitions.size();
    trajectories_.pop_front();
    starts_.pop_front();
    size_ -= dropped;
    evicted_ += dropped;
  }
  if (!trajectories_.empty() && trajectory.id <= trajectories_.back().id) ids_sorted_ = false;
  if (trajectories_.empty()) ids_sorted_ = true;
  starts_.push_back(evicted_ + size_);
  trajectories_.push_back(std::move(trajectory));
  size_ += length;
}

void ReplayBuffer::clear() {
  trajectories_.clear();
  starts_.clear();
  evicted_ += size_;
  size_ = 0;
  ids_sorted_ = true;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  require(i < size_, "replay buffer: index out of range");
  const std::size_t global = i + evicted_;
  const auto it = std::upper_bound(starts_.begin(), starts_.end(), global);
  const auto k = static_cast<std::size_t>(std::distance(starts_.begin(), it)) - 1;
  return trajectories_[k].transitions[global - starts_[k]];
}

const Trajectory* ReplayBuffer::find(std::uint64_t id) const {
  if (ids_sorted_) {
    const auto it = std::lower_bound(trajectories_.begin(), trajectories_.end(), id,
                                     [](const Trajectory& t, std::uint64_t v) { return t.id < v; });
    return (it != trajectories_.end() && it->id == id) ? &*it : nullptr;
  }
  for (const auto& t : trajectories_)
    if (t.id == id) return &t;
  return nullptr;
}

std::size_t ReplayBuffer::sample_index(Rng& rng) const {
  require(size_ > 0, "replay buffer: sampling from an empty buffer");
  return std::uniform_int_distribution<std::size_t>(0, size_ - 1)(rng);
}

std::vector<Transition> ReplayBuffer::sample(std::size_t count, Rng& rng) const {
  std::vector<Transition> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(at(sample_index(rng)));
  return out;
}

const Trajectory& ReplayBuffer::sample_trajectory(Rng& rng) const {
  require(!trajectories_.empty(), "replay buffer: sampling from an empty buffer");
  return trajectories_[std::uniform_int_distribution<std::size_t>(0, trajectories_.size() - 1)(rng)];
}

}  // namespace mapgo
