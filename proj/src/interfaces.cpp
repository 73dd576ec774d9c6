#include "mapgo/interfaces.hpp"

namespace mapgo {

Matrix GoalPolicy::act_batch(const Matrix& states, const Matrix& goals) const {
  require(states.cols() == goals.cols(), "act_batch: column count mismatch");
  Matrix actions;
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    const Action a = act(states.col(j), goals.col(j));
    if (j == 0) actions.resize(a.size(), states.cols());
    actions.col(j) = a;
  }
  return actions;
}

Matrix TransitionModel::sample_next_batch(const Matrix& states, const Matrix& actions, Rng& rng) const {
  require(states.cols() == actions.cols(), "sample_next_batch: column count mismatch");
  Matrix next(states.rows(), states.cols());
  for (Eigen::Index j = 0; j < states.cols(); ++j) next.col(j) = sample_next(states.col(j), actions.col(j), rng);
  return next;
}

}  // namespace mapgo
