#include "mapgo/dynamics.hpp"

#include "mapgo/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mapgo {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vector safe_std(const Matrix& data, const Vector& mean) {
  Vector var = ((data.colwise() - mean).array().square().rowwise().sum() / static_cast<double>(data.cols())).matrix();
  Vector std = var.cwiseSqrt();
  for (Eigen::Index i = 0; i < std.size(); ++i)
    if (!(std[i] > 1e-6)) std[i] = 1.0;
  return std;
}

}  // namespace

double nll_loss(const GaussianPrediction& prediction, const Vector& target) {
  require(prediction.mean.size() == target.size() && prediction.variance.size() == target.size(),
          "nll_loss: dimension mismatch");
  require((prediction.variance.array() > 0.0).all(), "nll_loss: variance must be positive");
  const auto residual = (prediction.mean - target).array();
  return (residual.square() / prediction.variance.array()).sum() + prediction.variance.array().log().sum();
}

double nll_loss(const Matrix& mean, const Matrix& log_variance, const Matrix& target, Matrix* d_mean,
                Matrix* d_log_variance) {
  require(mean.rows() == target.rows() && mean.cols() == target.cols() && log_variance.rows() == mean.rows() &&
              log_variance.cols() == mean.cols(),
          "nll_loss: dimension mismatch");
  const Eigen::ArrayXXd residual = (mean - target).array();
  const Eigen::ArrayXXd inv_var = (-log_variance.array()).exp();
  if (d_mean != nullptr) *d_mean = (2.0 * residual * inv_var).matrix();
  if (d_log_variance != nullptr) *d_log_variance = (1.0 - residual.square() * inv_var).matrix();
  return (residual.square() * inv_var).sum() + log_variance.sum();
}

Matrix soft_clamp_log_variance(const Matrix& raw, double lo, double hi, Matrix* derivative) {
  Matrix out(raw.rows(), raw.cols());
  if (derivative != nullptr) derivative->resize(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
      const double x = raw(i, j);
      const double upper = hi - softplus(hi - x);
      out(i, j) = lo + softplus(upper - lo);
      if (derivative != nullptr) (*derivative)(i, j) = sigmoid(hi - x) * sigmoid(upper - lo);
    }
  }
  return out;
}

void EnsembleConfig::validate() const {
  require(members >= 1, "ensemble: need at least one member");
  require(elites >= 1 && elites <= members, "ensemble: elite count must lie in [1, members]");
  require(validation_fraction > 0.0 && validation_fraction < 1.0, "ensemble: validation fraction must lie in (0, 1)");
  require(batch_size >= 1 && max_epochs >= 1 && patience >= 1, "ensemble: batch, epochs and patience must be positive");
  require(learning_rate > 0.0, "ensemble: learning rate must be positive");
  require(log_variance_min < log_variance_max, "ensemble: empty log-variance range");
}

DynamicsEnsemble::DynamicsEnsemble(int state_dim, int action_dim, EnsembleConfig config, std::uint64_t seed)
    : state_dim_(state_dim), action_dim_(action_dim), config_(std::move(config)) {
  config_.validate();
  std::vector<int> sizes;
  sizes.push_back(state_dim + action_dim);
  sizes.insert(sizes.end(), config_.hidden.begin(), config_.hidden.end());
  sizes.push_back(2 * state_dim);
  Rng init(seed);
  for (int m = 0; m < config_.members; ++m) {
    members_.emplace_back(sizes, nn::OutputActivation::Identity, init);
    optimizers_.emplace_back(members_.back().num_parameters(), config_.learning_rate);
  }
  input_mean_ = Vector::Zero(state_dim + action_dim);
  input_std_ = Vector::Ones(state_dim + action_dim);
  target_mean_ = Vector::Zero(state_dim);
  target_std_ = Vector::Ones(state_dim);
  validation_losses_.assign(static_cast<std::size_t>(config_.members), 0.0);
}

Matrix DynamicsEnsemble::make_inputs(const Matrix& states, const Matrix& actions) const {
  Matrix x(state_dim_ + action_dim_, states.cols());
  x.topRows(state_dim_) = states;
  x.bottomRows(action_dim_) = actions;
  return x;
}

Matrix DynamicsEnsemble::make_targets(const Matrix& states, const Matrix& next_states) const {
  return config_.predict_delta ? Matrix(next_states - states) : next_states;
}

void DynamicsEnsemble::raw_predict(int index, const Matrix& inputs, Matrix& mean, Matrix& log_variance) const {
  const Matrix out = members_[static_cast<std::size_t>(index)].forward(inputs);
  mean = out.topRows(state_dim_);
  log_variance = soft_clamp_log_variance(out.bottomRows(state_dim_), config_.log_variance_min, config_.log_variance_max);
}

double DynamicsEnsemble::member_nll(int index, const Matrix& inputs, const Matrix& targets) const {
  Matrix mean, log_var;
  raw_predict(index, inputs, mean, log_var);
  return nll_loss(mean, log_var, targets) / static_cast<double>(inputs.cols());
}

ModelTrainReport DynamicsEnsemble::train(std::span<const Transition> data, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(data.size());
  Matrix s(state_dim_, n), a(action_dim_, n), s2(state_dim_, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = data[static_cast<std::size_t>(i)];
    s.col(i) = t.state;
    a.col(i) = t.action;
    s2.col(i) = t.next_state;
  }
  return train(s, a, s2, rng);
}

ModelTrainReport DynamicsEnsemble::train(const Matrix& states, const Matrix& actions, const Matrix& next_states,
                                         Rng& rng) {
  require(states.rows() == state_dim_ && actions.rows() == action_dim_ && next_states.rows() == state_dim_ &&
              states.cols() == actions.cols() && states.cols() == next_states.cols(),
          "ensemble train: dimension mismatch");
  ModelTrainReport report;
  const Eigen::Index n = states.cols();
  const auto n_val = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::floor(config_.validation_fraction * static_cast<double>(n))));
  if (n < config_.min_samples || n - n_val < 1) {
    report.skipped = true;
    report.reason = "insufficient data: " + std::to_string(n) + " < " + std::to_string(config_.min_samples);
    return report;
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  const std::vector<Eigen::Index> val_idx(order.begin(), order.begin() + n_val);
  const std::vector<Eigen::Index> train_idx(order.begin() + n_val, order.end());
  const auto n_train = static_cast<Eigen::Index>(train_idx.size());

  const Matrix inputs = make_inputs(states, actions);
  const Matrix targets = make_targets(states, next_states);
  {
    const Matrix train_x = inputs(Eigen::all, train_idx);
    const Matrix train_y = targets(Eigen::all, train_idx);
    input_mean_ = train_x.rowwise().mean();
    input_std_ = safe_std(train_x, input_mean_);
    target_mean_ = train_y.rowwise().mean();
    target_std_ = safe_std(train_y, target_mean_);
  }
  const Matrix xn = (inputs.colwise() - input_mean_).array().colwise() / input_std_.array();
  const Matrix yn = (targets.colwise() - target_mean_).array().colwise() / target_std_.array();
  const Matrix val_x = xn(Eigen::all, val_idx);
  const Matrix val_y = yn(Eigen::all, val_idx);

  const auto members = static_cast<std::size_t>(config_.members);
  std::vector<std::vector<Eigen::Index>> boot(members);
  std::uniform_int_distribution<Eigen::Index> pick(0, n_train - 1);
  for (auto& b : boot) {
    b.resize(static_cast<std::size_t>(n_train));
    for (auto& i : b) i = train_idx[static_cast<std::size_t>(pick(rng))];
  }

  std::vector<double> best(members);
  std::vector<Vector> best_params(members);
  for (std::size_t m = 0; m < members; ++m) {
    best[m] = member_nll(static_cast<int>(m), val_x, val_y);
    best_params[m] = members_[m].parameters();
  }
  report.train_nll.assign(members, {});
  report.validation_nll.assign(members, {});

  const Eigen::Index batch = config_.batch_size;
  Eigen::Index batches = (n_train + batch - 1) / batch;
  if (config_.max_batches_per_epoch > 0) batches = std::min<Eigen::Index>(batches, config_.max_batches_per_epoch);

  int stale_epochs = 0;
  report.stop_reason = "max epochs";
  nn::Mlp::Cache cache;
  nn::Gradients grads;
  for (int epoch = 0; epoch < config_.max_epochs; ++epoch) {
    bool improved = false;
    for (std::size_t m = 0; m < members; ++m) {
      auto& net = members_[m];
      std::shuffle(boot[m].begin(), boot[m].end(), rng);
      double epoch_loss = 0.0;
      Eigen::Index seen = 0;
      for (Eigen::Index b = 0; b < batches; ++b) {
        const auto begin = boot[m].begin() + b * batch;
        const auto end = boot[m].begin() + std::min<Eigen::Index>((b + 1) * batch, n_train);
        const std::vector<Eigen::Index> idx(begin, end);
        const auto count = static_cast<double>(idx.size());
        const Matrix out = net.forward(xn(Eigen::all, idx), cache);
        Matrix dlv_draw;
        const Matrix log_var = soft_clamp_log_variance(out.bottomRows(state_dim_), config_.log_variance_min,
                                                       config_.log_variance_max, &dlv_draw);
        Matrix d_mean, d_log_var;
        const double loss = nll_loss(out.topRows(state_dim_), log_var, yn(Eigen::all, idx), &d_mean, &d_log_var);
        Matrix d_out(out.rows(), out.cols());
        d_out.topRows(state_dim_) = d_mean / count;
        d_out.bottomRows(state_dim_) = d_log_var.cwiseProduct(dlv_draw) / count;
        net.backward(cache, d_out, &grads, nullptr);
        nn::adam_step(net, grads, optimizers_[m]);
        epoch_loss += loss;
        seen += static_cast<Eigen::Index>(idx.size());
      }
      report.train_nll[m].push_back(epoch_loss / static_cast<double>(seen));
      const double val = member_nll(static_cast<int>(m), val_x, val_y);
      report.validation_nll[m].push_back(val);
      if ((best[m] - val) / std::max(std::abs(best[m]), 1e-12) > config_.improvement_threshold) {
        best[m] = val;
        best_params[m] = net.parameters();
        improved = true;
      }
    }
    report.epochs = epoch + 1;
    stale_epochs = improved ? 0 : stale_epochs + 1;
    if (stale_epochs >= config_.patience) {
      report.stop_reason = "validation plateau";
      break;
    }
  }

  for (std::size_t m = 0; m < members; ++m) {
    members_[m].parameters() = best_params[m];
    validation_losses_[m] = member_nll(static_cast<int>(m), val_x, val_y);
  }
  std::vector<int> ranked(members);
  std::iota(ranked.begin(), ranked.end(), 0);
  std::stable_sort(ranked.begin(), ranked.end(), [&](int x, int y) {
    return validation_losses_[static_cast<std::size_t>(x)] < validation_losses_[static_cast<std::size_t>(y)];
  });
  elites_.assign(ranked.begin(), ranked.begin() + config_.elites);
  trained_ = true;

  report.final_validation = validation_losses_;
  report.elites = elites_;
  return report;
}

void DynamicsEnsemble::predict_batch(int index, const Matrix& states, const Matrix& actions, Matrix& mean,
                                     Matrix& variance) const {
  require(states.rows() == state_dim_ && actions.rows() == action_dim_ && states.cols() == actions.cols(),
          "ensemble predict: dimension mismatch");
  require(index >= 0 && index < size(), "ensemble predict: member index out of range");
  const Matrix x = (make_inputs(states, actions).colwise() - input_mean_).array().colwise() / input_std_.array();
  Matrix mean_n, log_var;
  raw_predict(index, x, mean_n, log_var);
  mean = (mean_n.array().colwise() * target_std_.array()).colwise() + target_mean_.array();
  if (config_.predict_delta) mean += states;
  variance = log_var.array().exp().colwise() * target_std_.array().square();
}

GaussianPrediction DynamicsEnsemble::predict(int index, const State& state, const Action& action) const {
  Matrix mean, var;
  predict_batch(index, Matrix(state), Matrix(action), mean, var);
  return {mean.col(0), var.col(0)};
}

State DynamicsEnsemble::sample_next(const State& state, const Action& action, Rng& rng) const {
  return sample_next_batch(Matrix(state), Matrix(action), rng).col(0);
}

Matrix DynamicsEnsemble::sample_next_batch(const Matrix& states, const Matrix& actions, Rng& rng) const {
  require(trained_, "ensemble: rollout requested before the first training");
  const Eigen::Index n = states.cols();
  std::uniform_int_distribution<std::size_t> pick(0, elites_.size() - 1);
  std::vector<std::vector<Eigen::Index>> groups(elites_.size());
  for (Eigen::Index j = 0; j < n; ++j) groups[pick(rng)].push_back(j);

  Matrix mean(state_dim_, n), stddev(state_dim_, n);
  for (std::size_t e = 0; e < groups.size(); ++e) {
    if (groups[e].empty()) continue;
    Matrix m, v;
    predict_batch(elites_[e], states(Eigen::all, groups[e]), actions(Eigen::all, groups[e]), m, v);
    mean(Eigen::all, groups[e]) = m;
    stddev(Eigen::all, groups[e]) = v.cwiseSqrt();
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix noise(state_dim_, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < state_dim_; ++i) noise(i, j) = normal(rng);
  return mean + stddev.cwiseProduct(noise);
}

std::vector<double> DynamicsEnsemble::evaluate_nll(const Matrix& states, const Matrix& actions,
                                                   const Matrix& next_states) const {
  const Matrix x = (make_inputs(states, actions).colwise() - input_mean_).array().colwise() / input_std_.array();
  const Matrix y = (make_targets(states, next_states).colwise() - target_mean_).array().colwise() / target_std_.array();
  std::vector<double> out;
  for (int m = 0; m < size(); ++m) out.push_back(member_nll(m, x, y));
  return out;
}

void DynamicsEnsemble::save_to(Checkpoint& ckpt, const std::string& prefix) const {
  for (int m = 0; m < size(); ++m) ckpt.networks[prefix + "member" + std::to_string(m)] = members_[static_cast<std::size_t>(m)];
  ckpt.vectors[prefix + "input_mean"] = input_mean_;
  ckpt.vectors[prefix + "input_std"] = input_std_;
  ckpt.vectors[prefix + "target_mean"] = target_mean_;
  ckpt.vectors[prefix + "target_std"] = target_std_;
  Vector elites(static_cast<Eigen::Index>(elites_.size()));
  for (std::size_t i = 0; i < elites_.size(); ++i) elites[static_cast<Eigen::Index>(i)] = elites_[i];
  ckpt.vectors[prefix + "elites"] = elites;
  ckpt.vectors[prefix + "validation"] =
      Eigen::Map<const Vector>(validation_losses_.data(), static_cast<Eigen::Index>(validation_losses_.size()));
  ckpt.vectors[prefix + "trained"] = Vector::Constant(1, trained_ ? 1.0 : 0.0);
  // Optimiser moments, so a resumed run continues training bit-identically.
  for (int m = 0; m < size(); ++m) {
    const auto& opt = optimizers_[static_cast<std::size_t>(m)];
    const std::string key = prefix + "adam" + std::to_string(m);
    ckpt.vectors[key + "_m"] = opt.first_moment;
    ckpt.vectors[key + "_v"] = opt.second_moment;
    ckpt.vectors[key + "_step"] = Vector::Constant(1, static_cast<double>(opt.step));
  }
}

void DynamicsEnsemble::load_from(const Checkpoint& ckpt, const std::string& prefix) {
  for (int m = 0; m < size(); ++m) {
    const auto& net = ckpt.network(prefix + "member" + std::to_string(m));
    require(net.sizes() == members_[static_cast<std::size_t>(m)].sizes(), "ensemble load: architecture mismatch");
    members_[static_cast<std::size_t>(m)] = net;
  }
  input_mean_ = ckpt.vector(prefix + "input_mean");
  input_std_ = ckpt.vector(prefix + "input_std");
  target_mean_ = ckpt.vector(prefix + "target_mean");
  target_std_ = ckpt.vector(prefix + "target_std");
  const Vector& elites = ckpt.vector(prefix + "elites");
  elites_.clear();
  for (Eigen::Index i = 0; i < elites.size(); ++i) elites_.push_back(static_cast<int>(elites[i]));
  const Vector& val = ckpt.vector(prefix + "validation");
  validation_losses_.assign(val.data(), val.data() + val.size());
  trained_ = ckpt.vector(prefix + "trained")[0] != 0.0;
  for (int m = 0; m < size(); ++m) {
    const std::string key = prefix + "adam" + std::to_string(m);
    if (!ckpt.vectors.contains(key + "_m")) continue;
    auto& opt = optimizers_[static_cast<std::size_t>(m)];
    opt.first_moment = ckpt.vector(key + "_m");
    opt.second_moment = ckpt.vector(key + "_v");
    opt.step = static_cast<decltype(opt.step)>(ckpt.vector(key + "_step")[0]);
  }
}

std::vector<State> rollout(const TransitionModel& model, const State& start, const Goal& goal,
                           const GoalPolicy& policy, int steps, Rng& rng) {
  require(steps >= 1, "rollout: need at least one step");
  std::vector<State> visited;
  visited.reserve(static_cast<std::size_t>(steps));
  State s = start;
  for (int i = 0; i < steps; ++i) {
    s = model.sample_next(s, policy.act(s, goal), rng);
    visited.push_back(s);
  }
  return visited;
}

}  // namespace mapgo
