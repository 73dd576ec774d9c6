#pragma once

#include "mapgo/interfaces.hpp"
#include "mapgo/nn.hpp"

#include <string>
#include <vector>

namespace mapgo {

struct Checkpoint;

/// Diagonal Gaussian over the next state.
struct GaussianPrediction {
  Vector mean;
  Vector variance;
};

/// Gaussian negative log-likelihood without the constant term:
/// (mu - y)^T Sigma^-1 (mu - y) + log det Sigma.
double nll_loss(const GaussianPrediction& prediction, const Vector& target);

/// Batched form parameterised by log-variance, one sample per column, summed
/// over the batch. Optionally writes d loss / d mean and d loss / d log_variance.
double nll_loss(const Matrix& mean, const Matrix& log_variance, const Matrix& target, Matrix* d_mean = nullptr,
                Matrix* d_log_variance = nullptr);

/// Smoothly bounds raw log-variance outputs to [lo, hi]. `derivative`, when
/// given, receives d bounded / d raw.
Matrix soft_clamp_log_variance(const Matrix& raw, double lo, double hi, Matrix* derivative = nullptr);

struct EnsembleConfig {
  int members = 6;
  int elites = 3;
  std::vector<int> hidden = {200, 200, 200, 200};
  double learning_rate = 1e-3;
  double validation_fraction = 0.2;
  int batch_size = 256;
  int max_epochs = 100;
  int patience = 5;
  /// Relative validation improvement that resets the patience counter.
  double improvement_threshold = 0.01;
  int min_samples = 256;
  /// Upper bound on minibatches per member per epoch; 0 means a full pass.
  int max_batches_per_epoch = 0;
  bool predict_delta = true;
  double log_variance_min = -10.0;
  double log_variance_max = 0.5;

  void validate() const;
};

struct ModelTrainReport {
  bool skipped = false;
  std::string reason;
  int epochs = 0;
  std::string stop_reason;
  std::vector<std::vector<double>> train_nll;       // [member][epoch]
  std::vector<std::vector<double>> validation_nll;  // [member][epoch]
  std::vector<double> final_validation;             // per member, after restoring the best epoch
  std::vector<int> elites;
};

/// Bootstrapped ensemble of probabilistic networks. Each member maps the
/// normalised (s, a) to the mean and bounded log-variance of the normalised
/// state delta. Rollouts draw from a uniformly chosen elite member.
class DynamicsEnsemble final : public TransitionModel {
 public:
  DynamicsEnsemble(int state_dim, int action_dim, EnsembleConfig config, std::uint64_t seed);

  /// Trains on (s, a, s') columns. Below `min_samples` this is a no-op whose
  /// report is marked skipped.
  ModelTrainReport train(const Matrix& states, const Matrix& actions, const Matrix& next_states, Rng& rng);
  ModelTrainReport train(std::span<const Transition> data, Rng& rng);

  /// Prediction of member `index` in raw state units.
  GaussianPrediction predict(int index, const State& state, const Action& action) const;
  void predict_batch(int index, const Matrix& states, const Matrix& actions, Matrix& mean, Matrix& variance) const;

  State sample_next(const State& state, const Action& action, Rng& rng) const override;
  Matrix sample_next_batch(const Matrix& states, const Matrix& actions, Rng& rng) const override;

  /// Mean per-sample validation NLL of every member on the given data (normalised units).
  std::vector<double> evaluate_nll(const Matrix& states, const Matrix& actions, const Matrix& next_states) const;

  bool ready() const override { return trained_; }
  bool trained() const { return trained_; }
  const std::vector<int>& elites() const { return elites_; }
  const std::vector<double>& validation_losses() const { return validation_losses_; }
  int size() const { return static_cast<int>(members_.size()); }
  const nn::Mlp& member(int i) const { return members_.at(static_cast<std::size_t>(i)); }
  const EnsembleConfig& config() const { return config_; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }

  void save_to(Checkpoint& ckpt, const std::string& prefix) const;
  void load_from(const Checkpoint& ckpt, const std::string& prefix);

 private:
  Matrix make_inputs(const Matrix& states, const Matrix& actions) const;
  Matrix make_targets(const Matrix& states, const Matrix& next_states) const;
  /// Normalised mean and bounded log-variance for member `index`.
  void raw_predict(int index, const Matrix& inputs, Matrix& mean, Matrix& log_variance) const;
  double member_nll(int index, const Matrix& inputs, const Matrix& targets) const;

  int state_dim_;
  int action_dim_;
  EnsembleConfig config_;
  std::vector<nn::Mlp> members_;
  std::vector<nn::AdamState> optimizers_;
  Vector input_mean_, input_std_, target_mean_, target_std_;
  std::vector<int> elites_;
  std::vector<double> validation_losses_;
  bool trained_ = false;
};

/// Runs `steps` model steps from `start` with actions from `policy` conditioned on
/// `goal`; returns the visited states after each step (length == steps).
std::vector<State> rollout(const TransitionModel& model, const State& start, const Goal& goal,
                           const GoalPolicy& policy, int steps, Rng& rng);

}  // namespace mapgo
