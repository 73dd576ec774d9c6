#pragma once

#include "mapgo/gomdp.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace mapgo::nn {

enum class OutputActivation : std::uint32_t { Identity = 0, Tanh = 1 };

/// Flat gradient aligned with Mlp::parameters().
struct Gradients {
  Vector flat;
};

/// Fully connected network with rectifier hidden units. Batches are matrices
/// with one sample per column. All weights live in one flat vector (per layer:
/// W column-major, then b) so optimisers and checkpoints treat them uniformly.
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix> inputs;  // input of each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
    Matrix output;
  };

  Mlp() = default;
  /// Zero-initialised network.
  Mlp(std::vector<int> sizes, OutputActivation output);
  /// Fan-in scaled uniform initialisation; the final layer is multiplied by `final_scale`.
  Mlp(std::vector<int> sizes, OutputActivation output, Rng& rng, double final_scale = 1.0);

  Matrix forward(const Matrix& input) const;
  Matrix forward(const Matrix& input, Cache& cache) const;
  Vector forward(const Vector& input) const;

  /// Backpropagates `output_grad` (d loss / d output, same shape as the cached output).
  /// Either out-parameter may be null to skip that computation.
  void backward(const Cache& cache, const Matrix& output_grad, Gradients* grads, Matrix* input_grad) const;
  Gradients backward(const Cache& cache, const Matrix& output_grad) const;

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  const std::vector<int>& sizes() const { return sizes_; }
  OutputActivation output_activation() const { return output_; }

  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }
  Eigen::Index num_parameters() const { return params_.size(); }

  Eigen::Map<Matrix> weight(int layer);
  Eigen::Map<const Matrix> weight(int layer) const;
  Eigen::Map<Vector> bias(int layer);
  Eigen::Map<const Vector> bias(int layer) const;

  Gradients zero_gradients() const { return {Vector::Zero(params_.size())}; }

 private:
  void layout();

  std::vector<int> sizes_;
  OutputActivation output_ = OutputActivation::Identity;
  Vector params_;
  std::vector<Eigen::Index> offsets_;  // start of W_i; b_i follows it
};

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  std::int64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(Eigen::Index size, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8)
      : first_moment(Vector::Zero(size)), second_moment(Vector::Zero(size)), learning_rate(lr),
        beta1(b1), beta2(b2), epsilon(eps) {}
};

/// Bias-corrected Adam update, in place.
void adam_step(Vector& params, const Vector& grad, AdamState& state);
inline void adam_step(Mlp& net, const Gradients& grads, AdamState& state) {
  adam_step(net.parameters(), grads.flat, state);
}

struct GradientCheckReport {
  double max_relative_error = 0.0;
  Eigen::Index worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool passed = true;
};

/// Compares `analytic` against central differences of `loss` around `params`.
/// The relative error of coordinate i is |a - n| / max(|a|, |n|, abs_floor).
GradientCheckReport finite_difference_check(const Vector& params, const std::function<double(const Vector&)>& loss,
                                            const Vector& analytic, double tolerance, double step = 1e-5,
                                            double abs_floor = 1e-7);

/// Checks Mlp::backward for the scalar `loss(output)` whose output-gradient is `loss_grad(output)`.
GradientCheckReport finite_difference_check(const Mlp& net, const Matrix& input,
                                            const std::function<double(const Matrix&)>& loss,
                                            const std::function<Matrix(const Matrix&)>& loss_grad,
                                            double tolerance, double step = 1e-5);

/// dst <- tau * src + (1 - tau) * dst.
void polyak_update(Vector& dst, const Vector& src, double tau);

}  // namespace mapgo::nn
