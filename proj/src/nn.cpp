#include "mapgo/nn.hpp"

#include <cmath>

namespace mapgo::nn {

Mlp::Mlp(std::vector<int> sizes, OutputActivation output) : sizes_(std::move(sizes)), output_(output) {
  layout();
}

Mlp::Mlp(std::vector<int> sizes, OutputActivation output, Rng& rng, double final_scale)
    : Mlp(std::move(sizes), output) {
  for (int l = 0; l < num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[static_cast<std::size_t>(l)]));
    const double scale = (l + 1 == num_layers()) ? final_scale : 1.0;
    std::uniform_real_distribution<double> uniform(-bound, bound);
    auto w = weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = scale * uniform(rng);
    auto b = bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = scale * uniform(rng);
  }
}

void Mlp::layout() {
  require(sizes_.size() >= 2, "mlp: need at least input and output sizes");
  for (int s : sizes_) require(s > 0, "mlp: layer sizes must be positive");
  offsets_.clear();
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = Vector::Zero(total);
}

Eigen::Map<Matrix> Mlp::weight(int layer) {
  const auto l = static_cast<std::size_t>(layer);
  return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
}

Eigen::Map<const Matrix> Mlp::weight(int layer) const {
  const auto l = static_cast<std::size_t>(layer);
  return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
}

Eigen::Map<Vector> Mlp::bias(int layer) {
  const auto l = static_cast<std::size_t>(layer);
  return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l], sizes_[l + 1]};
}

Eigen::Map<const Vector> Mlp::bias(int layer) const {
  const auto l = static_cast<std::size_t>(layer);
  return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l], sizes_[l + 1]};
}

Matrix Mlp::forward(const Matrix& input) const {
  require(input.rows() == input_dim(), "mlp forward: input dimension mismatch");
  Matrix h = input;
  for (int l = 0; l < num_layers(); ++l) {
    Matrix z = weight(l) * h;
    z.colwise() += bias(l);
    if (l + 1 < num_layers()) {
      h = z.cwiseMax(0.0);
    } else {
      h = output_ == OutputActivation::Tanh ? Matrix(z.array().tanh()) : std::move(z);
    }
  }
  return h;
}

Vector Mlp::forward(const Vector& input) const { return forward(Matrix(input)).col(0); }

Matrix Mlp::forward(const Matrix& input, Cache& cache) const {
  require(input.rows() == input_dim(), "mlp forward: input dimension mismatch");
  const auto layers = static_cast<std::size_t>(num_layers());
  cache.inputs.resize(layers);
  cache.pre.resize(layers);
  cache.inputs[0] = input;
  for (std::size_t l = 0; l < layers; ++l) {
    const int li = static_cast<int>(l);
    cache.pre[l].noalias() = weight(li) * cache.inputs[l];
    cache.pre[l].colwise() += bias(li);
    if (l + 1 < layers) {
      cache.inputs[l + 1] = cache.pre[l].cwiseMax(0.0);
    } else {
      cache.output = output_ == OutputActivation::Tanh ? Matrix(cache.pre[l].array().tanh()) : cache.pre[l];
    }
  }
  return cache.output;
}

void Mlp::backward(const Cache& cache, const Matrix& output_grad, Gradients* grads, Matrix* input_grad) const {
  const auto layers = static_cast<std::size_t>(num_layers());
  require(cache.pre.size() == layers && cache.inputs.size() == layers, "mlp backward: missing or stale cache");
  require(output_grad.rows() == cache.output.rows() && output_grad.cols() == cache.output.cols(),
          "mlp backward: output gradient shape mismatch");
  if (grads != nullptr && grads->flat.size() != params_.size()) grads->flat = Vector::Zero(params_.size());

  Matrix delta = output_grad;
  if (output_ == OutputActivation::Tanh) delta.array() *= 1.0 - cache.output.array().square();

  for (std::size_t l = layers; l-- > 0;) {
    const int li = static_cast<int>(l);
    if (grads != nullptr) {
      const auto out = static_cast<Eigen::Index>(sizes_[l + 1]);
      const auto in = static_cast<Eigen::Index>(sizes_[l]);
      Eigen::Map<Matrix> gw(grads->flat.data() + offsets_[l], out, in);
      Eigen::Map<Vector> gb(grads->flat.data() + offsets_[l] + out * in, out);
      gw.noalias() = delta * cache.inputs[l].transpose();
      gb = delta.rowwise().sum();
    }
    if (l == 0 && input_grad == nullptr) break;
    Matrix upstream = weight(li).transpose() * delta;
    if (l == 0) {
      *input_grad = std::move(upstream);
    } else {
      delta = (cache.pre[l - 1].array() > 0.0).select(upstream, 0.0);
    }
  }
}

Gradients Mlp::backward(const Cache& cache, const Matrix& output_grad) const {
  Gradients g = zero_gradients();
  backward(cache, output_grad, &g, nullptr);
  return g;
}

void adam_step(Vector& params, const Vector& grad, AdamState& s) {
  require(params.size() == grad.size() && params.size() == s.first_moment.size() &&
              params.size() == s.second_moment.size(),
          "adam: shape mismatch");
  ++s.step;
  s.first_moment = s.beta1 * s.first_moment + (1.0 - s.beta1) * grad;
  s.second_moment = s.beta2 * s.second_moment + (1.0 - s.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  params.array() -= s.learning_rate * (s.first_moment.array() / c1) /
                    ((s.second_moment.array() / c2).sqrt() + s.epsilon);
}

GradientCheckReport finite_difference_check(const Vector& params, const std::function<double(const Vector&)>& loss,
                                            const Vector& analytic, double tolerance, double step,
                                            double abs_floor) {
  require(params.size() == analytic.size(), "gradient check: shape mismatch");
  GradientCheckReport report;
  Vector probe = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + step;
    const double up = loss(probe);
    probe[i] = original - step;
    const double down = loss(probe);
    probe[i] = original;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), abs_floor});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = numeric;
    }
  }
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

GradientCheckReport finite_difference_check(const Mlp& net, const Matrix& input,
                                            const std::function<double(const Matrix&)>& loss,
                                            const std::function<Matrix(const Matrix&)>& loss_grad,
                                            double tolerance, double step) {
  Mlp::Cache cache;
  const Matrix out = net.forward(input, cache);
  const Gradients analytic = net.backward(cache, loss_grad(out));
  Mlp probe = net;
  auto objective = [&](const Vector& p) {
    probe.parameters() = p;
    return loss(probe.forward(input));
  };
  return finite_difference_check(net.parameters(), objective, analytic.flat, tolerance, step);
}

void polyak_update(Vector& dst, const Vector& src, double tau) {
  require(dst.size() == src.size(), "polyak update: shape mismatch");
  require(tau > 0.0 && tau <= 1.0, "polyak update: tau must lie in (0, 1]");
  if (tau == 1.0) {
    dst = src;
    return;
  }
  dst += tau * (src - dst);
}

}  // namespace mapgo::nn
