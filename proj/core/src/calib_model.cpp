// SPDX-License-Identifier: Apache-2.0
#include "gq/calib_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gq/error.hpp"
#include "gq/random.hpp"

namespace gq {

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string_view to_string(Activation) { return "tanh"; }

std::string_view to_string(LossKind l) {
  return l == LossKind::SquaredError ? "squared_error" : "softmax_cross_entropy";
}

LossKind parse_loss(std::string_view s) {
  if (s == "squared_error") return LossKind::SquaredError;
  if (s == "softmax_cross_entropy") return LossKind::SoftmaxCrossEntropy;
  fail(ErrorCode::InvalidConfig, "unknown loss tag '" + std::string(s) + "'");
}

Activation parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::Tanh;
  fail(ErrorCode::InvalidConfig, "unknown activation tag '" + std::string(s) + "'");
}

namespace {

Matrix random_weights(std::size_t d_in, std::size_t d_out, Rng& rng) {
  Matrix W(d_in, d_out);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_in));
  for (double& v : W.data()) v = scale * rng.normal();
  return W;
}

void apply_tanh(Matrix& Z) {
  for (double& v : Z.data()) v = std::tanh(v);
}

struct ForwardTrace {
  std::vector<Matrix> inputs;  // inputs[l] = X entering layer l
  Matrix output;               // Z of the last layer
};

ForwardTrace run_forward(const MlpModel& model, const Matrix& inputs) {
  model.validate();
  if (inputs.cols() != model.layers.front().rows()) {
    fail(ErrorCode::DimensionMismatch, "input width " + std::to_string(inputs.cols()) +
                                           " != first layer d_in " +
                                           std::to_string(model.layers.front().rows()));
  }
  ForwardTrace t;
  t.inputs.reserve(model.layers.size());
  Matrix a = inputs;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Matrix z = matmul(a, model.layers[l]);
    t.inputs.push_back(std::move(a));
    if (l + 1 < model.layers.size()) {
      apply_tanh(z);
      a = std::move(z);
    } else {
      t.output = std::move(z);
    }
  }
  return t;
}

void check_targets(const Matrix& Z, const Matrix& Y) {
  if (Z.rows() != Y.rows() || Z.cols() != Y.cols()) {
    fail(ErrorCode::DimensionMismatch, "targets shape does not match model output");
  }
}

double sample_loss(LossKind kind, std::span<const double> z, std::span<const double> y) {
  double loss = 0.0;
  if (kind == LossKind::SquaredError) {
    for (std::size_t k = 0; k < z.size(); ++k) loss += (z[k] - y[k]) * (z[k] - y[k]);
    return loss;
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum_exp = 0.0;
  for (double v : z) sum_exp += std::exp(v - zmax);
  const double lse = zmax + std::log(sum_exp);
  double ysum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    loss -= y[k] * z[k];
    ysum += y[k];
  }
  return loss + ysum * lse;
}

void sample_loss_grad(LossKind kind, std::span<const double> z, std::span<const double> y,
                      std::span<double> g) {
  if (kind == LossKind::SquaredError) {
    for (std::size_t k = 0; k < z.size(); ++k) g[k] = 2.0 * (z[k] - y[k]);
    return;
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum_exp = 0.0;
  for (double v : z) sum_exp += std::exp(v - zmax);
  double ysum = 0.0;
  for (double v : y) ysum += v;
  for (std::size_t k = 0; k < z.size(); ++k) g[k] = ysum * std::exp(z[k] - zmax) / sum_exp - y[k];
}

// Backward pass returning dL/dZ for every layer.
std::vector<Matrix> run_backward(const MlpModel& model, const ForwardTrace& t, const Matrix& Y) {
  check_targets(t.output, Y);
  const std::size_t L = model.layers.size();
  std::vector<Matrix> gradZ(L);
  Matrix g(t.output.rows(), t.output.cols());
  for (std::size_t i = 0; i < g.rows(); ++i) sample_loss_grad(model.loss, t.output.row(i), Y.row(i), g.row(i));
  gradZ[L - 1] = std::move(g);
  for (std::size_t l = L - 1; l > 0; --l) {
    // dL/dA_l = gradZ_l W_l^T, then through tanh: A_l = tanh(Z_{l-1}).
    const Matrix& W = model.layers[l];
    const Matrix& A = t.inputs[l];
    Matrix gz(A.rows(), A.cols());
    for (std::size_t i = 0; i < A.rows(); ++i) {
      auto gout = gradZ[l].row(i);
      for (std::size_t r = 0; r < W.rows(); ++r) {
        const double ga = dot(W.row(r), gout);
        const double a = A(i, r);
        gz(i, r) = ga * (1.0 - a * a);
      }
    }
    gradZ[l - 1] = std::move(gz);
  }
  return gradZ;
}

}  // namespace

MlpModel MlpModel::random(const std::vector<std::size_t>& dims, LossKind loss, std::uint64_t seed) {
  if (dims.size() < 2) fail(ErrorCode::InvalidSize, "model needs at least one layer");
  for (std::size_t d : dims) {
    if (d == 0) fail(ErrorCode::InvalidSize, "layer dimension must be positive");
  }
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  MlpModel m;
  m.loss = loss;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) m.layers.push_back(random_weights(dims[l], dims[l + 1], rng));
  return m;
}

std::vector<std::size_t> MlpModel::dims() const {
  std::vector<std::size_t> d;
  if (layers.empty()) return d;
  d.push_back(layers.front().rows());
  for (const auto& W : layers) d.push_back(W.cols());
  return d;
}

void MlpModel::validate() const {
  if (layers.empty()) fail(ErrorCode::InvalidSize, "model has no layers");
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    if (layers[l].cols() != layers[l + 1].rows()) {
      fail(ErrorCode::DimensionMismatch, "layer " + std::to_string(l) + " d_out does not chain into layer " +
                                             std::to_string(l + 1));
    }
  }
}

Dataset gen_dataset(std::uint64_t seed, std::size_t n, std::size_t d0, std::size_t dt, LossKind task) {
  if (n == 0 || d0 == 0 || dt == 0) fail(ErrorCode::InvalidSize, "dataset dimensions must be positive");
  Rng rng(seed);
  Matrix inputs(n, d0);
  for (double& v : inputs.data()) v = rng.normal();

  constexpr std::size_t kTeacherHidden = 16;
  MlpModel teacher;
  teacher.loss = task;
  teacher.layers.push_back(random_weights(d0, kTeacherHidden, rng));
  teacher.layers.push_back(random_weights(kTeacherHidden, dt, rng));
  Matrix out = forward(teacher, inputs);

  Matrix targets(n, dt);
  if (task == LossKind::SquaredError) {
    targets = std::move(out);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      auto r = out.row(i);
      const auto best = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
      targets(i, best) = 1.0;
    }
  }
  return {std::move(inputs), std::move(targets), seed};
}

Matrix forward(const MlpModel& model, const Matrix& inputs) { return run_forward(model, inputs).output; }

Vector sample_losses(const MlpModel& model, const Dataset& data) {
  const ForwardTrace t = run_forward(model, data.inputs);
  check_targets(t.output, data.targets);
  Vector out(t.output.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sample_loss(model.loss, t.output.row(i), data.targets.row(i));
  return out;
}

double end_loss(const MlpModel& model, const Dataset& data) {
  double total = 0.0;
  for (double v : sample_losses(model, data)) total += v;
  return total;
}

std::vector<LayerCalibration> calibrate(const MlpModel& model, const Dataset& data) {
  ForwardTrace t = run_forward(model, data.inputs);
  std::vector<Matrix> gradZ = run_backward(model, t, data.targets);
  std::vector<LayerCalibration> out;
  out.reserve(gradZ.size());
  for (std::size_t l = 0; l < gradZ.size(); ++l) out.push_back({std::move(t.inputs[l]), std::move(gradZ[l])});
  return out;
}

std::vector<Matrix> weight_gradients(const MlpModel& model, const Dataset& data) {
  std::vector<Matrix> grads;
  for (const auto& c : calibrate(model, data)) grads.push_back(matmul(transpose(c.X), c.gradZ));
  return grads;
}

TrainResult train(const MlpModel& model, const Dataset& data, std::size_t steps, double lr) {
  TrainResult r;
  r.model = model;
  MlpModel current = model;
  const double inv_n = 1.0 / static_cast<double>(data.inputs.rows());
  double best = 0.0;

  for (std::size_t step = 0; step <= steps; ++step) {
    ForwardTrace t = run_forward(current, data.inputs);
    check_targets(t.output, data.targets);
    double loss = 0.0;
    for (std::size_t i = 0; i < t.output.rows(); ++i) loss += sample_loss(current.loss, t.output.row(i), data.targets.row(i));
    if (!std::isfinite(loss)) {
      fail(ErrorCode::DivergedLoss, "loss became non-finite at step " + std::to_string(step));
    }
    std::vector<Matrix> gradZ = run_backward(current, t, data.targets);
    double gnorm2 = 0.0;
    std::vector<Matrix> grads;
    grads.reserve(gradZ.size());
    for (std::size_t l = 0; l < gradZ.size(); ++l) {
      grads.push_back(matmul(transpose(t.inputs[l]), gradZ[l]));
      for (double v : grads.back().data()) gnorm2 += v * v;
    }
    if (!std::isfinite(gnorm2)) {
      fail(ErrorCode::DivergedLoss, "gradient became non-finite at step " + std::to_string(step));
    }
    if (step == 0) {
      r.initial_loss = loss;
      best = loss;
      r.final_grad_norm = std::sqrt(gnorm2);
    } else if (loss < best) {
      best = loss;
      r.model = current;
      r.best_step = step;
      r.final_grad_norm = std::sqrt(gnorm2);
    }
    if (step == steps) break;
    for (std::size_t l = 0; l < grads.size(); ++l) {
      auto w = current.layers[l].data();
      auto g = grads[l].data();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * inv_n * g[i];
    }
  }
  r.final_loss = best;
  return r;
}

}  // namespace gq
