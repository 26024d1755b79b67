// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "gq/linalg.hpp"

namespace gq {

enum class Activation { Tanh };
enum class LossKind { SquaredError, SoftmaxCrossEntropy };

std::string_view to_string(Activation a);
std::string_view to_string(LossKind l);
LossKind parse_loss(std::string_view s);
Activation parse_activation(std::string_view s);

/// Bias-free MLP. layers[l] is d_in x d_out so Z = X * W; tanh sits between
/// layers and nothing follows the last one.
struct MlpModel {
  std::vector<Matrix> layers;
  Activation activation = Activation::Tanh;
  LossKind loss = LossKind::SquaredError;

  /// dims = {d0, d1, ..., dL}; weights ~ N(0, 1/d_in).
  static MlpModel random(const std::vector<std::size_t>& dims, LossKind loss, std::uint64_t seed);

  std::vector<std::size_t> dims() const;
  void validate() const;

  bool operator==(const MlpModel&) const = default;
};

struct Dataset {
  Matrix inputs;
  Matrix targets;
  std::uint64_t seed = 0;
};

/// Inputs and d_out-gradients for one linear layer over the calibration set.
/// gradZ is the gradient of the summed loss, so row i only involves sample i.
struct LayerCalibration {
  Matrix X;
  Matrix gradZ;
};

/// Inputs are i.i.d. N(0, 1) from Rng(seed). Targets come from a hidden
/// teacher MLP d0 -> 16 -> dt (tanh) with weights drawn from the same stream:
/// raw teacher outputs for squared error, one-hot argmax for cross entropy.
Dataset gen_dataset(std::uint64_t seed, std::size_t n, std::size_t d0, std::size_t dt, LossKind task);

struct TrainResult {
  MlpModel model;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double final_grad_norm = 0.0;
  std::size_t best_step = 0;
};

/// Full-batch gradient descent on the mean loss. Returns the iterate with the
/// lowest summed loss seen, so final_loss <= initial_loss always holds.
TrainResult train(const MlpModel& model, const Dataset& data, std::size_t steps, double lr);

/// One forward and one backward pass capturing every layer's input and
/// output gradient.
std::vector<LayerCalibration> calibrate(const MlpModel& model, const Dataset& data);

/// Sum over samples of the per-sample loss.
double end_loss(const MlpModel& model, const Dataset& data);

/// Per-sample losses in sample order.
Vector sample_losses(const MlpModel& model, const Dataset& data);

/// Gradient of end_loss w.r.t. every layer's weights (X^T gradZ per layer).
std::vector<Matrix> weight_gradients(const MlpModel& model, const Dataset& data);

/// Network output Z of the final layer.
Matrix forward(const MlpModel& model, const Matrix& inputs);

}  // namespace gq
