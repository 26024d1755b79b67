// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "gq/calib_model.hpp"
#include "gq/linalg.hpp"

namespace gq {

/// Disjoint groups of output channels covering 0..d_out-1.
struct ChannelPartition {
  std::size_t d_out = 0;
  std::vector<std::vector<std::size_t>> groups;

  std::size_t g() const noexcept { return groups.size(); }

  /// Consecutive blocks. When g does not divide d_out the first d_out % g
  /// groups get one extra channel.
  static ChannelPartition consecutive(std::size_t d_out, std::size_t g);

  /// Throws PartitionMismatch unless groups are disjoint, non-empty and cover 0..d_out-1.
  void validate() const;

  bool operator==(const ChannelPartition&) const = default;
};

enum class HessianKind { Plain, Guided };
std::string_view to_string(HessianKind k);
HessianKind parse_hessian_kind(std::string_view s);

/// Damped per-group Hessians of one layer. hessians[k] already includes
/// dampings[k] on its diagonal.
struct HessianSet {
  std::size_t layer_idx = 0;
  ChannelPartition partition;
  std::vector<Matrix> hessians;
  std::vector<double> dampings;
  double grad_scale = 1.0;
  double damping_rel = 0.0;
  HessianKind kind = HessianKind::Plain;

  /// hessians[k] with its damping removed.
  Matrix undamped(std::size_t k) const;
};

/// Column k holds (1/|J_k|) sum_{j in J_k} (grad_scale * gradZ[:, j])^2.
struct SquaredGradAverages {
  Matrix s;
};

/// H = X^T X + lambda I with lambda = damping_rel * mean(diag(X^T X)).
HessianSet plain_hessian(const LayerCalibration& calib, double damping_rel, std::size_t layer_idx = 0);

SquaredGradAverages squared_grad_averages(const LayerCalibration& calib, const ChannelPartition& partition,
                                          double grad_scale);

/// Hbar_k = X^T Diag(s_k) X + lambda_k I, lambda_k = damping_rel * mean(diag(X^T Diag(s_k) X)).
HessianSet guided_hessians(const LayerCalibration& calib, const ChannelPartition& partition, double grad_scale,
                           double damping_rel, std::size_t layer_idx = 0);

/// Explicit Fisher block of output channel j, (1/n) sum_i g_i g_i^T with
/// g_i = gradZ[i, j] * X[i, :]^T, built from per-sample outer products.
Matrix fisher_block_oracle(const LayerCalibration& calib, std::size_t j, std::size_t n);

/// Per-weight diagonal Fisher, F[i, j] = (1/n) sum_s (gradZ[s, j] * X[s, i])^2.
Matrix diag_fisher(const LayerCalibration& calib);

}  // namespace gq
