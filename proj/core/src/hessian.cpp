// SPDX-License-Identifier: Apache-2.0
#include "gq/hessian.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gq/error.hpp"

namespace gq {

namespace {

void check_calibration(const LayerCalibration& calib) {
  if (calib.X.rows() == 0 || calib.X.cols() == 0) fail(ErrorCode::EmptyCalibration, "calibration X is empty");
  if (calib.gradZ.rows() != calib.X.rows()) {
    fail(ErrorCode::DimensionMismatch, "X and gradZ disagree on sample count");
  }
}

void check_damping(double damping_rel) {
  if (!(damping_rel >= 0.0) || !std::isfinite(damping_rel)) {
    fail(ErrorCode::InvalidConfig, "damping_rel must be finite and >= 0");
  }
}

}  // namespace

ChannelPartition ChannelPartition::consecutive(std::size_t d_out, std::size_t g) {
  if (g == 0 || g > d_out) {
    fail(ErrorCode::PartitionMismatch,
         "group count " + std::to_string(g) + " must be in [1, " + std::to_string(d_out) + "]");
  }
  ChannelPartition p;
  p.d_out = d_out;
  const std::size_t base = d_out / g;
  const std::size_t extra = d_out % g;
  std::size_t next = 0;
  for (std::size_t k = 0; k < g; ++k) {
    const std::size_t size = base + (k < extra ? 1 : 0);
    std::vector<std::size_t> group(size);
    for (auto& c : group) c = next++;
    p.groups.push_back(std::move(group));
  }
  return p;
}

void ChannelPartition::validate() const {
  std::vector<bool> seen(d_out, false);
  std::size_t count = 0;
  for (const auto& group : groups) {
    if (group.empty()) fail(ErrorCode::PartitionMismatch, "empty channel group");
    for (std::size_t c : group) {
      if (c >= d_out || seen[c]) fail(ErrorCode::PartitionMismatch, "channel groups overlap or exceed d_out");
      seen[c] = true;
      ++count;
    }
  }
  if (count != d_out) fail(ErrorCode::PartitionMismatch, "channel groups do not cover d_out");
}

std::string_view to_string(HessianKind k) { return k == HessianKind::Plain ? "plain" : "guided"; }

HessianKind parse_hessian_kind(std::string_view s) {
  if (s == "plain") return HessianKind::Plain;
  if (s == "guided") return HessianKind::Guided;
  fail(ErrorCode::InvalidConfig, "unknown hessian kind '" + std::string(s) + "'");
}

Matrix HessianSet::undamped(std::size_t k) const { return add_diagonal(hessians.at(k), -dampings.at(k)); }

HessianSet plain_hessian(const LayerCalibration& calib, double damping_rel, std::size_t layer_idx) {
  check_calibration(calib);
  check_damping(damping_rel);
  Matrix H = weighted_gram(calib.X);
  const double lambda = damping_rel * mean_diagonal(H);
  HessianSet set;
  set.layer_idx = layer_idx;
  set.partition = ChannelPartition::consecutive(std::max<std::size_t>(calib.gradZ.cols(), 1), 1);
  set.hessians.push_back(add_diagonal(H, lambda));
  set.dampings.push_back(lambda);
  set.grad_scale = 1.0;
  set.damping_rel = damping_rel;
  set.kind = HessianKind::Plain;
  return set;
}

SquaredGradAverages squared_grad_averages(const LayerCalibration& calib, const ChannelPartition& partition,
                                          double grad_scale) {
  partition.validate();
  if (partition.d_out != calib.gradZ.cols()) {
    fail(ErrorCode::PartitionMismatch, "partition covers " + std::to_string(partition.d_out) +
                                           " channels, gradZ has " + std::to_string(calib.gradZ.cols()));
  }
  const std::size_t n = calib.gradZ.rows();
  Matrix s(n, partition.g());
  for (std::size_t k = 0; k < partition.g(); ++k) {
    const auto& group = partition.groups[k];
    const double inv = 1.0 / static_cast<double>(group.size());
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j : group) {
        const double v = grad_scale * calib.gradZ(i, j);
        acc += v * v;
      }
      s(i, k) = acc * inv;
    }
  }
  return {std::move(s)};
}

HessianSet guided_hessians(const LayerCalibration& calib, const ChannelPartition& partition, double grad_scale,
                           double damping_rel, std::size_t layer_idx) {
  check_calibration(calib);
  check_damping(damping_rel);
  if (!(grad_scale > 0.0) || !std::isfinite(grad_scale)) fail(ErrorCode::InvalidConfig, "grad_scale must be finite and > 0");
  const SquaredGradAverages avg = squared_grad_averages(calib, partition, grad_scale);
  HessianSet set;
  set.layer_idx = layer_idx;
  set.partition = partition;
  set.grad_scale = grad_scale;
  set.damping_rel = damping_rel;
  set.kind = HessianKind::Guided;
  for (std::size_t k = 0; k < partition.g(); ++k) {
    const Vector s_k = avg.s.col(k);
    Matrix H = weighted_gram(calib.X, s_k);
    const double lambda = damping_rel * mean_diagonal(H);
    set.hessians.push_back(add_diagonal(H, lambda));
    set.dampings.push_back(lambda);
  }
  return set;
}

Matrix fisher_block_oracle(const LayerCalibration& calib, std::size_t j, std::size_t n) {
  check_calibration(calib);
  if (j >= calib.gradZ.cols()) fail(ErrorCode::DimensionMismatch, "channel index out of range");
  if (n == 0) fail(ErrorCode::InvalidSize, "n must be positive");
  const std::size_t d = calib.X.cols();
  Matrix F(d, d);
  Vector g(d);
  for (std::size_t i = 0; i < calib.X.rows(); ++i) {
    const double gz = calib.gradZ(i, j);
    for (std::size_t a = 0; a < d; ++a) g[a] = gz * calib.X(i, a);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) F(a, b) += g[a] * g[b];
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : F.data()) v *= inv;
  return F;
}

Matrix diag_fisher(const LayerCalibration& calib) {
  check_calibration(calib);
  const std::size_t n = calib.X.rows();
  Matrix F(calib.X.cols(), calib.gradZ.cols());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < F.rows(); ++i) {
      const double x = calib.X(s, i);
      for (std::size_t j = 0; j < F.cols(); ++j) {
        const double g = calib.gradZ(s, j) * x;
        F(i, j) += g * g;
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : F.data()) v *= inv;
  return F;
}

}  // namespace gq
