// SPDX-License-Identifier: Apache-2.0
#pragma once

// Artifact directories. Each holds tensor files plus a manifest.json that
// lists every file with its SHA-256 and carries the artifact's metadata.
//
//   dataset      inputs.gqt, targets.gqt
//   model        layer.<l>.weight.gqt            (meta: activation, loss)
//   calibration  X.L<l>.gqt, gradZ.L<l>.gqt      (meta: model hash, dataset seed)
//   hessians     hess.L<l>.G<k>.gqt              (meta: cache key, partitions, dampings)
//   quantized    codebook.L<l>.gqt (d_out x m, f64), assign.L<l>.gqt (d_in x d_out, u8),
//                layer.<l>.weight.gqt (dequantized), report.csv, traces.json

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gq/calib_model.hpp"
#include "gq/guidedquant.hpp"
#include "gq/hessian.hpp"

namespace gq {

namespace fs = std::filesystem;

void save_dataset(const fs::path& dir, const Dataset& data, LossKind task);
Dataset load_dataset(const fs::path& dir, LossKind* task = nullptr);

void save_model(const fs::path& dir, const MlpModel& model);
MlpModel load_model(const fs::path& dir);

/// SHA-256 over the encoded weight tensors and the activation/loss tags.
std::string model_hash(const MlpModel& model);

struct CalibrationArtifact {
  std::vector<LayerCalibration> layers;
  std::string model_hash;
  std::uint64_t dataset_seed = 0;
};

void save_calibration(const fs::path& dir, const CalibrationArtifact& calib);
CalibrationArtifact load_calibration(const fs::path& dir);

struct HessianCacheKey {
  std::string model_hash;
  std::uint64_t dataset_seed = 0;
  HessianKind kind = HessianKind::Plain;
  std::size_t groups = 1;
  double grad_scale = 1.0;
  double damping_rel = 0.0;

  bool operator==(const HessianCacheKey&) const = default;
};

HessianCacheKey cache_key_for(const QuantJob& job, const std::string& model_hash, std::uint64_t dataset_seed);

void save_hessians(const fs::path& dir, const std::vector<HessianSet>& sets, const HessianCacheKey& key);
/// Empty when the directory's key differs from `expected`.
std::optional<std::vector<HessianSet>> load_hessians(const fs::path& dir, const HessianCacheKey& expected);
HessianCacheKey read_hessian_key(const fs::path& dir);

void save_quantized(const fs::path& dir, const QuantJob& job, const JobResult& result, const std::string& model_hash,
                    std::uint64_t dataset_seed);
/// Dequantized model stored alongside the codebooks.
MlpModel load_quantized_model(const fs::path& dir);

}  // namespace gq
