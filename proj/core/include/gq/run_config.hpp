// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gq/calib_model.hpp"
#include "gq/guidedquant.hpp"

namespace gq {

/// Run configuration, read from a JSON object. Recognised keys:
///
///   seeds            int or [int]        data/model/quantizer seeds
///   model_dims       [int]               d0, d1, ..., dL
///   n                int                 calibration samples
///   task             "squared_error" | "softmax_cross_entropy"
///   train_steps      int
///   lr               number
///   method           string or [string]  rtn | squeezellm | lnq_plain | lnq_guided
///   bits             int or [int]        1..8
///   groups           int or [int]        used by lnq_guided
///   T, K             int                 LNQ alternations / CD cycles
///   grad_scale       number
///   damping_rel      number
///   cd_engine        naive | closed_form | precompute | lazy_batch
///   lazy_batch_size  int
///   workers          int
///   paths            {data, model, hessian_cache, out}
///
/// Any other key is rejected.
struct RunConfig {
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::size_t> model_dims{8, 16, 16, 4};
  std::size_t n = 256;
  LossKind task = LossKind::SoftmaxCrossEntropy;
  std::size_t train_steps = 500;
  double lr = 0.05;
  std::vector<QuantMethod> methods{QuantMethod::LnqGuided};
  std::vector<std::size_t> bits{2};
  std::vector<std::size_t> groups{4};
  std::size_t T = 2;
  std::size_t K = 4;
  double grad_scale = 1e3;
  double damping_rel = 1e-7;
  CdEngine cd_engine = CdEngine::LazyBatch;
  std::size_t lazy_batch_size = 128;
  std::size_t workers = 1;

  struct Paths {
    std::string data;
    std::string model;
    std::string hessian_cache;
    std::string out;
  } paths;

  void validate() const;

  /// Jobs for one seed in method, bits, groups order. Methods other than
  /// lnq_guided ignore the group list and appear once per bit-width.
  std::vector<QuantJob> jobs(std::uint64_t seed) const;
};

RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace gq
