// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "gq/calib_model.hpp"
#include "gq/hessian.hpp"
#include "gq/lnq.hpp"
#include "gq/scalar_quant.hpp"

namespace gq {

enum class QuantMethod { Rtn, SqueezeLlm, LnqPlain, LnqGuided };
std::string_view to_string(QuantMethod m);
QuantMethod parse_method(std::string_view s);

struct QuantJob {
  QuantMethod method = QuantMethod::LnqGuided;
  std::size_t bits = 2;
  /// Requested group count; plain-Hessian methods always use 1 and each
  /// layer clamps it to its d_out.
  std::size_t groups = 4;
  LnqConfig lnq;
  double grad_scale = 1e3;
  double damping_rel = 1e-7;
  std::uint64_t seed = 0;
  /// Worker threads for (layer, group) tasks. Does not affect results.
  std::size_t workers = 1;

  bool uses_lnq() const { return method == QuantMethod::LnqPlain || method == QuantMethod::LnqGuided; }
  std::size_t groups_for(std::size_t d_out) const;
  void validate() const;
};

struct LayerObjectives {
  double plain = 0.0;            ///< ||X W - X What||_F^2
  double guided = 0.0;           ///< ||gradZ (.) (X W - X What)||_F^2
  double quadratic_proxy = 0.0;  ///< sum_j dw_j^T X^T Diag(gradZ_j^2) X dw_j
};

struct LayerReport {
  std::size_t layer = 0;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t groups = 1;
  LayerObjectives objectives;
  /// Quantizer objective under the Hessians the job used (damped).
  double damped_objective = 0.0;
  /// Per-channel LNQ objective traces; empty for non-LNQ methods.
  std::vector<std::vector<double>> traces;
};

struct PhaseTimes {
  double calibrate_s = 0.0;
  double hessian_s = 0.0;
  double quantize_s = 0.0;
  double eval_s = 0.0;
};

struct QuantReport {
  QuantMethod method = QuantMethod::Rtn;
  std::size_t bits = 0;
  std::size_t groups = 1;
  std::uint64_t seed = 0;
  std::vector<LayerReport> layers;
  double end_loss_before = 0.0;
  double end_loss_after = 0.0;
  double quadratic_proxy_total = 0.0;
  PhaseTimes times;  ///< wall-clock only; never written to artifact files
};

struct JobResult {
  MlpModel quantized;
  std::vector<QuantizedLayer> layers;
  QuantReport report;
};

/// Hessians for every layer as the job needs them (plain with g=1, or guided).
std::vector<HessianSet> build_hessians(const QuantJob& job, const std::vector<LayerCalibration>& calib);

/// Quantizes every layer independently from the original model's calibration
/// data. Pass `calib` / `hessians` to reuse cached ones.
JobResult run_job(const MlpModel& model, const Dataset& data, const QuantJob& job,
                  const std::vector<LayerCalibration>* calib = nullptr,
                  const std::vector<HessianSet>* hessians = nullptr);

/// Layer proxies computed directly from X, gradZ, W and What (no Hessians).
LayerObjectives eval_layer_objectives(const Matrix& W, const Matrix& W_hat, const LayerCalibration& calib);

std::vector<LayerObjectives> eval_objectives(const MlpModel& model, const MlpModel& quantized,
                                             const std::vector<LayerCalibration>& calib);

struct SweepRow {
  QuantMethod method = QuantMethod::Rtn;
  std::size_t bits = 0;
  std::size_t groups = 1;
  std::uint64_t seed = 0;
  double end_loss_before = 0.0;
  double end_loss_after = 0.0;
  double plain_objective = 0.0;
  double guided_objective = 0.0;
  double quadratic_proxy = 0.0;
  double damped_objective = 0.0;
};

SweepRow summarize(const QuantReport& report);

/// Runs the jobs in order against one model and dataset; rows keep job order.
std::vector<SweepRow> sweep(const MlpModel& model, const Dataset& data, const std::vector<QuantJob>& jobs);

/// Column order: method,bits,groups,seed,end_loss_before,end_loss_after,
/// plain_objective,guided_objective,quadratic_proxy,damped_objective
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

/// Column order: scope,layer,d_in,d_out,groups,plain_objective,guided_objective,
/// quadratic_proxy,damped_objective,end_loss_before,end_loss_after.
/// One "layer" row per layer, then one "model" row.
void write_report_csv(std::ostream& os, const QuantReport& report);

/// Human-readable table for stdout.
void print_report(std::ostream& os, const QuantReport& report);

/// Shortest round-trippable decimal text for a double.
std::string format_double(double v);

}  // namespace gq
