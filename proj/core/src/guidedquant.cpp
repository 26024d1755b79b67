// SPDX-License-Identifier: Apache-2.0
#include "gq/guidedquant.hpp"

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <ostream>

#include "gq/error.hpp"
#include "gq/parallel.hpp"

namespace gq {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Matrix column_slice(const Matrix& W, const std::vector<std::size_t>& cols) {
  Matrix S(W.rows(), cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (std::size_t r = 0; r < W.rows(); ++r) S(r, c) = W(r, cols[c]);
  return S;
}

std::string with_context(std::size_t layer, std::size_t group, const char* what) {
  return "layer " + std::to_string(layer) + ", group " + std::to_string(group) + ": " + what;
}

}  // namespace

std::string_view to_string(QuantMethod m) {
  switch (m) {
    case QuantMethod::Rtn: return "rtn";
    case QuantMethod::SqueezeLlm: return "squeezellm";
    case QuantMethod::LnqPlain: return "lnq_plain";
    case QuantMethod::LnqGuided: return "lnq_guided";
  }
  return "unknown";
}

QuantMethod parse_method(std::string_view s) {
  if (s == "rtn") return QuantMethod::Rtn;
  if (s == "squeezellm") return QuantMethod::SqueezeLlm;
  if (s == "lnq_plain") return QuantMethod::LnqPlain;
  if (s == "lnq_guided") return QuantMethod::LnqGuided;
  fail(ErrorCode::InvalidConfig, "unknown method '" + std::string(s) + "'");
}

std::size_t QuantJob::groups_for(std::size_t d_out) const {
  if (method != QuantMethod::LnqGuided) return 1;
  return std::min(groups, d_out);
}

void QuantJob::validate() const {
  codebook_size_for_bits(bits);
  if (groups < 1) fail(ErrorCode::InvalidConfig, "groups must be >= 1");
  if (!(grad_scale > 0.0)) fail(ErrorCode::InvalidConfig, "grad_scale must be > 0");
  if (!(damping_rel >= 0.0)) fail(ErrorCode::InvalidConfig, "damping_rel must be >= 0");
  if (uses_lnq()) {
    lnq.validate();
    if (lnq.bits != bits) fail(ErrorCode::InvalidConfig, "lnq.bits must equal job bits");
  }
}

std::vector<HessianSet> build_hessians(const QuantJob& job, const std::vector<LayerCalibration>& calib) {
  std::vector<HessianSet> out(calib.size());
  parallel_for(calib.size(), job.workers, [&](std::size_t l) {
    if (job.method == QuantMethod::LnqGuided) {
      const auto part = ChannelPartition::consecutive(calib[l].gradZ.cols(), job.groups_for(calib[l].gradZ.cols()));
      out[l] = guided_hessians(calib[l], part, job.grad_scale, job.damping_rel, l);
    } else {
      out[l] = plain_hessian(calib[l], job.damping_rel, l);
    }
  });
  return out;
}

LayerObjectives eval_layer_objectives(const Matrix& W, const Matrix& W_hat, const LayerCalibration& calib) {
  if (W.rows() != W_hat.rows() || W.cols() != W_hat.cols()) {
    fail(ErrorCode::DimensionMismatch, "W and W_hat shapes differ");
  }
  if (calib.X.cols() != W.rows() || calib.gradZ.cols() != W.cols() || calib.X.rows() != calib.gradZ.rows()) {
    fail(ErrorCode::DimensionMismatch, "calibration does not match layer shape");
  }
  const Matrix dW = subtract(W, W_hat);
  const Matrix dZ = matmul(calib.X, dW);
  LayerObjectives o;
  for (std::size_t i = 0; i < dZ.rows(); ++i) {
    for (std::size_t j = 0; j < dZ.cols(); ++j) {
      const double e = dZ(i, j);
      const double ge = calib.gradZ(i, j) * e;
      o.plain += e * e;
      o.guided += ge * ge;
    }
  }
  // Per-channel quadratic form with the explicit channel Hessian.
  Vector g2(calib.X.rows());
  for (std::size_t j = 0; j < W.cols(); ++j) {
    for (std::size_t i = 0; i < g2.size(); ++i) g2[i] = calib.gradZ(i, j) * calib.gradZ(i, j);
    o.quadratic_proxy += quad_form(weighted_gram(calib.X, g2), dW.col(j));
  }
  return o;
}

std::vector<LayerObjectives> eval_objectives(const MlpModel& model, const MlpModel& quantized,
                                             const std::vector<LayerCalibration>& calib) {
  if (model.layers.size() != quantized.layers.size() || model.layers.size() != calib.size()) {
    fail(ErrorCode::DimensionMismatch, "layer counts differ");
  }
  std::vector<LayerObjectives> out;
  for (std::size_t l = 0; l < calib.size(); ++l) {
    out.push_back(eval_layer_objectives(model.layers[l], quantized.layers[l], calib[l]));
  }
  return out;
}

JobResult run_job(const MlpModel& model, const Dataset& data, const QuantJob& job,
                  const std::vector<LayerCalibration>* calib_in, const std::vector<HessianSet>* hessians_in) {
  job.validate();
  model.validate();
  JobResult result;
  QuantReport& rep = result.report;
  rep.method = job.method;
  rep.bits = job.bits;
  rep.groups = job.method == QuantMethod::LnqGuided ? job.groups : 1;
  rep.seed = job.seed;

  auto t0 = Clock::now();
  std::vector<LayerCalibration> own_calib;
  if (!calib_in) own_calib = calibrate(model, data);
  const std::vector<LayerCalibration>& calib = calib_in ? *calib_in : own_calib;
  if (calib.size() != model.layers.size()) fail(ErrorCode::DimensionMismatch, "calibration layer count");
  rep.times.calibrate_s = seconds_since(t0);

  t0 = Clock::now();
  std::vector<HessianSet> own_hess;
  if (!hessians_in) own_hess = build_hessians(job, calib);
  const std::vector<HessianSet>& hess = hessians_in ? *hessians_in : own_hess;
  if (hess.size() != model.layers.size()) fail(ErrorCode::DimensionMismatch, "hessian layer count");
  rep.times.hessian_s = seconds_since(t0);

  t0 = Clock::now();
  const std::size_t L = model.layers.size();
  result.layers.resize(L);
  // Per-layer initial states (squeezellm also serves as the LNQ initializer).
  parallel_for(L, job.workers, [&](std::size_t l) {
    const Matrix& W = model.layers[l];
    if (hess[l].partition.d_out != W.cols()) {
      fail(ErrorCode::PartitionMismatch, with_context(l, 0, "hessian partition does not match d_out"));
    }
    if (job.method == QuantMethod::Rtn) {
      result.layers[l] = rtn_quantize(W, job.bits, l);
    } else {
      result.layers[l] = squeezellm_quantize(W, diag_fisher(calib[l]), job.bits, job.seed, l);
    }
  });

  if (job.uses_lnq()) {
    struct Task {
      std::size_t layer;
      std::size_t group;
    };
    std::vector<Task> tasks;
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t k = 0; k < hess[l].partition.g(); ++k) tasks.push_back({l, k});
    parallel_for(tasks.size(), job.workers, [&](std::size_t t) {
      const auto [l, k] = tasks[t];
      const auto& cols = hess[l].partition.groups[k];
      const Matrix W_block = column_slice(model.layers[l], cols);
      std::vector<ChannelQuantState> init;
      init.reserve(cols.size());
      for (std::size_t c : cols) init.push_back(result.layers[l].channels[c]);
      try {
        auto states = lnq_quantize(hess[l].hessians[k], W_block, job.lnq, std::move(init));
        // Each column belongs to exactly one group, so tasks write disjoint slots.
        for (std::size_t c = 0; c < cols.size(); ++c) result.layers[l].channels[cols[c]] = std::move(states[c]);
      } catch (const Error& e) {
        throw Error(e.code(), with_context(l, k, e.what()));
      }
    });
  }
  rep.times.quantize_s = seconds_since(t0);

  t0 = Clock::now();
  result.quantized = model;
  for (std::size_t l = 0; l < L; ++l) result.quantized.layers[l] = result.layers[l].weights();
  const auto objectives = eval_objectives(model, result.quantized, calib);
  rep.end_loss_before = end_loss(model, data);
  rep.end_loss_after = end_loss(result.quantized, data);
  for (std::size_t l = 0; l < L; ++l) {
    LayerReport lr;
    lr.layer = l;
    lr.d_in = model.layers[l].rows();
    lr.d_out = model.layers[l].cols();
    lr.groups = hess[l].partition.g();
    lr.objectives = objectives[l];
    for (std::size_t k = 0; k < hess[l].partition.g(); ++k) {
      for (std::size_t c : hess[l].partition.groups[k]) {
        lr.damped_objective +=
            channel_objective(hess[l].hessians[k], model.layers[l].col(c), result.layers[l].channels[c].w_hat);
      }
    }
    for (const auto& ch : result.layers[l].channels) {
      if (!ch.objective_trace.empty()) lr.traces.push_back(ch.objective_trace);
    }
    rep.quadratic_proxy_total += lr.objectives.quadratic_proxy;
    rep.layers.push_back(std::move(lr));
  }
  rep.times.eval_s = seconds_since(t0);
  return result;
}

SweepRow summarize(const QuantReport& report) {
  SweepRow row;
  row.method = report.method;
  row.bits = report.bits;
  row.groups = report.groups;
  row.seed = report.seed;
  row.end_loss_before = report.end_loss_before;
  row.end_loss_after = report.end_loss_after;
  for (const auto& l : report.layers) {
    row.plain_objective += l.objectives.plain;
    row.guided_objective += l.objectives.guided;
    row.damped_objective += l.damped_objective;
  }
  row.quadratic_proxy = report.quadratic_proxy_total;
  return row;
}

std::vector<SweepRow> sweep(const MlpModel& model, const Dataset& data, const std::vector<QuantJob>& jobs) {
  std::vector<SweepRow> rows;
  if (jobs.empty()) return rows;
  const auto calib = calibrate(model, data);
  for (const auto& job : jobs) rows.push_back(summarize(run_job(model, data, job, &calib).report));
  return rows;
}

std::string format_double(double v) {
  char buf[64];
  // %.17g always round-trips; the output is fixed for a given value.
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "method,bits,groups,seed,end_loss_before,end_loss_after,plain_objective,guided_objective,"
        "quadratic_proxy,damped_objective\n";
  for (const auto& r : rows) {
    os << to_string(r.method) << ',' << r.bits << ',' << r.groups << ',' << r.seed << ','
       << format_double(r.end_loss_before) << ',' << format_double(r.end_loss_after) << ','
       << format_double(r.plain_objective) << ',' << format_double(r.guided_objective) << ','
       << format_double(r.quadratic_proxy) << ',' << format_double(r.damped_objective) << '\n';
  }
}

void write_report_csv(std::ostream& os, const QuantReport& report) {
  os << "scope,layer,d_in,d_out,groups,plain_objective,guided_objective,quadratic_proxy,damped_objective,"
        "end_loss_before,end_loss_after\n";
  for (const auto& l : report.layers) {
    os << "layer," << l.layer << ',' << l.d_in << ',' << l.d_out << ',' << l.groups << ','
       << format_double(l.objectives.plain) << ',' << format_double(l.objectives.guided) << ','
       << format_double(l.objectives.quadratic_proxy) << ',' << format_double(l.damped_objective) << ",,\n";
  }
  const SweepRow s = summarize(report);
  os << "model,,,," << report.groups << ',' << format_double(s.plain_objective) << ','
     << format_double(s.guided_objective) << ',' << format_double(s.quadratic_proxy) << ','
     << format_double(s.damped_objective) << ',' << format_double(report.end_loss_before) << ','
     << format_double(report.end_loss_after) << '\n';
}

void print_report(std::ostream& os, const QuantReport& report) {
  os << "method=" << to_string(report.method) << " bits=" << report.bits << " groups=" << report.groups
     << " seed=" << report.seed << '\n';
  os << std::left << std::setw(7) << "layer" << std::setw(10) << "shape" << std::setw(8) << "groups"
     << std::setw(16) << "plain" << std::setw(16) << "guided" << std::setw(16) << "proxy" << "damped\n";
  for (const auto& l : report.layers) {
    const std::string shape = std::to_string(l.d_in) + "x" + std::to_string(l.d_out);
    os << std::left << std::setw(7) << l.layer << std::setw(10) << shape << std::setw(8) << l.groups
       << std::setprecision(6) << std::setw(16) << l.objectives.plain << std::setw(16) << l.objectives.guided
       << std::setw(16) << l.objectives.quadratic_proxy << l.damped_objective << '\n';
  }
  os << "end loss: " << std::setprecision(8) << report.end_loss_before << " -> " << report.end_loss_after << '\n';
  os << "time [s]: calibrate " << std::setprecision(3) << report.times.calibrate_s << ", hessian "
     << report.times.hessian_s << ", quantize " << report.times.quantize_s << ", eval " << report.times.eval_s
     << '\n';
}

}  // namespace gq
