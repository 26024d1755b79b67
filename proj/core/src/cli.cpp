// SPDX-License-Identifier: Apache-2.0
#include "gq/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gq/artifacts.hpp"
#include "gq/error.hpp"
#include "gq/guidedquant.hpp"
#include "gq/run_config.hpp"
#include "gq/tensor_io.hpp"
#include "gq/verify.hpp"

namespace gq {

namespace {

struct Options {
  std::uint64_t seed = 0;
  std::string data, model, calib, hessians, quantized, out, config;

  // gen-data / train
  std::size_t n = 256, d0 = 8, dt = 4, steps = 500;
  std::string task = "softmax_cross_entropy";
  std::vector<std::size_t> dims{8, 16, 16, 4};
  double lr = 0.05;

  // hessian / quantize
  std::string kind = "guided";
  std::string method = "lnq_guided";
  std::size_t bits = 2, groups = 4, T = 2, K = 4, lazy_batch_size = 128, workers = 1;
  double grad_scale = 1e3, damping_rel = 1e-7;
  std::string cd_engine = "lazy_batch";
};

std::string require_path(const std::string& value, const char* flag) {
  if (value.empty()) fail(ErrorCode::InvalidConfig, std::string(flag) + " is required");
  return value;
}

QuantJob job_from_options(const Options& o) {
  QuantJob job;
  job.method = parse_method(o.method);
  job.bits = o.bits;
  job.groups = o.groups;
  job.grad_scale = o.grad_scale;
  job.damping_rel = o.damping_rel;
  job.seed = o.seed;
  job.workers = o.workers;
  job.lnq.T = o.T;
  job.lnq.K = o.K;
  job.lnq.bits = o.bits;
  job.lnq.cd_engine = parse_cd_engine(o.cd_engine);
  job.lnq.lazy_batch_size = o.lazy_batch_size;
  job.lnq.damping_rel = o.damping_rel;
  job.lnq.seed = o.seed;
  job.validate();
  return job;
}

// Flags given on the command line win over the config file.
void apply_config(Options& o, const RunConfig& c, const CLI::App& app) {
  auto unset = [&](const char* flag) { return app.count(flag) == 0; };
  if (unset("--seed")) o.seed = c.seeds.front();
  if (unset("--method")) o.method = std::string(to_string(c.methods.front()));
  if (unset("--bits")) o.bits = c.bits.front();
  if (unset("--groups")) o.groups = c.groups.front();
  if (unset("--T")) o.T = c.T;
  if (unset("--K")) o.K = c.K;
  if (unset("--grad-scale")) o.grad_scale = c.grad_scale;
  if (unset("--damping-rel")) o.damping_rel = c.damping_rel;
  if (unset("--cd-engine")) o.cd_engine = std::string(to_string(c.cd_engine));
  if (unset("--lazy-batch-size")) o.lazy_batch_size = c.lazy_batch_size;
  if (unset("--workers")) o.workers = c.workers;
  if (unset("--data")) o.data = c.paths.data;
  if (unset("--model")) o.model = c.paths.model;
  if (unset("--hessians")) o.hessians = c.paths.hessian_cache;
  if (unset("--out")) o.out = c.paths.out;
}

void add_quant_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--method", o.method, "rtn | squeezellm | lnq_plain | lnq_guided");
  cmd->add_option("--bits", o.bits, "bits per weight (1..8)");
  cmd->add_option("--groups", o.groups, "output-channel groups for lnq_guided");
  cmd->add_option("--T", o.T, "codebook/assignment alternations");
  cmd->add_option("--K", o.K, "coordinate-descent cycles per alternation");
  cmd->add_option("--grad-scale", o.grad_scale, "multiplier applied to output gradients");
  cmd->add_option("--damping-rel", o.damping_rel, "damping as a fraction of the mean Hessian diagonal");
  cmd->add_option("--cd-engine", o.cd_engine, "naive | closed_form | precompute | lazy_batch");
  cmd->add_option("--lazy-batch-size", o.lazy_batch_size, "block size of the lazy-batch engine");
  cmd->add_option("--workers", o.workers, "worker threads (results do not depend on it)");
}

int cmd_gen_data(const Options& o) {
  const LossKind task = parse_loss(o.task);
  const Dataset d = gen_dataset(o.seed, o.n, o.d0, o.dt, task);
  save_dataset(require_path(o.out, "--out"), d, task);
  std::cout << "dataset: n=" << o.n << " d0=" << o.d0 << " dt=" << o.dt << " task=" << o.task << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  LossKind task;
  const Dataset data = load_dataset(require_path(o.data, "--data"), &task);
  if (o.dims.size() < 2 || o.dims.front() != data.inputs.cols() || o.dims.back() != data.targets.cols()) {
    fail(ErrorCode::InvalidConfig, "--dims must start at the input width and end at the target width");
  }
  const TrainResult r = train(MlpModel::random(o.dims, task, o.seed), data, o.steps, o.lr);
  save_model(require_path(o.out, "--out"), r.model);
  std::cout << "loss: initial " << format_double(r.initial_loss) << " final " << format_double(r.final_loss)
            << " (best step " << r.best_step << ")\n";
  return 0;
}

int cmd_calibrate(const Options& o) {
  const MlpModel model = load_model(require_path(o.model, "--model"));
  const Dataset data = load_dataset(require_path(o.data, "--data"));
  CalibrationArtifact c{calibrate(model, data), model_hash(model), data.seed};
  save_calibration(require_path(o.out, "--out"), c);
  std::cout << "calibration: " << c.layers.size() << " layers, " << data.inputs.rows() << " samples\n";
  return 0;
}

int cmd_hessian(const Options& o) {
  const CalibrationArtifact c = load_calibration(require_path(o.calib, "--calib"));
  Options q = o;
  q.method = parse_hessian_kind(o.kind) == HessianKind::Guided ? "lnq_guided" : "lnq_plain";
  const QuantJob job = job_from_options(q);
  const auto sets = build_hessians(job, c.layers);
  save_hessians(require_path(o.out, "--out"), sets, cache_key_for(job, c.model_hash, c.dataset_seed));
  std::cout << "hessians: " << sets.size() << " layers, kind " << o.kind << "\n";
  return 0;
}

int cmd_quantize(const Options& o) {
  const QuantJob job = job_from_options(o);
  const MlpModel model = load_model(require_path(o.model, "--model"));
  const Dataset data = load_dataset(require_path(o.data, "--data"));
  const std::string hash = model_hash(model);

  std::vector<LayerCalibration> calib;
  if (!o.calib.empty()) {
    CalibrationArtifact c = load_calibration(o.calib);
    if (c.model_hash != hash || c.dataset_seed != data.seed) {
      fail(ErrorCode::InvalidConfig, "calibration was produced for a different model or dataset");
    }
    calib = std::move(c.layers);
  } else {
    calib = calibrate(model, data);
  }

  std::optional<std::vector<HessianSet>> hess;
  if (job.uses_lnq() && !o.hessians.empty()) {
    if (std::filesystem::exists(o.hessians)) {
      hess = load_hessians(o.hessians, cache_key_for(job, hash, data.seed));
      if (!hess) std::cerr << "note: hessian cache " << o.hessians << " does not match this job; recomputing\n";
    } else {
      std::cerr << "note: hessian cache " << o.hessians << " not found; recomputing\n";
    }
  }
  const JobResult r = run_job(model, data, job, &calib, hess ? &*hess : nullptr);
  save_quantized(require_path(o.out, "--out"), job, r, hash, data.seed);
  print_report(std::cout, r.report);
  return 0;
}

int cmd_eval(const Options& o) {
  const MlpModel model = load_model(require_path(o.model, "--model"));
  const Dataset data = load_dataset(require_path(o.data, "--data"));
  std::cout << "end_loss " << format_double(end_loss(model, data)) << "\n";
  if (o.quantized.empty()) return 0;
  const MlpModel q = load_quantized_model(o.quantized);
  const auto obj = eval_objectives(model, q, calibrate(model, data));
  std::cout << "end_loss_quantized " << format_double(end_loss(q, data)) << "\n";
  std::cout << "layer,plain_objective,guided_objective,quadratic_proxy\n";
  for (std::size_t l = 0; l < obj.size(); ++l) {
    std::cout << l << "," << format_double(obj[l].plain) << "," << format_double(obj[l].guided) << ","
              << format_double(obj[l].quadratic_proxy) << "\n";
  }
  return 0;
}

int cmd_sweep(const Options& o, const CLI::App& app) {
  std::vector<SweepRow> rows;
  if (!o.config.empty()) {
    RunConfig c = load_run_config(o.config);
    if (app.count("--workers")) c.workers = o.workers;
    for (std::uint64_t seed : c.seeds) {
      const Dataset data = gen_dataset(seed, c.n, c.model_dims.front(), c.model_dims.back(), c.task);
      const MlpModel model = train(MlpModel::random(c.model_dims, c.task, seed), data, c.train_steps, c.lr).model;
      for (auto& row : sweep(model, data, c.jobs(seed))) rows.push_back(row);
    }
  } else {
    const MlpModel model = load_model(require_path(o.model, "--model"));
    const Dataset data = load_dataset(require_path(o.data, "--data"));
    rows = sweep(model, data, {job_from_options(o)});
  }
  if (o.out.empty()) {
    write_sweep_csv(std::cout, rows);
  } else {
    std::ostringstream csv;
    write_sweep_csv(csv, rows);
    write_file_atomic(o.out, csv.str());
    std::cout << rows.size() << " rows written to " << o.out << "\n";
  }
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Guided layer-wise non-uniform quantization of small MLPs", "gqtool"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--seed", o.seed);
  gen->add_option("--n", o.n, "samples");
  gen->add_option("--d0", o.d0, "input width");
  gen->add_option("--dt", o.dt, "target width");
  gen->add_option("--task", o.task, "squared_error | softmax_cross_entropy");
  gen->add_option("--out", o.out, "dataset directory")->required();

  auto* tr = app.add_subcommand("train", "train an MLP on a dataset");
  tr->add_option("--seed", o.seed);
  tr->add_option("--data", o.data)->required();
  tr->add_option("--dims", o.dims, "layer widths d0,...,dL")->delimiter(',');
  tr->add_option("--steps", o.steps);
  tr->add_option("--lr", o.lr);
  tr->add_option("--out", o.out, "model directory")->required();

  auto* cal = app.add_subcommand("calibrate", "capture layer inputs and output gradients");
  cal->add_option("--model", o.model)->required();
  cal->add_option("--data", o.data)->required();
  cal->add_option("--out", o.out)->required();

  auto* hs = app.add_subcommand("hessian", "build and cache per-group Hessians");
  hs->add_option("--calib", o.calib)->required();
  hs->add_option("--kind", o.kind, "plain | guided");
  hs->add_option("--groups", o.groups);
  hs->add_option("--grad-scale", o.grad_scale);
  hs->add_option("--damping-rel", o.damping_rel);
  hs->add_option("--workers", o.workers);
  hs->add_option("--out", o.out)->required();

  auto* qz = app.add_subcommand("quantize", "quantize every layer of a model");
  qz->add_option("--config", o.config, "run configuration (JSON); flags override it");
  qz->add_option("--seed", o.seed);
  qz->add_option("--model", o.model);
  qz->add_option("--data", o.data);
  qz->add_option("--calib", o.calib, "reuse a calibration directory");
  qz->add_option("--hessians", o.hessians, "Hessian cache directory; recomputed on key mismatch");
  qz->add_option("--out", o.out);
  add_quant_flags(qz, o);

  auto* ev = app.add_subcommand("eval", "report end loss and layer objectives");
  ev->add_option("--model", o.model)->required();
  ev->add_option("--data", o.data)->required();
  ev->add_option("--quantized", o.quantized, "quantized model directory");

  auto* sw = app.add_subcommand("sweep", "run several quantization jobs and write a CSV");
  sw->add_option("--config", o.config, "run configuration (JSON): trains one model per seed");
  sw->add_option("--seed", o.seed);
  sw->add_option("--model", o.model);
  sw->add_option("--data", o.data);
  sw->add_option("--out", o.out, "CSV path (stdout when omitted)");
  add_quant_flags(sw, o);

  auto* vf = app.add_subcommand("verify", "run the oracle property suite");
  vf->add_option("--seed", o.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o);
    if (tr->parsed()) return cmd_train(o);
    if (cal->parsed()) return cmd_calibrate(o);
    if (hs->parsed()) return cmd_hessian(o);
    if (qz->parsed()) {
      if (!o.config.empty()) apply_config(o, load_run_config(o.config), *qz);
      return cmd_quantize(o);
    }
    if (ev->parsed()) return cmd_eval(o);
    if (sw->parsed()) return cmd_sweep(o, *sw);
    if (vf->parsed()) return verify::run_all(std::cout, o.seed) ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::InvalidConfig ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace gq
