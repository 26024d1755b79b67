// SPDX-License-Identifier: Apache-2.0
#include "gq/artifacts.hpp"

#include <sstream>

#include "gq/error.hpp"
#include "gq/tensor_io.hpp"
#include "manifest.hpp"

namespace gq {

using nlohmann::json;

namespace {

std::string layer_file(std::size_t l) { return "layer." + std::to_string(l) + ".weight.gqt"; }
std::string indexed(const char* stem, std::size_t l) { return std::string(stem) + ".L" + std::to_string(l) + ".gqt"; }
std::string hess_file(std::size_t l, std::size_t k) {
  return "hess.L" + std::to_string(l) + ".G" + std::to_string(k) + ".gqt";
}

template <typename T>
T meta_get(const json& meta, const char* key) {
  try {
    return meta.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptFile, std::string("manifest meta '") + key + "': " + e.what());
  }
}

void save_layers(const fs::path& dir, const std::vector<Matrix>& layers, std::vector<std::string>& files) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    write_tensor(dir / layer_file(l), Tensor::from_matrix(layers[l]));
    files.push_back(layer_file(l));
  }
}

std::vector<Matrix> load_layers(const fs::path& dir, std::size_t count) {
  std::vector<Matrix> layers;
  for (std::size_t l = 0; l < count; ++l) layers.push_back(read_tensor(dir / layer_file(l)).to_matrix());
  return layers;
}

json key_to_json(const HessianCacheKey& k) {
  return {{"model_hash", k.model_hash},   {"dataset_seed", k.dataset_seed}, {"kind", to_string(k.kind)},
          {"groups", k.groups},           {"grad_scale", k.grad_scale},     {"damping_rel", k.damping_rel}};
}

HessianCacheKey key_from_json(const json& j) {
  HessianCacheKey k;
  k.model_hash = meta_get<std::string>(j, "model_hash");
  k.dataset_seed = meta_get<std::uint64_t>(j, "dataset_seed");
  k.kind = parse_hessian_kind(meta_get<std::string>(j, "kind"));
  k.groups = meta_get<std::size_t>(j, "groups");
  k.grad_scale = meta_get<double>(j, "grad_scale");
  k.damping_rel = meta_get<double>(j, "damping_rel");
  return k;
}

}  // namespace

void save_dataset(const fs::path& dir, const Dataset& data, LossKind task) {
  fs::create_directories(dir);
  write_tensor(dir / "inputs.gqt", Tensor::from_matrix(data.inputs));
  write_tensor(dir / "targets.gqt", Tensor::from_matrix(data.targets));
  detail::write_manifest(dir, "dataset", {{"seed", data.seed}, {"task", to_string(task)}},
                         {"inputs.gqt", "targets.gqt"});
}

Dataset load_dataset(const fs::path& dir, LossKind* task) {
  const json meta = detail::read_manifest(dir, "dataset");
  Dataset d;
  d.inputs = read_tensor(dir / "inputs.gqt").to_matrix();
  d.targets = read_tensor(dir / "targets.gqt").to_matrix();
  d.seed = meta_get<std::uint64_t>(meta, "seed");
  if (d.inputs.rows() != d.targets.rows()) fail(ErrorCode::CorruptFile, "inputs and targets differ in rows");
  if (task) *task = parse_loss(meta_get<std::string>(meta, "task"));
  return d;
}

void save_model(const fs::path& dir, const MlpModel& model) {
  model.validate();
  fs::create_directories(dir);
  std::vector<std::string> files;
  save_layers(dir, model.layers, files);
  detail::write_manifest(dir, "model",
                         {{"activation", to_string(model.activation)},
                          {"loss", to_string(model.loss)},
                          {"layers", model.layers.size()}},
                         files);
}

MlpModel load_model(const fs::path& dir) {
  const json meta = detail::read_manifest(dir, "model");
  MlpModel m;
  m.activation = parse_activation(meta_get<std::string>(meta, "activation"));
  m.loss = parse_loss(meta_get<std::string>(meta, "loss"));
  m.layers = load_layers(dir, meta_get<std::size_t>(meta, "layers"));
  m.validate();
  return m;
}

std::string model_hash(const MlpModel& model) {
  std::string bytes;
  bytes += to_string(model.activation);
  bytes += '/';
  bytes += to_string(model.loss);
  for (const auto& W : model.layers) bytes += encode_tensor(Tensor::from_matrix(W));
  return sha256_hex(bytes);
}

void save_calibration(const fs::path& dir, const CalibrationArtifact& calib) {
  fs::create_directories(dir);
  std::vector<std::string> files;
  for (std::size_t l = 0; l < calib.layers.size(); ++l) {
    write_tensor(dir / indexed("X", l), Tensor::from_matrix(calib.layers[l].X));
    write_tensor(dir / indexed("gradZ", l), Tensor::from_matrix(calib.layers[l].gradZ));
    files.push_back(indexed("X", l));
    files.push_back(indexed("gradZ", l));
  }
  detail::write_manifest(dir, "calibration",
                         {{"model_hash", calib.model_hash},
                          {"dataset_seed", calib.dataset_seed},
                          {"layers", calib.layers.size()}},
                         files);
}

CalibrationArtifact load_calibration(const fs::path& dir) {
  const json meta = detail::read_manifest(dir, "calibration");
  CalibrationArtifact c;
  c.model_hash = meta_get<std::string>(meta, "model_hash");
  c.dataset_seed = meta_get<std::uint64_t>(meta, "dataset_seed");
  const auto L = meta_get<std::size_t>(meta, "layers");
  for (std::size_t l = 0; l < L; ++l) {
    c.layers.push_back(
        {read_tensor(dir / indexed("X", l)).to_matrix(), read_tensor(dir / indexed("gradZ", l)).to_matrix()});
  }
  return c;
}

HessianCacheKey cache_key_for(const QuantJob& job, const std::string& hash, std::uint64_t dataset_seed) {
  HessianCacheKey k;
  k.model_hash = hash;
  k.dataset_seed = dataset_seed;
  k.kind = job.method == QuantMethod::LnqGuided ? HessianKind::Guided : HessianKind::Plain;
  k.groups = job.method == QuantMethod::LnqGuided ? job.groups : 1;
  k.grad_scale = job.method == QuantMethod::LnqGuided ? job.grad_scale : 1.0;
  k.damping_rel = job.damping_rel;
  return k;
}

void save_hessians(const fs::path& dir, const std::vector<HessianSet>& sets, const HessianCacheKey& key) {
  fs::create_directories(dir);
  std::vector<std::string> files;
  json layers = json::array();
  for (std::size_t l = 0; l < sets.size(); ++l) {
    const HessianSet& hs = sets[l];
    for (std::size_t k = 0; k < hs.hessians.size(); ++k) {
      write_tensor(dir / hess_file(l, k), Tensor::from_matrix(hs.hessians[k]));
      files.push_back(hess_file(l, k));
    }
    layers.push_back({{"d_out", hs.partition.d_out}, {"partition", hs.partition.groups}, {"dampings", hs.dampings}});
  }
  json meta = key_to_json(key);
  meta["layers"] = layers;
  detail::write_manifest(dir, "hessians", meta, files);
}

HessianCacheKey read_hessian_key(const fs::path& dir) { return key_from_json(detail::read_manifest(dir, "hessians")); }

std::optional<std::vector<HessianSet>> load_hessians(const fs::path& dir, const HessianCacheKey& expected) {
  const json meta = detail::read_manifest(dir, "hessians");
  const HessianCacheKey key = key_from_json(meta);
  if (!(key == expected)) return std::nullopt;
  std::vector<HessianSet> sets;
  const json& layers = meta.at("layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    HessianSet hs;
    hs.layer_idx = l;
    hs.kind = key.kind;
    hs.grad_scale = key.grad_scale;
    hs.damping_rel = key.damping_rel;
    hs.partition.d_out = meta_get<std::size_t>(layers[l], "d_out");
    hs.partition.groups = meta_get<std::vector<std::vector<std::size_t>>>(layers[l], "partition");
    hs.partition.validate();
    hs.dampings = meta_get<std::vector<double>>(layers[l], "dampings");
    if (hs.dampings.size() != hs.partition.g()) fail(ErrorCode::CorruptFile, "damping count != group count");
    for (std::size_t k = 0; k < hs.partition.g(); ++k) hs.hessians.push_back(read_tensor(dir / hess_file(l, k)).to_matrix());
    sets.push_back(std::move(hs));
  }
  return sets;
}

void save_quantized(const fs::path& dir, const QuantJob& job, const JobResult& result, const std::string& hash,
                    std::uint64_t dataset_seed) {
  fs::create_directories(dir);
  std::vector<std::string> files;
  save_layers(dir, result.quantized.layers, files);
  json traces = json::array();
  for (std::size_t l = 0; l < result.layers.size(); ++l) {
    const QuantizedLayer& q = result.layers[l];
    const std::size_t m = codebook_size_for_bits(job.bits);
    Matrix cb(q.d_out, m);
    std::vector<std::uint8_t> idx(q.d_in * q.d_out);
    json layer_traces = json::array();
    for (std::size_t j = 0; j < q.d_out; ++j) {
      const ChannelQuantState& ch = q.channels[j];
      for (std::size_t k = 0; k < m; ++k) cb(j, k) = ch.codebook[k];
      for (std::size_t i = 0; i < q.d_in; ++i) idx[i * q.d_out + j] = ch.assign.idx[i];
      layer_traces.push_back(ch.objective_trace);
    }
    write_tensor(dir / indexed("codebook", l), Tensor::from_matrix(cb));
    write_tensor(dir / indexed("assign", l), Tensor::from_u8({q.d_in, q.d_out}, std::move(idx)));
    files.push_back(indexed("codebook", l));
    files.push_back(indexed("assign", l));
    traces.push_back({{"layer", l}, {"channels", layer_traces}});
  }
  write_file_atomic(dir / "traces.json", detail::dump_json(traces));
  files.push_back("traces.json");
  std::ostringstream csv;
  write_report_csv(csv, result.report);
  write_file_atomic(dir / "report.csv", csv.str());
  files.push_back("report.csv");

  json meta = {{"method", to_string(job.method)},
               {"bits", job.bits},
               {"groups", job.groups},
               {"grad_scale", job.grad_scale},
               {"damping_rel", job.damping_rel},
               {"seed", job.seed},
               {"T", job.lnq.T},
               {"K", job.lnq.K},
               {"cd_engine", to_string(job.lnq.cd_engine)},
               {"lazy_batch_size", job.lnq.lazy_batch_size},
               {"model_hash", hash},
               {"dataset_seed", dataset_seed},
               {"activation", to_string(result.quantized.activation)},
               {"loss", to_string(result.quantized.loss)},
               {"layers", result.layers.size()}};
  detail::write_manifest(dir, "quantized", meta, files);
}

MlpModel load_quantized_model(const fs::path& dir) {
  const json meta = detail::read_manifest(dir, "quantized");
  MlpModel m;
  m.activation = parse_activation(meta_get<std::string>(meta, "activation"));
  m.loss = parse_loss(meta_get<std::string>(meta, "loss"));
  m.layers = load_layers(dir, meta_get<std::size_t>(meta, "layers"));
  m.validate();
  return m;
}

}  // namespace gq
