// SPDX-License-Identifier: Apache-2.0
#include "gq/run_config.hpp"

#include <json.hpp>


#include "gq/error.hpp"
#include "gq/tensor_io.hpp"

namespace gq {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { fail(ErrorCode::InvalidConfig, what); }

std::size_t as_count(const json& v, const char* key) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) bad(std::string(key) + " must be a non-negative integer");
  return v.get<std::size_t>();
}

double as_number(const json& v, const char* key) {
  if (!v.is_number()) bad(std::string(key) + " must be a number");
  return v.get<double>();
}

std::string as_string(const json& v, const char* key) {
  if (!v.is_string()) bad(std::string(key) + " must be a string");
  return v.get<std::string>();
}

// Accepts a scalar or an array of scalars.
template <typename F>
auto one_or_many(const json& v, const char* key, F&& convert) {
  using T = decltype(convert(v, key));
  std::vector<T> out;
  if (v.is_array()) {
    if (v.empty()) bad(std::string(key) + " must not be empty");
    for (const auto& e : v) out.push_back(convert(e, key));
  } else {
    out.push_back(convert(v, key));
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (seeds.empty()) bad("seeds must not be empty");
  if (model_dims.size() < 2) bad("model_dims needs at least two entries");
  for (auto d : model_dims) {
    if (d < 1 || d > 4096) bad("model_dims entries must be in [1, 4096]");
  }
  if (n < 1) bad("n must be >= 1");
  if (!(lr > 0.0)) bad("lr must be > 0");
  if (methods.empty() || bits.empty() || groups.empty()) bad("method, bits and groups must not be empty");
  for (auto b : bits) {
    if (b < 1 || b > 8) bad("bits must be in [1, 8]");
  }
  for (auto g : groups) {
    if (g < 1) bad("groups must be >= 1");
  }
  if (T < 1 || K < 1) bad("T and K must be >= 1");
  if (!(grad_scale > 0.0)) bad("grad_scale must be > 0");
  if (!(damping_rel >= 0.0 && damping_rel < 1.0)) bad("damping_rel must be in [0, 1)");
  if (lazy_batch_size < 1) bad("lazy_batch_size must be >= 1");
  if (workers < 1 || workers > 256) bad("workers must be in [1, 256]");
}

std::vector<QuantJob> RunConfig::jobs(std::uint64_t seed) const {
  std::vector<QuantJob> out;
  for (QuantMethod method : methods) {
    for (std::size_t b : bits) {
      const auto group_list = method == QuantMethod::LnqGuided ? groups : std::vector<std::size_t>{1};
      for (std::size_t g : group_list) {
        QuantJob job;
        job.method = method;
        job.bits = b;
        job.groups = g;
        job.grad_scale = grad_scale;
        job.damping_rel = damping_rel;
        job.seed = seed;
        job.workers = workers;
        job.lnq.T = T;
        job.lnq.K = K;
        job.lnq.bits = b;
        job.lnq.cd_engine = cd_engine;
        job.lnq.lazy_batch_size = lazy_batch_size;
        job.lnq.damping_rel = damping_rel;
        job.lnq.seed = seed;
        out.push_back(job);
      }
    }
  }
  return out;
}

RunConfig parse_run_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    bad(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) bad("config must be a JSON object");

  RunConfig c;
  for (const auto& [key, v] : j.items()) {
    const char* k = key.c_str();
    if (key == "seeds") {
      c.seeds = one_or_many(v, k, [](const json& e, const char* kk) -> std::uint64_t { return as_count(e, kk); });
    } else if (key == "model_dims") {
      if (!v.is_array()) bad("model_dims must be an array");
      c.model_dims.clear();
      for (const auto& e : v) c.model_dims.push_back(as_count(e, k));
    } else if (key == "n") {
      c.n = as_count(v, k);
    } else if (key == "task") {
      c.task = parse_loss(as_string(v, k));
    } else if (key == "train_steps") {
      c.train_steps = as_count(v, k);
    } else if (key == "lr") {
      c.lr = as_number(v, k);
    } else if (key == "method") {
      c.methods = one_or_many(v, k, [](const json& e, const char* kk) { return parse_method(as_string(e, kk)); });
    } else if (key == "bits") {
      c.bits = one_or_many(v, k, as_count);
    } else if (key == "groups") {
      c.groups = one_or_many(v, k, as_count);
    } else if (key == "T") {
      c.T = as_count(v, k);
    } else if (key == "K") {
      c.K = as_count(v, k);
    } else if (key == "grad_scale") {
      c.grad_scale = as_number(v, k);
    } else if (key == "damping_rel") {
      c.damping_rel = as_number(v, k);
    } else if (key == "cd_engine") {
      c.cd_engine = parse_cd_engine(as_string(v, k));
    } else if (key == "lazy_batch_size") {
      c.lazy_batch_size = as_count(v, k);
    } else if (key == "workers") {
      c.workers = as_count(v, k);
    } else if (key == "paths") {
      if (!v.is_object()) bad("paths must be an object");
      for (const auto& [pk, pv] : v.items()) {
        const std::string s = as_string(pv, pk.c_str());
        if (pk == "data") c.paths.data = s;
        else if (pk == "model") c.paths.model = s;
        else if (pk == "hessian_cache") c.paths.hessian_cache = s;
        else if (pk == "out") c.paths.out = s;
        else bad("unknown key paths." + pk);
      }
    } else {
      bad("unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_file(path)); }

}  // namespace gq
