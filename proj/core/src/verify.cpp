// SPDX-License-Identifier: Apache-2.0
#include "gq/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "gq/guidedquant.hpp"
#include "gq/hessian.hpp"
#include "gq/oracle.hpp"
#include "gq/random.hpp"
#include "gq/scalar_quant.hpp"

namespace gq::verify {

namespace {

constexpr double kTieMargin = 1e-6;

double descent_violation(const std::vector<double>& trace) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < trace.size(); ++k) {
    worst = std::max(worst, (trace[k] - trace[k - 1]) / (1.0 + std::abs(trace[k - 1])));
  }
  return worst;
}

std::vector<Assignment> assignments(const std::vector<ChannelQuantState>& states) {
  std::vector<Assignment> out;
  for (const auto& s : states) out.push_back(s.assign);
  return out;
}

std::string describe(std::size_t rejected, const char* what) {
  return std::to_string(rejected) + " " + what;
}

}  // namespace

Matrix random_spd(std::size_t d, Rng& rng) {
  const std::size_t rows = d + 2;
  Matrix A(rows, d);
  for (double& v : A.data()) v = rng.normal();
  Matrix H = weighted_gram(A);
  for (double& v : H.data()) v /= static_cast<double>(rows);
  return add_diagonal(H, 0.05);
}

LnqInstance random_lnq_instance(std::size_t d_in, std::size_t m, std::size_t channels, std::uint64_t seed) {
  Rng rng(seed);
  LnqInstance inst;
  inst.H = random_spd(d_in, rng);
  inst.W = Matrix(d_in, channels);
  for (double& v : inst.W.data()) v = rng.normal();
  for (std::size_t j = 0; j < channels; ++j) {
    ChannelQuantState st;
    st.codebook.values.resize(m);
    for (double& v : st.codebook.values) v = 1.5 * rng.normal();
    std::sort(st.codebook.values.begin(), st.codebook.values.end());
    st.assign.idx.resize(d_in);
    for (std::size_t i = 0; i < d_in; ++i) {
      st.assign.idx[i] = static_cast<std::uint8_t>(round_to_codebook(inst.W(i, j), st.codebook));
    }
    st.refresh();
    inst.init.push_back(std::move(st));
  }
  return inst;
}

ToySetup standard_toy(std::uint64_t seed, std::size_t n) {
  constexpr std::size_t kSteps = 500;
  constexpr double kLr = 0.05;
  const std::vector<std::size_t> dims{8, 16, 16, 4};
  ToySetup t;
  t.data = gen_dataset(seed, n, dims.front(), dims.back(), LossKind::SoftmaxCrossEntropy);
  t.model = train(MlpModel::random(dims, LossKind::SoftmaxCrossEntropy, seed), t.data, kSteps, kLr).model;
  return t;
}

PropertyResult check_fisher_identity(std::uint64_t seed) {
  PropertyResult r;
  r.name = "fisher_identity";
  const ToySetup toy = standard_toy(seed, 64);
  const auto calib = calibrate(toy.model, toy.data);
  std::vector<Matrix> w_hat;
  double guided = 0.0;
  for (std::size_t l = 0; l < toy.model.layers.size(); ++l) {
    w_hat.push_back(rtn_quantize(toy.model.layers[l], 2, l).weights());
    guided += eval_layer_objectives(toy.model.layers[l], w_hat.back(), calib[l]).guided;
  }
  const double fisher = oracle::full_fisher_quadratic(toy.model, toy.data, w_hat);
  r.worst = std::abs(guided - fisher) / std::max(std::abs(fisher), 1e-300);
  r.instances = 1;
  r.passed = r.worst <= 1e-9 && fisher > 0.0;
  std::ostringstream d;
  d.precision(12);
  d << "guided=" << guided << " fisher=" << fisher;
  r.detail = d.str();
  return r;
}

PropertyResult check_lnq_descent(std::size_t instances, std::uint64_t seed) {
  PropertyResult r;
  r.name = "lnq_descent";
  r.worst = -std::numeric_limits<double>::infinity();
  Rng rng(mix_seed(seed, 0x64657363ULL));
  const CdEngine engines[] = {CdEngine::Naive, CdEngine::ClosedForm, CdEngine::Precompute, CdEngine::LazyBatch};
  bool ok = true;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t d = 2 + rng.below(31);
    LnqConfig cfg;
    cfg.T = 3;
    cfg.K = 4;
    cfg.bits = 2 + rng.below(2);
    cfg.cd_engine = engines[t % 4];
    cfg.lazy_batch_size = 1 + rng.below(d);
    const std::size_t channels = 1 + rng.below(3);
    LnqInstance inst = random_lnq_instance(d, std::size_t{1} << cfg.bits, channels, mix_seed(seed, t));
    const auto out = lnq_quantize(inst.H, inst.W, cfg, inst.init);
    for (const auto& st : out) {
      ok = ok && st.objective_trace.size() == 2 * cfg.T + 2 && st.consistent();
      r.worst = std::max(r.worst, descent_violation(st.objective_trace));
    }
    ++r.instances;
  }
  r.passed = ok && r.worst <= 1e-12;
  r.detail = "max (f_next - f_prev) / (1 + f_prev)";
  return r;
}

PropertyResult check_engine_equivalence(std::size_t instances, std::uint64_t seed) {
  PropertyResult r;
  r.name = "cd_engine_equivalence";
  Rng rng(mix_seed(seed, 0x656e67ULL));
  std::size_t rejected = 0;
  std::size_t mismatches = 0;
  std::size_t lnq_compared = 0;
  std::size_t attempt = 0;
  double worst_trace = 0.0;
  while (r.instances < instances && attempt < 50 * instances) {
    const std::size_t d = 2 + rng.below(15);
    const std::size_t m = 2 + rng.below(3);
    const std::size_t channels = 1 + rng.below(4);
    const std::size_t K = 4;
    const LnqInstance inst = random_lnq_instance(d, m, channels, mix_seed(seed, 1000 + attempt++));

    auto reference = inst.init;
    CdStats stats;
    cd_cycle_closed_form(inst.H, inst.W, reference, K, &stats);
    if (stats.min_margin < kTieMargin) {
      ++rejected;
      continue;
    }
    const auto want = assignments(reference);
    auto run = [&](auto&& engine) {
      auto states = inst.init;
      engine(states);
      if (assignments(states) != want) ++mismatches;
    };
    run([&](auto& s) { cd_cycle_naive(inst.H, inst.W, s, K); });
    run([&](auto& s) { cd_cycle_precompute(inst.H, inst.W, s, K); });
    for (std::size_t b : {std::size_t{1}, std::size_t{4}, d}) {
      run([&](auto& s) { cd_cycle_lazy_batch(inst.H, inst.W, s, K, b); });
    }

    // Whole-solver agreement when the slot count is a power of two.
    if (m == 2 || m == 4) {
      LnqConfig cfg;
      cfg.bits = m == 2 ? 1 : 2;
      cfg.cd_engine = CdEngine::ClosedForm;
      CdStats lnq_stats;
      const auto base = lnq_quantize(inst.H, inst.W, cfg, inst.init, &lnq_stats);
      if (lnq_stats.min_margin >= kTieMargin) {
        ++lnq_compared;
        for (CdEngine e : {CdEngine::Naive, CdEngine::Precompute, CdEngine::LazyBatch}) {
          cfg.cd_engine = e;
          cfg.lazy_batch_size = 1 + rng.below(d);
          const auto other = lnq_quantize(inst.H, inst.W, cfg, inst.init);
          if (assignments(other) != assignments(base)) ++mismatches;
          for (std::size_t j = 0; j < base.size(); ++j) {
            for (std::size_t k = 0; k < base[j].objective_trace.size(); ++k) {
              const double a = base[j].objective_trace[k];
              const double b = other[j].objective_trace[k];
              worst_trace = std::max(worst_trace, std::abs(a - b) / std::max(std::abs(a), 1e-300));
            }
          }
        }
      }
    }
    ++r.instances;
  }
  r.worst = static_cast<double>(mismatches);
  r.passed = mismatches == 0 && r.instances == instances && worst_trace <= 1e-9;
  std::ostringstream d;
  d << describe(rejected, "near-tie instances skipped") << ", " << lnq_compared
    << " full-solver comparisons, worst trace rel diff " << worst_trace;
  r.detail = d.str();
  return r;
}

PropertyResult check_oracle_bounds(std::size_t per_dim, std::uint64_t seed) {
  PropertyResult r;
  r.name = "oracle_bounds";
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t d = 4; d <= 8; ++d) {
    for (std::size_t t = 0; t < per_dim; ++t) {
      const LnqInstance inst = random_lnq_instance(d, 2, 1, mix_seed(mix_seed(seed, d), t));
      LnqConfig cfg;
      cfg.bits = 1;
      const auto out = lnq_quantize(inst.H, inst.W, cfg, inst.init);
      const auto& trace = out[0].objective_trace;
      const double initial = trace.front();
      const double final_obj = trace.back();
      const auto ex = oracle::exhaustive_lnq(inst.H, inst.W.col(0), 2);
      // Positive values mean the bound is broken.
      worst = std::max(worst, (ex.best_objective - final_obj) / (1.0 + ex.best_objective));
      worst = std::max(worst, (final_obj - initial) / (1.0 + initial));
      ++r.instances;
    }
  }
  r.worst = worst;
  r.passed = worst <= 1e-12;
  r.detail = "max bound violation relative to 1 + f";
  return r;
}

PropertyResult check_kmeans_exact(std::size_t instances, std::uint64_t seed) {
  PropertyResult r;
  r.name = "kmeans_1d_exact";
  Rng rng(mix_seed(seed, 0x6b6dULL));
  double worst_dp = 0.0;
  double worst_lloyd = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t d = 1 + rng.below(10);
    const std::size_t m = 1 + rng.below(3);
    WeightedPoints pts;
    for (std::size_t i = 0; i < d; ++i) {
      pts.x.push_back(rng.normal());
      pts.wgt.push_back(rng.uniform() < 0.15 ? 0.0 : 0.1 + rng.uniform());
    }
    if (std::all_of(pts.wgt.begin(), pts.wgt.end(), [](double w) { return w == 0.0; })) pts.wgt[0] = 1.0;
    const auto dp = kmeans_1d_exact(pts, m);
    const double ex = oracle::exhaustive_kmeans_1d(pts, m);
    worst_dp = std::max(worst_dp, std::abs(dp.objective - ex) / (1.0 + ex));
    if (m <= d) {
      const auto init = kmeans_pp_init(pts, m, mix_seed(seed, t));
      const auto lr = lloyd(pts, init, 100);
      worst_lloyd = std::max(worst_lloyd, (dp.objective - lr.sse_trace.back()) / (1.0 + dp.objective));
    }
    ++r.instances;
  }
  r.worst = worst_dp;
  r.passed = worst_dp <= 1e-12 && worst_lloyd <= 1e-12;
  std::ostringstream d;
  d << "max |dp - exhaustive| / (1 + f); lloyd below dp by at most " << worst_lloyd;
  r.detail = d.str();
  return r;
}

PropertyResult check_hessian_consistency(std::uint64_t seed) {
  PropertyResult r;
  r.name = "hessian_consistency";
  const ToySetup toy = standard_toy(seed, 64);
  const auto calib = calibrate(toy.model, toy.data);
  double worst = 0.0;
  for (std::size_t l = 0; l < calib.size(); ++l) {
    const LayerCalibration& c = calib[l];
    const std::size_t n = c.X.rows();
    const std::size_t d_out = c.gradZ.cols();
    std::vector<Matrix> per_channel;
    for (std::size_t j = 0; j < d_out; ++j) {
      // n * F_j, the undamped singleton-group Hessian.
      per_channel.push_back(fisher_block_oracle(c, j, 1));
    }
    const auto singleton = guided_hessians(c, ChannelPartition::consecutive(d_out, d_out), 1.0, 0.0, l);
    for (std::size_t j = 0; j < d_out; ++j) worst = std::max(worst, relative_error(singleton.hessians[j], per_channel[j]));

    // Grouped Hessians are the per-channel average.
    const std::size_t g = std::min<std::size_t>(2, d_out);
    const auto part = ChannelPartition::consecutive(d_out, g);
    const auto grouped = guided_hessians(c, part, 1.0, 0.0, l);
    for (std::size_t k = 0; k < g; ++k) {
      Matrix avg(c.X.cols(), c.X.cols());
      for (std::size_t j : part.groups[k]) {
        auto a = avg.data();
        auto p = per_channel[j].data();
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += p[i];
      }
      for (double& v : avg.data()) v /= static_cast<double>(part.groups[k].size());
      worst = std::max(worst, relative_error(grouped.hessians[k], avg));
    }

    // Uniform gradients reduce to the plain Hessian, damping included.
    LayerCalibration uniform{c.X, Matrix(n, d_out)};
    for (double& v : uniform.gradZ.data()) v = 1.0;
    const auto plain = plain_hessian(c, 1e-2, l);
    for (std::size_t gg : {std::size_t{1}, g}) {
      const auto u = guided_hessians(uniform, ChannelPartition::consecutive(d_out, gg), 1.0, 1e-2, l);
      for (const auto& H : u.hessians) worst = std::max(worst, relative_error(H, plain.hessians[0]));
    }
    ++r.instances;
  }
  r.worst = worst;
  r.passed = worst <= 1e-10;
  r.detail = "max relative Frobenius error";
  return r;
}

PropertyResult check_fd_gradients(std::uint64_t seed) {
  PropertyResult r;
  r.name = "fd_gradients";
  const ToySetup toy = standard_toy(seed);
  const auto res = oracle::fd_gradient_check(toy.model, toy.data, 24, 1e-5, seed);
  r.worst = res.max_rel_error;
  r.instances = res.checked;
  r.passed = res.max_rel_error <= 1e-5;
  std::ostringstream d;
  d << "max abs error " << res.max_abs_error;
  r.detail = d.str();
  return r;
}

PropertyResult check_scale_invariance(std::size_t instances, std::uint64_t seed) {
  PropertyResult r;
  r.name = "grad_scale_invariance";
  std::size_t skipped = 0;
  std::size_t mismatches = 0;
  double worst_cb = 0.0;
  for (std::size_t t = 0; t < instances; ++t) {
    const ToySetup toy = standard_toy(mix_seed(seed, t), 128);
    const auto calib = calibrate(toy.model, toy.data);
    for (std::size_t l = 0; l < calib.size(); ++l) {
      const std::size_t d_out = calib[l].gradZ.cols();
      const auto part = ChannelPartition::consecutive(d_out, std::min<std::size_t>(2, d_out));
      const auto unscaled = guided_hessians(calib[l], part, 1.0, 1e-7, l);
      const auto scaled = guided_hessians(calib[l], part, 1e3, 1e-7, l);
      const QuantizedLayer init = squeezellm_quantize(toy.model.layers[l], diag_fisher(calib[l]), 2, seed, l);
      LnqConfig cfg;
      cfg.bits = 2;
      cfg.lazy_batch_size = 4;
      for (std::size_t k = 0; k < part.g(); ++k) {
        Matrix W(toy.model.layers[l].rows(), part.groups[k].size());
        std::vector<ChannelQuantState> start;
        for (std::size_t c = 0; c < part.groups[k].size(); ++c) {
          W.set_col(c, toy.model.layers[l].col(part.groups[k][c]));
          start.push_back(init.channels[part.groups[k][c]]);
        }
        CdStats stats;
        const auto a = lnq_quantize(unscaled.hessians[k], W, cfg, start, &stats);
        if (stats.min_margin < kTieMargin) {
          ++skipped;
          continue;
        }
        const auto b = lnq_quantize(scaled.hessians[k], W, cfg, start);
        if (assignments(a) != assignments(b)) ++mismatches;
        for (std::size_t c = 0; c < a.size(); ++c) {
          double scale = 0.0;
          double diff = 0.0;
          for (std::size_t q = 0; q < a[c].codebook.size(); ++q) {
            scale = std::max(scale, std::abs(a[c].codebook[q]));
            diff = std::max(diff, std::abs(a[c].codebook[q] - b[c].codebook[q]));
          }
          worst_cb = std::max(worst_cb, diff / std::max(scale, 1e-300));
        }
        ++r.instances;
      }
    }
  }
  r.worst = worst_cb;
  r.passed = mismatches == 0 && worst_cb <= 1e-9 && r.instances > 0;
  std::ostringstream d;
  d << mismatches << " assignment mismatches, " << describe(skipped, "near-tie blocks skipped");
  r.detail = d.str();
  return r;
}

PropertyResult check_cholesky_reconstruction(std::size_t instances, std::uint64_t seed) {
  PropertyResult r;
  r.name = "cholesky_reconstruction";
  Rng rng(mix_seed(seed, 0x63686fULL));
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t d = 1 + rng.below(64);
    const Matrix H = random_spd(d, rng);
    const double lambda = 1e-3 * rng.uniform();
    const CholeskyFactor f = cholesky(H, lambda);
    const Matrix LLt = matmul(f.L, transpose(f.L));
    const double err = frobenius_norm(subtract(LLt, add_diagonal(H, lambda))) / frobenius_norm(H);
    r.worst = std::max(r.worst, err);
    ++r.instances;
  }
  r.passed = r.worst <= 1e-10;
  r.detail = "max ||L L^T - (H + lambda I)||_F / ||H||_F";
  return r;
}

PropertyResult check_least_squares_optimality(std::size_t instances, std::uint64_t seed) {
  PropertyResult r;
  r.name = "least_squares_optimality";
  Rng rng(mix_seed(seed, 0x6c73ULL));
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t k = 1 + rng.below(6);
    const std::size_t n = k + rng.below(9);
    Matrix A(n, k);
    for (double& v : A.data()) v = rng.normal();
    Vector b(n);
    for (double& v : b) v = rng.normal();
    const Vector x = least_squares(A, b);
    auto residual = [&](const Vector& z) {
      const Vector Az = matvec(A, z);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += (Az[i] - b[i]) * (Az[i] - b[i]);
      return std::sqrt(s);
    };
    const double base = residual(x);
    for (std::size_t c = 0; c < k; ++c) {
      for (double step : {1e-3, -1e-3}) {
        Vector z = x;
        z[c] += step;
        worst = std::max(worst, base - residual(z));
      }
    }
    ++r.instances;
  }
  r.worst = worst;
  r.passed = worst <= 1e-12;
  r.detail = "max decrease of ||Ax - b|| under a 1e-3 coordinate perturbation";
  return r;
}

bool run_all(std::ostream& os, std::uint64_t seed) {
  const std::vector<PropertyResult> results{
      check_cholesky_reconstruction(50, seed),
      check_least_squares_optimality(50, seed),
      check_fisher_identity(seed),
      check_hessian_consistency(seed),
      check_fd_gradients(seed),
      check_kmeans_exact(200, seed),
      check_lnq_descent(200, seed),
      check_engine_equivalence(100, seed),
      check_oracle_bounds(20, seed),
      check_scale_invariance(3, seed),
  };
  bool all = true;
  for (const auto& res : results) {
    all = all && res.passed;
    os << (res.passed ? "PASS " : "FAIL ") << res.name << "  worst=" << res.worst << "  instances=" << res.instances
       << "  (" << res.detail << ")\n";
  }
  return all;
}

}  // namespace gq::verify
