// SPDX-License-Identifier: Apache-2.0
#include "gq/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gq/error.hpp"
#include "gq/lnq.hpp"
#include "gq/random.hpp"

namespace gq::oracle {

namespace {

std::size_t checked_power(std::size_t base, std::size_t exp) {
  std::size_t total = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    if (total > kMaxEnumeration / std::max<std::size_t>(base, 1)) {
      fail(ErrorCode::TooLarge, std::to_string(base) + "^" + std::to_string(exp) + " exceeds enumeration budget");
    }
    total *= base;
  }
  return total;
}

// Advances a base-m counter; returns false after the last labelling.
bool next_labels(std::vector<std::uint8_t>& labels, std::size_t m) {
  for (std::size_t i = labels.size(); i-- > 0;) {
    if (++labels[i] < m) return true;
    labels[i] = 0;
  }
  return false;
}

struct SampleTrace {
  std::vector<Vector> inputs;  // input of each layer
  Vector output;
};

SampleTrace scalar_trace(const MlpModel& model, std::span<const double> x0) {
  SampleTrace t;
  Vector a(x0.begin(), x0.end());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Matrix& W = model.layers[l];
    Vector z(W.cols(), 0.0);
    for (std::size_t j = 0; j < W.cols(); ++j)
      for (std::size_t i = 0; i < W.rows(); ++i) z[j] += a[i] * W(i, j);
    t.inputs.push_back(a);
    if (l + 1 < model.layers.size()) {
      for (double& v : z) v = std::tanh(v);
      a = std::move(z);
    } else {
      t.output = std::move(z);
    }
  }
  return t;
}

Vector scalar_output_grad(LossKind loss, const Vector& z, std::span<const double> y) {
  Vector g(z.size());
  if (loss == LossKind::SquaredError) {
    for (std::size_t k = 0; k < z.size(); ++k) g[k] = 2.0 * (z[k] - y[k]);
    return g;
  }
  double zmax = -std::numeric_limits<double>::infinity();
  for (double v : z) zmax = std::max(zmax, v);
  double se = 0.0;
  for (double v : z) se += std::exp(v - zmax);
  double ysum = 0.0;
  for (double v : y) ysum += v;
  for (std::size_t k = 0; k < z.size(); ++k) g[k] = ysum * std::exp(z[k] - zmax) / se - y[k];
  return g;
}

}  // namespace

ExhaustiveResult exhaustive_lnq(const Matrix& H_damped, std::span<const double> w, std::size_t m) {
  const std::size_t d = w.size();
  if (H_damped.rows() != d || H_damped.cols() != d) fail(ErrorCode::DimensionMismatch, "H and w disagree");
  if (m == 0 || m > kMaxCodebookSize) fail(ErrorCode::InvalidSize, "codebook size out of range");
  const std::size_t total = checked_power(m, d);
  const CholeskyFactor chol = cholesky(H_damped, 0.0);

  ExhaustiveResult r;
  r.best_objective = std::numeric_limits<double>::infinity();
  Assignment a;
  a.idx.assign(d, 0);
  do {
    const Codebook cb = codebook_closed_form(chol, w, a, m).codebook;
    Vector w_hat(d);
    for (std::size_t i = 0; i < d; ++i) w_hat[i] = cb[a.idx[i]];
    const double f = channel_objective(H_damped, w, w_hat);
    if (f < r.best_objective) {
      r.best_objective = f;
      r.best_assign = a;
      r.best_codebook = cb;
    }
    ++r.enumerated;
  } while (next_labels(a.idx, m));
  if (r.enumerated != total) fail(ErrorCode::TooLarge, "enumeration count mismatch");
  return r;
}

double exhaustive_kmeans_1d(const WeightedPoints& pts, std::size_t m) {
  pts.validate();
  const std::size_t d = pts.size();
  checked_power(m, d);
  std::vector<std::uint8_t> labels(d, 0);
  double best = std::numeric_limits<double>::infinity();
  Vector wsum(m);
  Vector wx(m);
  do {
    std::fill(wsum.begin(), wsum.end(), 0.0);
    std::fill(wx.begin(), wx.end(), 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      wsum[labels[i]] += pts.wgt[i];
      wx[labels[i]] += pts.wgt[i] * pts.x[i];
    }
    double cost = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t q = labels[i];
      const double c = wsum[q] > 0.0 ? wx[q] / wsum[q] : pts.x[i];
      cost += pts.wgt[i] * (pts.x[i] - c) * (pts.x[i] - c);
    }
    best = std::min(best, cost);
  } while (next_labels(labels, m));
  return best;
}

Vector scalar_forward(const MlpModel& model, std::span<const double> input) {
  return scalar_trace(model, input).output;
}

std::vector<std::vector<Matrix>> per_sample_weight_gradients(const MlpModel& model, const Dataset& data) {
  model.validate();
  const std::size_t L = model.layers.size();
  const std::size_t n = data.inputs.rows();
  std::vector<std::vector<Matrix>> grads(L, std::vector<Matrix>(n));
  for (std::size_t s = 0; s < n; ++s) {
    const SampleTrace t = scalar_trace(model, data.inputs.row(s));
    Vector gz = scalar_output_grad(model.loss, t.output, data.targets.row(s));
    for (std::size_t l = L; l-- > 0;) {
      const Matrix& W = model.layers[l];
      const Vector& x = t.inputs[l];
      Matrix G(W.rows(), W.cols());
      for (std::size_t i = 0; i < W.rows(); ++i)
        for (std::size_t j = 0; j < W.cols(); ++j) G(i, j) = x[i] * gz[j];
      grads[l][s] = std::move(G);
      if (l == 0) break;
      Vector prev(W.rows(), 0.0);
      for (std::size_t i = 0; i < W.rows(); ++i) {
        double ga = 0.0;
        for (std::size_t j = 0; j < W.cols(); ++j) ga += W(i, j) * gz[j];
        prev[i] = ga * (1.0 - x[i] * x[i]);
      }
      gz = std::move(prev);
    }
  }
  return grads;
}

double full_fisher_quadratic(const MlpModel& model, const Dataset& data, const std::vector<Matrix>& W_hat_all) {
  model.validate();
  if (W_hat_all.size() != model.layers.size()) fail(ErrorCode::DimensionMismatch, "layer count");
  std::size_t weights = 0;
  for (const auto& W : model.layers) weights += W.size();
  if (weights > kMaxFisherWeights) fail(ErrorCode::TooLarge, std::to_string(weights) + " weights");

  const auto grads = per_sample_weight_gradients(model, data);
  const std::size_t n = data.inputs.rows();
  double total = 0.0;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Matrix& W = model.layers[l];
    const Matrix& W_hat = W_hat_all[l];
    if (W_hat.rows() != W.rows() || W_hat.cols() != W.cols()) fail(ErrorCode::DimensionMismatch, "W_hat shape");
    const std::size_t d = W.rows();
    for (std::size_t j = 0; j < W.cols(); ++j) {
      Matrix F(d, d);
      for (std::size_t s = 0; s < n; ++s) {
        const Matrix& G = grads[l][s];
        for (std::size_t a = 0; a < d; ++a)
          for (std::size_t b = 0; b < d; ++b) F(a, b) += G(a, j) * G(b, j);
      }
      for (double& v : F.data()) v /= static_cast<double>(n);
      Vector dw(d);
      for (std::size_t a = 0; a < d; ++a) dw[a] = W(a, j) - W_hat(a, j);
      total += static_cast<double>(n) * quad_form(F, dw);
    }
  }
  return total;
}

FdCheckResult fd_gradient_check(const MlpModel& model, const Dataset& data, std::size_t samples, double h,
                                std::uint64_t seed) {
  if (samples == 0) fail(ErrorCode::InvalidSize, "samples must be >= 1");
  const std::vector<Matrix> bp = weight_gradients(model, data);
  Rng rng(mix_seed(seed, 0x6664ULL));
  FdCheckResult r;
  MlpModel probe = model;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const double floor = 1e-6 * std::max(max_abs(bp[l]), 1e-300);
    for (std::size_t s = 0; s < samples; ++s) {
      const std::size_t i = rng.below(model.layers[l].rows());
      const std::size_t j = rng.below(model.layers[l].cols());
      const double w0 = model.layers[l](i, j);
      probe.layers[l](i, j) = w0 + h;
      const double up = end_loss(probe, data);
      probe.layers[l](i, j) = w0 - h;
      const double down = end_loss(probe, data);
      probe.layers[l](i, j) = w0;
      const double fd = (up - down) / (2.0 * h);
      const double err = std::abs(fd - bp[l](i, j));
      const double denom = std::max({std::abs(fd), std::abs(bp[l](i, j)), floor});
      r.max_abs_error = std::max(r.max_abs_error, err);
      r.max_rel_error = std::max(r.max_rel_error, err / denom);
      ++r.checked;
    }
  }
  return r;
}

}  // namespace gq::oracle
