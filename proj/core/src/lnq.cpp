// SPDX-License-Identifier: Apache-2.0
#include "gq/lnq.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gq/error.hpp"

namespace gq {

std::string_view to_string(CdEngine e) {
  switch (e) {
    case CdEngine::Naive: return "naive";
    case CdEngine::ClosedForm: return "closed_form";
    case CdEngine::Precompute: return "precompute";
    case CdEngine::LazyBatch: return "lazy_batch";
  }
  return "unknown";
}

CdEngine parse_cd_engine(std::string_view s) {
  if (s == "naive") return CdEngine::Naive;
  if (s == "closed_form") return CdEngine::ClosedForm;
  if (s == "precompute") return CdEngine::Precompute;
  if (s == "lazy_batch") return CdEngine::LazyBatch;
  fail(ErrorCode::InvalidConfig, "unknown cd engine '" + std::string(s) + "'");
}

void LnqConfig::validate() const {
  if (T < 1) fail(ErrorCode::InvalidConfig, "T must be >= 1");
  if (K < 1) fail(ErrorCode::InvalidConfig, "K must be >= 1");
  if (lazy_batch_size < 1) fail(ErrorCode::InvalidConfig, "lazy_batch_size must be >= 1");
  if (!(damping_rel >= 0.0)) fail(ErrorCode::InvalidConfig, "damping_rel must be >= 0");
  codebook_size_for_bits(bits);
}

CdWorkspace CdWorkspace::build(const Matrix& H, std::size_t channels) {
  if (H.rows() != H.cols()) fail(ErrorCode::DimensionMismatch, "H must be square");
  const std::size_t d = H.rows();
  CdWorkspace ws{Matrix(d, d), Matrix(d, d), Matrix(d, d), Matrix(d, channels)};
  for (std::size_t i = 0; i < d; ++i) {
    const double hii = H(i, i);
    if (!(hii > 0.0)) fail(ErrorCode::ZeroDiagonal, "H(" + std::to_string(i) + "," + std::to_string(i) + ") <= 0");
    for (std::size_t k = 0; k < d; ++k) {
      const double v = k == i ? 1.0 : H(i, k) / hii;
      ws.Htil(i, k) = v;
      if (k > i) ws.U(i, k) = v;
      if (k < i) ws.lower(i, k) = v;
    }
  }
  return ws;
}

void CdStats::record(double target, const Codebook& cb) {
  ++decisions;
  const std::size_t best = round_to_codebook(target, cb);
  const double d1 = std::abs(target - cb[best]);
  double d2 = std::numeric_limits<double>::infinity();
  for (double v : cb.values) {
    if (v != cb[best]) d2 = std::min(d2, std::abs(target - v));
  }
  min_margin = std::min(min_margin, d2 - d1);
}

ClosedFormCodebook codebook_closed_form(const CholeskyFactor& chol, std::span<const double> w,
                                        const Assignment& assign, std::size_t m) {
  const Matrix& L = chol.L;
  const std::size_t d = L.rows();
  if (w.size() != d || assign.size() != d) fail(ErrorCode::DimensionMismatch, "codebook solve sizes");
  if (m == 0 || m > kMaxCodebookSize) fail(ErrorCode::InvalidSize, "codebook size out of range");

  ClosedFormCodebook out;
  out.codebook.values.assign(m, 0.0);
  out.empty_slots.assign(m, true);
  for (auto q : assign.idx) {
    if (q >= m) fail(ErrorCode::DimensionMismatch, "assignment index exceeds codebook size");
    out.empty_slots[q] = false;
  }
  std::vector<std::size_t> used;
  std::vector<std::size_t> column(m, 0);
  for (std::size_t q = 0; q < m; ++q) {
    if (!out.empty_slots[q]) {
      column[q] = used.size();
      used.push_back(q);
    }
  }

  // A = L^T P restricted to used slots; rhs = L^T w.
  Matrix A(d, used.size());
  Vector rhs(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const std::size_t c = column[assign.idx[i]];
    auto li = L.row(i);
    for (std::size_t r = 0; r <= i; ++r) {
      A(r, c) += li[r];
      rhs[r] += li[r] * w[i];
    }
  }
  const Vector x = least_squares(A, rhs);
  for (std::size_t c = 0; c < used.size(); ++c) out.codebook.values[used[c]] = x[c];
  return out;
}

void canonicalize(ChannelQuantState& state) {
  const std::size_t m = state.codebook.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return state.codebook[a] < state.codebook[b]; });
  std::vector<std::uint8_t> new_index(m);
  Codebook sorted;
  sorted.values.resize(m);
  for (std::size_t pos = 0; pos < m; ++pos) {
    sorted.values[pos] = state.codebook[order[pos]];
    new_index[order[pos]] = static_cast<std::uint8_t>(pos);
  }
  for (auto& q : state.assign.idx) q = new_index[q];
  state.codebook = std::move(sorted);
  state.refresh();
}

double channel_objective(const Matrix& H, std::span<const double> w, std::span<const double> w_hat) {
  if (w.size() != w_hat.size()) fail(ErrorCode::DimensionMismatch, "channel_objective sizes");
  Vector e(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) e[i] = w_hat[i] - w[i];
  return quad_form(H, e);
}

void cd_step_naive(const Matrix& H, std::span<const double> w, ChannelQuantState& state, std::size_t i) {
  if (i >= state.w_hat.size()) fail(ErrorCode::DimensionMismatch, "coordinate out of range");
  const Codebook& cb = state.codebook;
  std::size_t best = 0;
  double best_obj = std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < cb.size(); ++q) {
    state.w_hat[i] = cb[q];
    const double f = channel_objective(H, w, state.w_hat);
    if (f < best_obj || (f == best_obj && cb[q] < cb[best])) {
      best = q;
      best_obj = f;
    }
  }
  state.assign.idx[i] = static_cast<std::uint8_t>(best);
  state.w_hat[i] = cb[best];
}

namespace {

void check_block(const Matrix& H, const Matrix& W, const std::vector<ChannelQuantState>& states) {
  if (H.rows() != H.cols() || H.rows() != W.rows()) fail(ErrorCode::DimensionMismatch, "H and W disagree on d_in");
  if (states.size() != W.cols()) fail(ErrorCode::DimensionMismatch, "one state per channel required");
  for (const auto& s : states) {
    if (s.w_hat.size() != W.rows() || s.assign.size() != W.rows()) {
      fail(ErrorCode::DimensionMismatch, "state length differs from d_in");
    }
  }
}

// Ŵ - W as a d_in x channels matrix.
Matrix residual(const Matrix& W, const std::vector<ChannelQuantState>& states) {
  Matrix E(W.rows(), W.cols());
  for (std::size_t i = 0; i < W.rows(); ++i)
    for (std::size_t j = 0; j < W.cols(); ++j) E(i, j) = states[j].w_hat[i] - W(i, j);
  return E;
}

// Rounds row i of the targets W_i,: - B_i,: and stores the new residual row.
void round_row(const Matrix& W, const Matrix& B, std::size_t i, std::vector<ChannelQuantState>& states,
               Matrix& E, CdStats* stats) {
  for (std::size_t j = 0; j < W.cols(); ++j) {
    ChannelQuantState& st = states[j];
    const double target = W(i, j) - B(i, j);
    if (stats) stats->record(target, st.codebook);
    const std::size_t q = round_to_codebook(target, st.codebook);
    st.assign.idx[i] = static_cast<std::uint8_t>(q);
    st.w_hat[i] = st.codebook[q];
    E(i, j) = st.w_hat[i] - W(i, j);
  }
}

}  // namespace

void cd_step_closed_form(const Matrix& H, const Matrix& W, std::vector<ChannelQuantState>& states,
                         std::size_t i, CdStats* stats) {
  check_block(H, W, states);
  if (i >= W.rows()) fail(ErrorCode::DimensionMismatch, "coordinate out of range");
  const double hii = H(i, i);
  if (!(hii > 0.0)) fail(ErrorCode::ZeroDiagonal, "H(" + std::to_string(i) + "," + std::to_string(i) + ") <= 0");
  for (std::size_t j = 0; j < W.cols(); ++j) {
    ChannelQuantState& st = states[j];
    double corr = 0.0;
    for (std::size_t k = 0; k < W.rows(); ++k) {
      if (k == i) continue;
      corr += H(i, k) * (st.w_hat[k] - W(k, j));
    }
    const double target = W(i, j) - corr / hii;
    if (stats) stats->record(target, st.codebook);
    const std::size_t q = round_to_codebook(target, st.codebook);
    st.assign.idx[i] = static_cast<std::uint8_t>(q);
    st.w_hat[i] = st.codebook[q];
  }
}

void cd_cycle_naive(const Matrix& H, const Matrix& W, std::vector<ChannelQuantState>& states, std::size_t K) {
  check_block(H, W, states);
  for (std::size_t cycle = 0; cycle < K; ++cycle) {
    for (std::size_t i = 0; i < W.rows(); ++i) {
      for (std::size_t j = 0; j < W.cols(); ++j) {
        const Vector w = W.col(j);
        cd_step_naive(H, w, states[j], i);
      }
    }
  }
}

void cd_cycle_closed_form(const Matrix& H, const Matrix& W, std::vector<ChannelQuantState>& states,
                          std::size_t K, CdStats* stats) {
  check_block(H, W, states);
  for (std::size_t cycle = 0; cycle < K; ++cycle)
    for (std::size_t i = 0; i < W.rows(); ++i) cd_step_closed_form(H, W, states, i, stats);
}

void cd_cycle_precompute(const Matrix& H, const Matrix& W, std::vector<ChannelQuantState>& states,
                         std::size_t K, CdStats* stats) {
  check_block(H, W, states);
  if (K == 0) return;
  const std::size_t d = W.rows();
  const std::size_t c = W.cols();
  CdWorkspace ws = CdWorkspace::build(H, c);
  Matrix E = residual(W, states);
  for (std::size_t cycle = 0; cycle < K; ++cycle) {
    ws.B = matmul(ws.U, E);
    for (std::size_t i = 0; i < d; ++i) {
      round_row(W, ws.B, i, states, E, stats);
      // Coordinates after i now see the updated row i through the lower triangle.
      auto e = E.row(i);
      for (std::size_t r = i + 1; r < d; ++r) {
        const double h = ws.lower(r, i);
        if (h == 0.0) continue;
        auto b = ws.B.row(r);
        for (std::size_t j = 0; j < c; ++j) b[j] += h * e[j];
      }
    }
  }
}

void cd_cycle_lazy_batch(const Matrix& H, const Matrix& W, std::vector<ChannelQuantState>& states,
                         std::size_t K, std::size_t batch_size, CdStats* stats) {
  check_block(H, W, states);
  if (batch_size == 0) fail(ErrorCode::InvalidConfig, "batch size must be >= 1");
  if (K == 0) return;
  const std::size_t d = W.rows();
  const std::size_t c = W.cols();
  const std::size_t bs = std::min(batch_size, d);
  CdWorkspace ws = CdWorkspace::build(H, c);
  Matrix E = residual(W, states);
  for (std::size_t cycle = 0; cycle < K; ++cycle) {
    ws.B = matmul(ws.U, E);
    for (std::size_t s = 0; s < d; s += bs) {
      const std::size_t end = std::min(s + bs, d);
      for (std::size_t i = s; i < end; ++i) {
        round_row(W, ws.B, i, states, E, stats);
        auto e = E.row(i);
        for (std::size_t r = i + 1; r < end; ++r) {
          const double h = ws.lower(r, i);
          if (h == 0.0) continue;
          auto b = ws.B.row(r);
          for (std::size_t j = 0; j < c; ++j) b[j] += h * e[j];
        }
      }
      // Deferred update of every row past the block.
      for (std::size_t r = end; r < d; ++r) {
        auto b = ws.B.row(r);
        for (std::size_t i = s; i < end; ++i) {
          const double h = ws.lower(r, i);
          if (h == 0.0) continue;
          auto e = E.row(i);
          for (std::size_t j = 0; j < c; ++j) b[j] += h * e[j];
        }
      }
    }
  }
}

void run_cd(CdEngine engine, const Matrix& H, const Matrix& W, std::vector<ChannelQuantState>& states,
            std::size_t K, std::size_t batch_size, CdStats* stats) {
  switch (engine) {
    case CdEngine::Naive: cd_cycle_naive(H, W, states, K); return;
    case CdEngine::ClosedForm: cd_cycle_closed_form(H, W, states, K, stats); return;
    case CdEngine::Precompute: cd_cycle_precompute(H, W, states, K, stats); return;
    case CdEngine::LazyBatch: cd_cycle_lazy_batch(H, W, states, K, batch_size, stats); return;
  }
}

std::vector<ChannelQuantState> lnq_quantize(const Matrix& H_damped, const Matrix& W, const LnqConfig& cfg,
                                            std::vector<ChannelQuantState> init, CdStats* stats) {
  cfg.validate();
  const std::size_t m = codebook_size_for_bits(cfg.bits);
  check_block(H_damped, W, init);
  for (const auto& st : init) {
    if (st.codebook.size() != m) fail(ErrorCode::InvalidConfig, "initial codebook size differs from 2^bits");
    if (!st.consistent()) fail(ErrorCode::InvalidConfig, "initial state is not feasible");
  }

  const CholeskyFactor chol = cholesky(H_damped, 0.0);
  std::vector<Vector> w(W.cols());
  for (std::size_t j = 0; j < W.cols(); ++j) w[j] = W.col(j);

  auto push_objective = [&](std::vector<ChannelQuantState>& states) {
    for (std::size_t j = 0; j < states.size(); ++j) {
      states[j].objective_trace.push_back(channel_objective(H_damped, w[j], states[j].w_hat));
    }
  };
  auto codebook_step = [&](std::vector<ChannelQuantState>& states) {
    for (std::size_t j = 0; j < states.size(); ++j) {
      ChannelQuantState& st = states[j];
      st.codebook = codebook_closed_form(chol, w[j], st.assign, m).codebook;
      canonicalize(st);
    }
    push_objective(states);
  };

  std::vector<ChannelQuantState> states = std::move(init);
  for (auto& st : states) st.objective_trace.clear();
  push_objective(states);
  for (std::size_t t = 0; t < cfg.T; ++t) {
    codebook_step(states);
    run_cd(cfg.cd_engine, H_damped, W, states, cfg.K, cfg.lazy_batch_size, stats);
    push_objective(states);
  }
  codebook_step(states);
  return states;
}

}  // namespace gq
