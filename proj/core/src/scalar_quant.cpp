// SPDX-License-Identifier: Apache-2.0
#include "gq/scalar_quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "gq/error.hpp"
#include "gq/random.hpp"

namespace gq {

namespace {

constexpr std::size_t kSqueezeLloydIters = 100;

std::vector<double> sorted_distinct(std::span<const double> x) {
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

Assignment nearest_assignment(std::span<const double> x, const Codebook& cb) {
  Assignment a;
  a.idx.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) a.idx[i] = static_cast<std::uint8_t>(round_to_codebook(x[i], cb));
  return a;
}

// Two-pass weighted SSE of x[first..last) around its weighted mean. Segments
// with zero total weight cost nothing and are centered at their plain mean.
struct SegmentFit {
  double center = 0.0;
  double cost = 0.0;
};

SegmentFit fit_segment(std::span<const double> x, std::span<const double> w) {
  double wsum = 0.0;
  double wx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    wsum += w[i];
    wx += w[i] * x[i];
  }
  SegmentFit f;
  if (wsum <= 0.0) {
    f.center = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    return f;
  }
  f.center = wx / wsum;
  for (std::size_t i = 0; i < x.size(); ++i) f.cost += w[i] * (x[i] - f.center) * (x[i] - f.center);
  return f;
}

}  // namespace

void WeightedPoints::validate() const {
  if (x.size() != wgt.size()) fail(ErrorCode::DimensionMismatch, "points and weights differ in length");
  if (x.empty()) fail(ErrorCode::InvalidSize, "no points");
  bool any_positive = false;
  for (double w : wgt) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorCode::InvalidSize, "weights must be finite and >= 0");
    any_positive = any_positive || w > 0.0;
  }
  if (!any_positive) fail(ErrorCode::InvalidSize, "all weights are zero");
}

void ChannelQuantState::refresh() {
  w_hat.resize(assign.size());
  for (std::size_t i = 0; i < assign.size(); ++i) w_hat[i] = codebook.values.at(assign.idx[i]);
}

bool ChannelQuantState::consistent() const {
  if (w_hat.size() != assign.size()) return false;
  for (std::size_t i = 0; i < assign.size(); ++i) {
    if (assign.idx[i] >= codebook.size() || w_hat[i] != codebook[assign.idx[i]]) return false;
  }
  return true;
}

Matrix QuantizedLayer::weights() const {
  Matrix W(d_in, d_out);
  for (std::size_t j = 0; j < channels.size(); ++j) W.set_col(j, channels[j].w_hat);
  return W;
}

std::size_t codebook_size_for_bits(std::size_t bits) {
  if (bits < 1 || bits > 8) fail(ErrorCode::InvalidConfig, "bits must be in [1, 8], got " + std::to_string(bits));
  return std::size_t{1} << bits;
}

std::size_t round_to_codebook(double x, const Codebook& cb) {
  std::size_t best = 0;
  double best_dist = std::abs(x - cb.values.at(0));
  for (std::size_t q = 1; q < cb.size(); ++q) {
    const double d = std::abs(x - cb[q]);
    if (d < best_dist || (d == best_dist && cb[q] < cb[best])) {
      best = q;
      best_dist = d;
    }
  }
  return best;
}

Codebook padded_distinct_codebook(std::span<const double> x, std::size_t m) {
  Codebook cb{sorted_distinct(x)};
  if (cb.values.size() > m) fail(ErrorCode::InvalidSize, "more distinct values than codebook slots");
  while (cb.values.size() < m) cb.values.push_back(cb.values.back());
  return cb;
}

Codebook kmeans_pp_init(const WeightedPoints& pts, std::size_t m, std::uint64_t seed) {
  pts.validate();
  if (m == 0 || m > kMaxCodebookSize) fail(ErrorCode::InvalidSize, "codebook size out of range");
  const std::size_t distinct = sorted_distinct(pts.x).size();
  if (m > distinct) {
    fail(ErrorCode::TooFewDistinctPoints,
         std::to_string(m) + " centers requested from " + std::to_string(distinct) + " distinct points");
  }
  Rng rng(seed);
  const std::size_t d = pts.size();
  std::vector<double> centers;
  centers.reserve(m);

  auto sample = [&](const std::vector<double>& mass) -> std::size_t {
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    if (!(total > 0.0)) return d;
    const double u = rng.uniform() * total;
    double cum = 0.0;
    std::size_t last_positive = d;
    for (std::size_t i = 0; i < d; ++i) {
      if (mass[i] <= 0.0) continue;
      cum += mass[i];
      last_positive = i;
      if (cum > u) return i;
    }
    return last_positive;
  };

  centers.push_back(pts.x[sample(pts.wgt)]);
  std::vector<double> dist2(d);
  std::vector<double> mass(d);
  while (centers.size() < m) {
    for (std::size_t i = 0; i < d; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centers) best = std::min(best, (pts.x[i] - c) * (pts.x[i] - c));
      dist2[i] = best;
      mass[i] = pts.wgt[i] * best;
    }
    std::size_t pick = sample(mass);
    if (pick == d) {
      // All positive-weight points already coincide with centers: fall back to
      // the farthest remaining point, lowest index on ties.
      double far = -1.0;
      for (std::size_t i = 0; i < d; ++i) {
        if (dist2[i] > far) {
          far = dist2[i];
          pick = i;
        }
      }
    }
    centers.push_back(pts.x[pick]);
  }
  std::sort(centers.begin(), centers.end());
  return {std::move(centers)};
}

double weighted_sse(const WeightedPoints& pts, const Codebook& cb, const Assignment& assign) {
  if (assign.size() != pts.size()) fail(ErrorCode::DimensionMismatch, "assignment length");
  double s = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double e = pts.x[i] - cb.values.at(assign.idx[i]);
    s += pts.wgt[i] * e * e;
  }
  return s;
}

LloydResult lloyd(const WeightedPoints& pts, const Codebook& init, std::size_t iters) {
  pts.validate();
  if (init.size() == 0 || init.size() > kMaxCodebookSize) fail(ErrorCode::InvalidSize, "codebook size out of range");
  LloydResult r;
  r.codebook = init;
  r.assign = nearest_assignment(pts.x, r.codebook);
  r.sse_trace.push_back(weighted_sse(pts, r.codebook, r.assign));

  const std::size_t m = init.size();
  std::vector<double> wsum(m);
  std::vector<double> wx(m);
  for (std::size_t it = 0; it < iters; ++it) {
    std::fill(wsum.begin(), wsum.end(), 0.0);
    std::fill(wx.begin(), wx.end(), 0.0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      wsum[r.assign.idx[i]] += pts.wgt[i];
      wx[r.assign.idx[i]] += pts.wgt[i] * pts.x[i];
    }
    Codebook next = r.codebook;
    for (std::size_t q = 0; q < m; ++q) {
      if (wsum[q] > 0.0) next.values[q] = wx[q] / wsum[q];
    }
    std::sort(next.values.begin(), next.values.end());
    Assignment next_assign = nearest_assignment(pts.x, next);
    const bool fixed = next == r.codebook && next_assign == r.assign;
    r.codebook = std::move(next);
    r.assign = std::move(next_assign);
    r.sse_trace.push_back(weighted_sse(pts, r.codebook, r.assign));
    if (fixed) break;
  }
  return r;
}

KMeans1dResult kmeans_1d_exact(const WeightedPoints& pts, std::size_t m) {
  pts.validate();
  if (m == 0 || m > kMaxCodebookSize) fail(ErrorCode::InvalidSize, "codebook size out of range");
  const std::size_t d = pts.size();
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pts.x[a] < pts.x[b]; });
  Vector xs(d);
  Vector ws(d);
  for (std::size_t i = 0; i < d; ++i) {
    xs[i] = pts.x[order[i]];
    ws[i] = pts.wgt[order[i]];
  }

  // cost[a][b]: fit of sorted points a..b inclusive.
  std::vector<std::vector<SegmentFit>> seg(d, std::vector<SegmentFit>(d));
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b)
      seg[a][b] = fit_segment(std::span(xs).subspan(a, b - a + 1), std::span(ws).subspan(a, b - a + 1));

  const std::size_t k_eff = std::min(m, d);
  const double inf = std::numeric_limits<double>::infinity();
  // best[k][i]: optimal cost of the first i+1 points in k+1 clusters.
  std::vector<std::vector<double>> best(k_eff, std::vector<double>(d, inf));
  std::vector<std::vector<std::size_t>> split(k_eff, std::vector<std::size_t>(d, 0));
  for (std::size_t i = 0; i < d; ++i) best[0][i] = seg[0][i].cost;
  for (std::size_t k = 1; k < k_eff; ++k) {
    for (std::size_t i = k; i < d; ++i) {
      // Last cluster starts at s (k <= s <= i).
      for (std::size_t s = k; s <= i; ++s) {
        const double c = best[k - 1][s - 1] + seg[s][i].cost;
        if (c < best[k][i]) {
          best[k][i] = c;
          split[k][i] = s;
        }
      }
    }
  }

  std::vector<std::size_t> starts(k_eff);
  std::size_t end = d - 1;
  for (std::size_t k = k_eff; k-- > 0;) {
    starts[k] = k == 0 ? 0 : split[k][end];
    if (k > 0) end = starts[k] - 1;
  }

  KMeans1dResult r;
  r.assign.idx.assign(d, 0);
  for (std::size_t k = 0; k < k_eff; ++k) {
    const std::size_t a = starts[k];
    const std::size_t b = k + 1 < k_eff ? starts[k + 1] - 1 : d - 1;
    r.codebook.values.push_back(seg[a][b].center);
    for (std::size_t i = a; i <= b; ++i) r.assign.idx[order[i]] = static_cast<std::uint8_t>(k);
  }
  while (r.codebook.size() < m) r.codebook.values.push_back(r.codebook.values.back());
  r.objective = weighted_sse(pts, r.codebook, r.assign);
  return r;
}

QuantizedLayer squeezellm_quantize(const Matrix& W, const Matrix& diag_fisher, std::size_t bits,
                                   std::uint64_t seed, std::size_t layer_idx) {
  if (W.rows() != diag_fisher.rows() || W.cols() != diag_fisher.cols()) {
    fail(ErrorCode::DimensionMismatch, "diagonal Fisher must match weight shape");
  }
  const std::size_t m = codebook_size_for_bits(bits);
  QuantizedLayer q;
  q.layer_idx = layer_idx;
  q.d_in = W.rows();
  q.d_out = W.cols();
  q.channels.resize(W.cols());
  for (std::size_t j = 0; j < W.cols(); ++j) {
    WeightedPoints pts{W.col(j), diag_fisher.col(j)};
    for (double w : pts.wgt) {
      if (!(w >= 0.0)) fail(ErrorCode::InvalidSize, "diagonal Fisher must be >= 0");
    }
    if (std::all_of(pts.wgt.begin(), pts.wgt.end(), [](double w) { return w == 0.0; })) {
      std::fill(pts.wgt.begin(), pts.wgt.end(), 1.0);
    }
    ChannelQuantState& st = q.channels[j];
    if (sorted_distinct(pts.x).size() <= m) {
      st.codebook = padded_distinct_codebook(pts.x, m);
      st.assign = nearest_assignment(pts.x, st.codebook);
    } else {
      const Codebook init = kmeans_pp_init(pts, m, mix_seed(mix_seed(seed, layer_idx), j));
      LloydResult lr = lloyd(pts, init, kSqueezeLloydIters);
      st.codebook = std::move(lr.codebook);
      st.assign = std::move(lr.assign);
    }
    st.refresh();
  }
  return q;
}

QuantizedLayer rtn_quantize(const Matrix& W, std::size_t bits, std::size_t layer_idx) {
  const std::size_t m = codebook_size_for_bits(bits);
  QuantizedLayer q;
  q.layer_idx = layer_idx;
  q.d_in = W.rows();
  q.d_out = W.cols();
  q.channels.resize(W.cols());
  for (std::size_t j = 0; j < W.cols(); ++j) {
    const Vector w = W.col(j);
    ChannelQuantState& st = q.channels[j];
    if (sorted_distinct(w).size() <= m) {
      st.codebook = padded_distinct_codebook(w, m);
    } else {
      const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
      st.codebook.values.resize(m);
      const double step = (*hi - *lo) / static_cast<double>(m - 1);
      for (std::size_t k = 0; k < m; ++k) st.codebook.values[k] = *lo + step * static_cast<double>(k);
      st.codebook.values.back() = *hi;
    }
    st.assign = nearest_assignment(w, st.codebook);
    st.refresh();
  }
  return q;
}

}  // namespace gq
