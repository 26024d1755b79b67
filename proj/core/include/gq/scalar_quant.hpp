// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gq/linalg.hpp"

namespace gq {

constexpr std::size_t kMaxCodebookSize = 256;

/// Codebook values. Producers in this library keep them sorted ascending;
/// duplicates can appear when a channel has fewer distinct weights than slots.
struct Codebook {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  bool operator==(const Codebook&) const = default;
};

/// Zero-based codebook index per weight.
struct Assignment {
  std::vector<std::uint8_t> idx;

  std::size_t size() const noexcept { return idx.size(); }
  bool operator==(const Assignment&) const = default;
};

struct WeightedPoints {
  Vector x;
  Vector wgt;

  std::size_t size() const noexcept { return x.size(); }
  void validate() const;
};

/// Quantization state of one output channel.
struct ChannelQuantState {
  Codebook codebook;
  Assignment assign;
  Vector w_hat;
  std::vector<double> objective_trace;

  /// Rebuild w_hat from codebook and assignment.
  void refresh();
  bool consistent() const;
};

struct QuantizedLayer {
  std::size_t layer_idx = 0;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::vector<ChannelQuantState> channels;

  /// Dequantized d_in x d_out weight matrix.
  Matrix weights() const;
};

std::size_t codebook_size_for_bits(std::size_t bits);

/// Index of the nearest codebook value. Exact-midpoint ties go to the smaller
/// value; equal values resolve to the lowest index.
std::size_t round_to_codebook(double x, const Codebook& cb);

/// Weighted k-means++ seeding: first center drawn proportionally to weight,
/// the rest by weight * D^2. Returns sorted distinct centers.
Codebook kmeans_pp_init(const WeightedPoints& pts, std::size_t m, std::uint64_t seed);

struct LloydResult {
  Codebook codebook;
  Assignment assign;
  /// Weighted SSE after the initial assignment and after every iteration.
  std::vector<double> sse_trace;
};

/// Alternates nearest assignment and weighted-mean center updates. Clusters
/// with zero total weight keep their previous center. Stops early at a fixed
/// point.
LloydResult lloyd(const WeightedPoints& pts, const Codebook& init, std::size_t iters);

struct KMeans1dResult {
  Codebook codebook;
  Assignment assign;
  double objective = 0.0;
};

/// Globally optimal weighted 1D k-means by dynamic programming over the
/// sorted points.
KMeans1dResult kmeans_1d_exact(const WeightedPoints& pts, std::size_t m);

/// sum_k wgt_k (x_k - cb[assign_k])^2
double weighted_sse(const WeightedPoints& pts, const Codebook& cb, const Assignment& assign);

/// Per-channel weighted k-means with diagonal-Fisher weights (k-means++ seed
/// then Lloyd). Seeds are derived per channel from `seed`.
QuantizedLayer squeezellm_quantize(const Matrix& W, const Matrix& diag_fisher, std::size_t bits,
                                   std::uint64_t seed, std::size_t layer_idx = 0);

/// Round-to-nearest on a per-channel uniform grid over [min, max]. Channels
/// with at most m distinct weights are represented exactly.
QuantizedLayer rtn_quantize(const Matrix& W, std::size_t bits, std::size_t layer_idx = 0);

/// Sorted distinct values padded to m entries by repeating the largest.
Codebook padded_distinct_codebook(std::span<const double> x, std::size_t m);

}  // namespace gq
