// SPDX-License-Identifier: Apache-2.0
#pragma once

// Brute-force and analytic reference computations. Every routine here takes
// a path independent of the production code it is used to check, and is only
// practical at toy sizes.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gq/calib_model.hpp"
#include "gq/linalg.hpp"
#include "gq/scalar_quant.hpp"

namespace gq::oracle {

constexpr std::size_t kMaxEnumeration = 1'000'000;
constexpr std::size_t kMaxFisherWeights = 5000;

struct ExhaustiveResult {
  Assignment best_assign;
  Codebook best_codebook;
  double best_objective = 0.0;
  std::size_t enumerated = 0;
};

/// Global optimum of min_{P, c} (w - P c)^T H (w - P c) over all m^d_in
/// assignments, each with its optimal codebook. Ties keep the
/// lexicographically smallest assignment.
ExhaustiveResult exhaustive_lnq(const Matrix& H_damped, std::span<const double> w, std::size_t m);

/// Optimal weighted 1D k-means by enumerating every labelling of the points.
double exhaustive_kmeans_1d(const WeightedPoints& pts, std::size_t m);

/// Per-sample weight gradients dl_i/dW_l from a scalar forward/backward pass
/// for sample i. Result is indexed [layer][sample].
std::vector<std::vector<Matrix>> per_sample_weight_gradients(const MlpModel& model, const Dataset& data);

/// n * sum_l sum_j (w_j - what_j)^T F_j (w_j - what_j) with Fisher blocks
/// assembled from explicit per-sample gradients.
double full_fisher_quadratic(const MlpModel& model, const Dataset& data, const std::vector<Matrix>& W_hat_all);

struct FdCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

/// Central differences of end_loss against backprop on `samples` randomly
/// chosen weights per layer. Relative error uses max(|fd|, |bp|, floor) with
/// floor = 1e-6 * max |gradient| of that layer.
FdCheckResult fd_gradient_check(const MlpModel& model, const Dataset& data, std::size_t samples,
                                double h = 1e-5, std::uint64_t seed = 0);

/// Scalar forward pass of one sample, returning the network output.
Vector scalar_forward(const MlpModel& model, std::span<const double> input);

}  // namespace gq::oracle
