// SPDX-License-Identifier: Apache-2.0
#pragma once

// Property checks built on the oracles. Each returns the worst observed
// metric next to the pass/fail verdict so callers can print or assert on it.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gq/calib_model.hpp"
#include "gq/lnq.hpp"
#include "gq/random.hpp"

namespace gq::verify {

struct PropertyResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;  ///< property-specific worst metric
  std::size_t instances = 0;
  std::string detail;
};

/// Random SPD matrix (A^T A / rows + 0.05 I, A Gaussian with d + 2 rows).
Matrix random_spd(std::size_t d, Rng& rng);

struct LnqInstance {
  Matrix H;
  Matrix W;
  std::vector<ChannelQuantState> init;
};

/// Gaussian weights, random SPD H and a feasible start: a sorted random
/// codebook of m values per channel with nearest-value assignments.
LnqInstance random_lnq_instance(std::size_t d_in, std::size_t m, std::size_t channels, std::uint64_t seed);

struct ToySetup {
  MlpModel model;
  Dataset data;
};

/// The standard toy: tanh MLP 8 -> 16 -> 16 -> 4, 256 samples, softmax cross
/// entropy, trained 500 full-batch steps at lr 0.05 from seed-derived init.
ToySetup standard_toy(std::uint64_t seed, std::size_t n = 256);

PropertyResult check_fisher_identity(std::uint64_t seed);
PropertyResult check_lnq_descent(std::size_t instances, std::uint64_t seed);
PropertyResult check_engine_equivalence(std::size_t instances, std::uint64_t seed);
PropertyResult check_oracle_bounds(std::size_t per_dim, std::uint64_t seed);
PropertyResult check_kmeans_exact(std::size_t instances, std::uint64_t seed);
PropertyResult check_hessian_consistency(std::uint64_t seed);
PropertyResult check_fd_gradients(std::uint64_t seed);
PropertyResult check_scale_invariance(std::size_t instances, std::uint64_t seed);
PropertyResult check_cholesky_reconstruction(std::size_t instances, std::uint64_t seed);
PropertyResult check_least_squares_optimality(std::size_t instances, std::uint64_t seed);

/// Runs every check above at its default size and prints one PASS/FAIL line
/// each. Returns true when all pass.
bool run_all(std::ostream& os, std::uint64_t seed);

}  // namespace gq::verify
