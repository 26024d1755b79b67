// SPDX-License-Identifier: Apache-2.0
#pragma once

// Layer-wise non-uniform quantization: alternating minimization between a
// closed-form per-channel codebook and cyclic coordinate descent (CD) over the
// assignments, for the quadratic objective (w - w_hat)^T H (w - w_hat).
//
// Every routine here treats its H argument as the final objective matrix;
// callers pass the damped Hessian. Channels of one block share H.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "gq/linalg.hpp"
#include "gq/scalar_quant.hpp"

namespace gq {

enum class CdEngine { Naive, ClosedForm, Precompute, LazyBatch };
std::string_view to_string(CdEngine e);
CdEngine parse_cd_engine(std::string_view s);

struct LnqConfig {
  std::size_t T = 2;  ///< alternations
  std::size_t K = 4;  ///< CD cycles per alternation
  std::size_t bits = 2;
  CdEngine cd_engine = CdEngine::LazyBatch;
  std::size_t lazy_batch_size = 128;  ///< clipped to d_in at run time
  double damping_rel = 1e-7;          ///< used when the orchestrator builds H
  std::uint64_t seed = 0;

  void validate() const;
};

/// Precomputed matrices for the vectorized CD engines. Htil is H with each
/// row divided by its diagonal entry; U and lower are its strict upper and
/// strict lower triangles. B is the d_in x channels correction buffer.
struct CdWorkspace {
  Matrix Htil;
  Matrix U;
  Matrix lower;
  Matrix B;

  /// Throws ZeroDiagonal when some H_ii <= 0.
  static CdWorkspace build(const Matrix& H, std::size_t channels);
};

/// Smallest gap between the nearest and second-nearest distinct codebook
/// value over every rounding decision made. Tie-free runs have min_margin > 0.
struct CdStats {
  double min_margin = std::numeric_limits<double>::infinity();
  std::size_t decisions = 0;

  void record(double target, const Codebook& cb);
};

struct ClosedFormCodebook {
  Codebook codebook;              ///< slot order matches the assignment indices
  std::vector<bool> empty_slots;  ///< true where no weight is assigned (value 0)
};

/// argmin_c (w - P c)^T H (w - P c) for H = L L^T, solved as the least-squares
/// problem min ||L^T P c - L^T w||. Unused slots are dropped from the solve
/// and set to 0, which is the minimum-norm choice.
ClosedFormCodebook codebook_closed_form(const CholeskyFactor& chol, std::span<const double> w,
                                        const Assignment& assign, std::size_t m);

/// Sorts a channel's codebook ascending (stable) and remaps its assignment.
void canonicalize(ChannelQuantState& state);

/// (w_hat - w)^T H (w_hat - w)
double channel_objective(const Matrix& H, std::span<const double> w, std::span<const double> w_hat);

/// Exhaustive single-coordinate update: evaluates the full objective for each
/// codebook value at coordinate i and keeps the best (ties: smaller value).
void cd_step_naive(const Matrix& H, std::span<const double> w, ChannelQuantState& state, std::size_t i);

/// Coordinate-wise closed form for row i across every channel:
/// round(W_ij - sum_{k != i} H_ik / H_ii (What_kj - W_kj)).
void cd_step_closed_form(const Matrix& H, const Matrix& W, std::vector<ChannelQuantState>& states,
                         std::size_t i, CdStats* stats = nullptr);

/// K cycles of cd_step_naive over ascending coordinates.
void cd_cycle_naive(const Matrix& H, const Matrix& W, std::vector<ChannelQuantState>& states, std::size_t K);

/// K cycles of cd_step_closed_form over ascending coordinates.
void cd_cycle_closed_form(const Matrix& H, const Matrix& W, std::vector<ChannelQuantState>& states,
                          std::size_t K, CdStats* stats = nullptr);

/// CD with the correction buffer B = U (What - W) computed once per cycle
/// and patched after each coordinate.
void cd_cycle_precompute(const Matrix& H, const Matrix& W, std::vector<ChannelQuantState>& states,
                         std::size_t K, CdStats* stats = nullptr);

/// Precompute engine with lazy batch updates: inside a block of batch_size
/// coordinates only the block's rows of B are patched; the rest of B gets a
/// single block update once the block is done.
void cd_cycle_lazy_batch(const Matrix& H, const Matrix& W, std::vector<ChannelQuantState>& states,
                         std::size_t K, std::size_t batch_size, CdStats* stats = nullptr);

void run_cd(CdEngine engine, const Matrix& H, const Matrix& W, std::vector<ChannelQuantState>& states,
            std::size_t K, std::size_t batch_size, CdStats* stats = nullptr);

/// Runs T alternations of {closed-form codebook, K CD cycles} followed by a
/// final codebook solve. W is d_in x channels; init supplies one feasible
/// state per channel with a 2^bits codebook. Each returned state's
/// objective_trace holds the objective at the start and after every half-step.
std::vector<ChannelQuantState> lnq_quantize(const Matrix& H_damped, const Matrix& W, const LnqConfig& cfg,
                                            std::vector<ChannelQuantState> init, CdStats* stats = nullptr);

}  // namespace gq
