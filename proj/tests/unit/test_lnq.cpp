// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "gq/lnq.hpp"
#include "gq/oracle.hpp"
#include "gq/verify.hpp"
#include "support.hpp"

using namespace gq;
using gq::test::error_code_of;

namespace {

ChannelQuantState make_state(Vector codebook, std::vector<std::uint8_t> idx) {
  ChannelQuantState s;
  s.codebook.values = std::move(codebook);
  s.assign.idx = std::move(idx);
  s.refresh();
  return s;
}

std::vector<Assignment> assignments(const std::vector<ChannelQuantState>& states) {
  std::vector<Assignment> out;
  for (const auto& s : states) out.push_back(s.assign);
  return out;
}

Matrix single_column(const Vector& w) {
  Matrix W(w.size(), 1);
  W.set_col(0, w);
  return W;
}

}  // namespace

TEST_CASE("engine and config tags") {
  for (CdEngine e : {CdEngine::Naive, CdEngine::ClosedForm, CdEngine::Precompute, CdEngine::LazyBatch}) {
    CHECK(parse_cd_engine(to_string(e)) == e);
  }
  CHECK(error_code_of([] { parse_cd_engine("gauss_seidel"); }) == ErrorCode::InvalidConfig);
  LnqConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.T = 0;
  CHECK(error_code_of([&] { cfg.validate(); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("closed-form codebook special cases") {
  Rng rng(3);
  const Matrix H = verify::random_spd(4, rng);
  const CholeskyFactor chol = cholesky(H, 0.0);
  const Vector w{0.3, -1.2, 2.5, 0.7};

  // One slot per weight reproduces w.
  const auto exact = codebook_closed_form(chol, w, Assignment{{0, 1, 2, 3}}, 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(exact.codebook[i] == doctest::Approx(w[i]).epsilon(1e-12));

  // With H = I each value is the mean of its slot; unused slots are zero.
  const auto means = codebook_closed_form(cholesky(Matrix::identity(4), 0.0), w, Assignment{{0, 0, 2, 0}}, 4);
  CHECK(means.codebook[0] == doctest::Approx((0.3 - 1.2 + 0.7) / 3).epsilon(1e-14));
  CHECK(means.codebook[2] == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(means.codebook[1] == 0.0);
  CHECK(means.codebook[3] == 0.0);
  CHECK(means.empty_slots == std::vector<bool>{false, true, false, true});

  CHECK(error_code_of([&] { codebook_closed_form(chol, w, Assignment{{0, 1, 4, 0}}, 4); }) ==
        ErrorCode::DimensionMismatch);
}

TEST_CASE("closed-form codebook matches the normal equations") {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const Matrix H = verify::random_spd(6, rng);
    Vector w(6);
    for (double& v : w) v = rng.normal();
    const Assignment a{{0, 1, 2, 0, 1, 2}};
    const auto got = codebook_closed_form(cholesky(H, 0.0), w, a, 3);
    // (P^T H P) c = P^T H w
    Matrix P(6, 3);
    for (std::size_t i = 0; i < 6; ++i) P(i, a.idx[i]) = 1.0;
    const Matrix PtHP = matmul(transpose(P), matmul(H, P));
    const Vector rhs = matvec_transposed(P, matvec(H, w));
    const Vector c = least_squares(PtHP, rhs);
    for (std::size_t q = 0; q < 3; ++q) CHECK(std::abs(got.codebook[q] - c[q]) <= 1e-8 * (1 + std::abs(c[q])));
  }
}

TEST_CASE("canonicalize sorts the codebook and keeps the reconstruction") {
  ChannelQuantState s = make_state({3, -1, 2, -1}, {0, 1, 2, 3, 0});
  const Vector before = s.w_hat;
  canonicalize(s);
  CHECK(s.codebook.values == Vector{-1, -1, 2, 3});
  CHECK(s.w_hat == before);
  CHECK(s.assign.idx == std::vector<std::uint8_t>{3, 0, 2, 1, 3});
}

TEST_CASE("naive CD step") {
  // Diagonal H: the best value is the nearest one.
  const Matrix H{{2, 0, 0}, {0, 1, 0}, {0, 0, 3}};
  const Vector w{0.2, 0.9, -0.4};
  ChannelQuantState s = make_state({-0.5, 0.0, 1.0}, {0, 0, 0});
  for (std::size_t i = 0; i < 3; ++i) cd_step_naive(H, w, s, i);
  CHECK(s.assign.idx == std::vector<std::uint8_t>{1, 2, 0});

  // Already optimal: nothing changes.
  const double f = channel_objective(H, w, s.w_hat);
  cd_step_naive(H, w, s, 1);
  CHECK(channel_objective(H, w, s.w_hat) == f);
  CHECK(s.assign.idx == std::vector<std::uint8_t>{1, 2, 0});
}

TEST_CASE("naive CD on 3-dim binary instances reaches the global optimum or a lower local minimum") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = verify::random_lnq_instance(3, 2, 1, seed);
    auto states = inst.init;
    const double start = channel_objective(inst.H, inst.W.col(0), states[0].w_hat);
    cd_cycle_naive(inst.H, inst.W, states, 10);
    const double end = channel_objective(inst.H, inst.W.col(0), states[0].w_hat);
    CHECK(end <= start);
    // Exhaustive search over the 8 labelings with this fixed codebook.
    double best = INFINITY;
    for (int mask = 0; mask < 8; ++mask) {
      Vector wh(3);
      for (int i = 0; i < 3; ++i) wh[i] = states[0].codebook[(mask >> i) & 1];
      best = std::min(best, channel_objective(inst.H, inst.W.col(0), wh));
    }
    CHECK(end >= best);
    // A CD fixed point: no single coordinate change helps.
    for (std::size_t i = 0; i < 3; ++i) {
      for (double v : states[0].codebook.values) {
        Vector wh = states[0].w_hat;
        wh[i] = v;
        CHECK(channel_objective(inst.H, inst.W.col(0), wh) >= end - 1e-12 * (1 + end));
      }
    }
  }
}

TEST_CASE("closed-form CD step") {
  // Zero error so far: rounding of W itself.
  Rng rng(9);
  const Matrix H = verify::random_spd(4, rng);
  const Matrix W{{0.1, 2.2}, {0.9, -0.1}, {-1.4, 0.6}, {0.45, 1.6}};
  std::vector<ChannelQuantState> states;
  for (std::size_t j = 0; j < 2; ++j) {
    ChannelQuantState s = make_state({-1, 0, 1, 2}, {0, 0, 0, 0});
    s.w_hat = W.col(j);  // pretend the current reconstruction is exact
    states.push_back(s);
  }
  for (std::size_t j = 0; j < 2; ++j) {
    auto copy = states;
    cd_step_closed_form(H, W, copy, 2);
    CHECK(copy[j].assign.idx[2] == round_to_codebook(W(2, j), copy[j].codebook));
  }

  Matrix Z = H;
  Z(1, 1) = 0.0;
  auto s2 = states;
  CHECK(error_code_of([&] { cd_step_closed_form(Z, W, s2, 1); }) == ErrorCode::ZeroDiagonal);
}

TEST_CASE("closed-form CD step agrees with the naive step on tie-free coordinates") {
  Rng rng(77);
  int compared = 0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t d = 2 + rng.below(7);
    const std::size_t m = 2 + rng.below(3);
    const auto inst = verify::random_lnq_instance(d, m, 1, mix_seed(77, t));
    const std::size_t i = rng.below(d);
    auto a = inst.init;
    auto b = inst.init;
    CdStats stats;
    cd_step_closed_form(inst.H, inst.W, a, i, &stats);
    if (stats.min_margin < 1e-6) continue;
    cd_step_naive(inst.H, inst.W.col(0), b[0], i);
    CHECK(a[0].assign == b[0].assign);
    ++compared;
  }
  CHECK(compared > 400);
}

TEST_CASE("precompute engine") {
  const auto inst = verify::random_lnq_instance(6, 4, 2, 1);
  auto states = inst.init;
  cd_cycle_precompute(inst.H, inst.W, states, 0);
  CHECK(assignments(states) == assignments(inst.init));

  // Diagonal H: one cycle lands on round-to-nearest.
  Matrix D(6, 6);
  for (std::size_t i = 0; i < 6; ++i) D(i, i) = 1.0 + static_cast<double>(i);
  auto diag = inst.init;
  cd_cycle_precompute(D, inst.W, diag, 1);
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t i = 0; i < 6; ++i)
      CHECK(diag[j].assign.idx[i] == round_to_codebook(inst.W(i, j), diag[j].codebook));
}

TEST_CASE("precompute and lazy-batch engines match sequential closed-form CD") {
  int compared = 0;
  for (std::uint64_t seed = 0; compared < 100 && seed < 400; ++seed) {
    Rng rng(seed);
    const std::size_t d = 2 + rng.below(15);
    const auto inst = verify::random_lnq_instance(d, 2 + rng.below(3), 1 + rng.below(3), mix_seed(seed, 5));
    auto ref = inst.init;
    CdStats stats;
    cd_cycle_closed_form(inst.H, inst.W, ref, 3, &stats);
    if (stats.min_margin < 1e-6) continue;
    auto pre = inst.init;
    cd_cycle_precompute(inst.H, inst.W, pre, 3);
    CHECK(assignments(pre) == assignments(ref));
    for (std::size_t b : {std::size_t{1}, std::size_t{4}, d, d + 5}) {
      auto lazy = inst.init;
      cd_cycle_lazy_batch(inst.H, inst.W, lazy, 3, b);
      CHECK(assignments(lazy) == assignments(ref));
    }
    ++compared;
  }
  CHECK(compared == 100);
}

TEST_CASE("lazy batch with 16 inputs and batch 4 matches the precompute engine") {
  int compared = 0;
  for (std::uint64_t seed = 0; compared < 100 && seed < 400; ++seed) {
    const auto inst = verify::random_lnq_instance(16, 4, 2, mix_seed(seed, 16));
    auto pre = inst.init;
    CdStats stats;
    cd_cycle_precompute(inst.H, inst.W, pre, 2, &stats);
    if (stats.min_margin < 1e-6) continue;
    auto lazy = inst.init;
    cd_cycle_lazy_batch(inst.H, inst.W, lazy, 2, 4);
    CHECK(assignments(lazy) == assignments(pre));
    ++compared;
  }
  CHECK(compared == 100);
  const auto inst = verify::random_lnq_instance(4, 2, 1, 0);
  auto s = inst.init;
  CHECK(error_code_of([&] { cd_cycle_lazy_batch(inst.H, inst.W, s, 1, 0); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("LNQ on exactly representable weights reaches zero and stays there") {
  const Vector w{-1, 2, -1, 0.5, 2, 3};
  Rng rng(2);
  const Matrix H = verify::random_spd(6, rng);
  LnqConfig cfg;
  cfg.bits = 2;
  cfg.T = 3;
  // Start from a deliberately poor codebook with the right partition.
  std::vector<ChannelQuantState> init{make_state({-2, 0, 1, 4}, {0, 3, 0, 1, 3, 2})};
  const auto out = lnq_quantize(H, single_column(w), cfg, init);
  const auto& trace = out[0].objective_trace;
  REQUIRE(trace.size() == 2 * cfg.T + 2);
  CHECK(trace[0] > 0.0);
  for (std::size_t k = 1; k < trace.size(); ++k) CHECK(trace[k] <= 1e-20);
  for (std::size_t i = 0; i < 6; ++i) CHECK(out[0].w_hat[i] == doctest::Approx(w[i]).epsilon(1e-12));
}

TEST_CASE("LNQ stays within the exhaustive bounds on 4-dim binary instances") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = verify::random_lnq_instance(4, 2, 1, mix_seed(seed, 4));
    LnqConfig cfg;
    cfg.bits = 1;
    cfg.T = 3;
    cfg.K = 4;
    const auto out = lnq_quantize(inst.H, inst.W, cfg, inst.init);
    const auto ex = oracle::exhaustive_lnq(inst.H, inst.W.col(0), 2);
    const double f = out[0].objective_trace.back();
    CHECK(f >= ex.best_objective - 1e-12 * (1 + ex.best_objective));
    CHECK(f <= out[0].objective_trace.front() + 1e-12 * (1 + f));
    CHECK(out[0].consistent());
  }
}

TEST_CASE("LNQ engines agree on tie-free instances") {
  int compared = 0;
  for (std::uint64_t seed = 0; compared < 30 && seed < 200; ++seed) {
    const auto inst = verify::random_lnq_instance(10, 4, 3, mix_seed(seed, 99));
    LnqConfig cfg;
    cfg.cd_engine = CdEngine::ClosedForm;
    CdStats stats;
    const auto ref = lnq_quantize(inst.H, inst.W, cfg, inst.init, &stats);
    if (stats.min_margin < 1e-6) continue;
    for (CdEngine e : {CdEngine::Naive, CdEngine::Precompute, CdEngine::LazyBatch}) {
      cfg.cd_engine = e;
      cfg.lazy_batch_size = 3;
      CHECK(assignments(lnq_quantize(inst.H, inst.W, cfg, inst.init)) == assignments(ref));
    }
    ++compared;
  }
  CHECK(compared == 30);
}

TEST_CASE("LNQ input validation") {
  const auto inst = verify::random_lnq_instance(4, 4, 1, 0);
  LnqConfig cfg;
  cfg.bits = 1;  // init codebooks have 4 values
  CHECK(error_code_of([&] { lnq_quantize(inst.H, inst.W, cfg, inst.init); }) == ErrorCode::InvalidConfig);
  cfg.bits = 2;
  auto bad = inst.init;
  bad[0].w_hat[0] += 1.0;
  CHECK(error_code_of([&] { lnq_quantize(inst.H, inst.W, cfg, bad); }) == ErrorCode::InvalidConfig);
  CHECK(error_code_of([&] { lnq_quantize(Matrix::identity(3), inst.W, cfg, inst.init); }) ==
        ErrorCode::DimensionMismatch);
  Matrix singular(4, 4);
  CHECK(error_code_of([&] { lnq_quantize(singular, inst.W, cfg, inst.init); }) == ErrorCode::NotPositiveDefinite);
}
