// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "gq/calib_model.hpp"
#include "gq/oracle.hpp"
#include "gq/tensor_io.hpp"
#include "support.hpp"

using namespace gq;
using gq::test::error_code_of;

namespace {

constexpr const char* kInputsSha256 = "d0ad1b63e37913f4053c12e7a04e625434a769944be185b2633e600c751b217f";
constexpr const char* kTargetsSha256 = "0fb30e5740a6ffe44073abefcec753bb9a0356d4bfd9159c7d2ad8e7dd3043dd";

MlpModel toy_model(LossKind loss, std::uint64_t seed) { return MlpModel::random({8, 16, 16, 4}, loss, seed); }

}  // namespace

TEST_CASE("dataset generation is deterministic and matches the recorded checksum") {
  const Dataset a = gen_dataset(1, 256, 8, 4, LossKind::SoftmaxCrossEntropy);
  const Dataset b = gen_dataset(1, 256, 8, 4, LossKind::SoftmaxCrossEntropy);
  CHECK(a.inputs == b.inputs);
  CHECK(a.targets == b.targets);
  CHECK(a.seed == 1);
  CHECK(sha256_hex(encode_tensor(Tensor::from_matrix(a.inputs))) == kInputsSha256);
  CHECK(sha256_hex(encode_tensor(Tensor::from_matrix(a.targets))) == kTargetsSha256);
  // The input stream does not depend on the task.
  CHECK(gen_dataset(1, 256, 8, 4, LossKind::SquaredError).inputs == a.inputs);
  CHECK(gen_dataset(2, 256, 8, 4, LossKind::SoftmaxCrossEntropy).inputs != a.inputs);
}

TEST_CASE("dataset generation validates sizes and produces one-hot classification targets") {
  CHECK(error_code_of([] { gen_dataset(1, 0, 8, 4, LossKind::SquaredError); }) == ErrorCode::InvalidSize);
  const Dataset d = gen_dataset(3, 50, 5, 3, LossKind::SoftmaxCrossEntropy);
  CHECK(d.inputs.rows() == 50);
  CHECK(d.inputs.cols() == 5);
  CHECK(d.targets.cols() == 3);
  for (std::size_t i = 0; i < 50; ++i) {
    double sum = 0.0;
    for (double v : d.targets.row(i)) {
      CHECK((v == 0.0 || v == 1.0));
      sum += v;
    }
    CHECK(sum == 1.0);
  }
}

TEST_CASE("random models chain their layer widths") {
  const MlpModel m = toy_model(LossKind::SquaredError, 4);
  CHECK(m.dims() == std::vector<std::size_t>{8, 16, 16, 4});
  CHECK(m == toy_model(LossKind::SquaredError, 4));
  CHECK(error_code_of([] { MlpModel::random({8}, LossKind::SquaredError, 0); }) == ErrorCode::InvalidSize);
  MlpModel broken = m;
  broken.layers[1] = Matrix(15, 16);
  CHECK(error_code_of([&] { broken.validate(); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("training with zero steps returns the model unchanged") {
  const Dataset d = gen_dataset(1, 64, 8, 4, LossKind::SoftmaxCrossEntropy);
  const MlpModel m = toy_model(LossKind::SoftmaxCrossEntropy, 1);
  const TrainResult r = train(m, d, 0, 0.05);
  CHECK(r.model == m);
  CHECK(r.final_loss == r.initial_loss);
}

TEST_CASE("training on the seed-1 dataset more than halves the loss") {
  // Recorded ratio of final to initial loss for this setup: 0.144561.
  const Dataset d = gen_dataset(1, 256, 8, 4, LossKind::SoftmaxCrossEntropy);
  const TrainResult r = train(toy_model(LossKind::SoftmaxCrossEntropy, 1), d, 500, 0.05);
  CHECK(r.final_loss < 0.5 * r.initial_loss);
  CHECK(r.final_loss / r.initial_loss == doctest::Approx(0.144561).epsilon(1e-5));
  CHECK(r.final_loss == end_loss(r.model, d));
  CHECK(std::isfinite(r.final_grad_norm));
}

TEST_CASE("a huge learning rate diverges") {
  const Dataset d = gen_dataset(1, 64, 8, 4, LossKind::SquaredError);
  CHECK(error_code_of([&] { train(toy_model(LossKind::SquaredError, 1), d, 100, 1e6); }) == ErrorCode::DivergedLoss);
}

TEST_CASE("calibration of a one-layer linear model gives the analytic gradient") {
  Rng rng(8);
  MlpModel m;
  m.loss = LossKind::SquaredError;
  m.layers.push_back(test::random_matrix(3, 2, rng));
  Dataset d{test::random_matrix(5, 3, rng), test::random_matrix(5, 2, rng), 0};
  const auto calib = calibrate(m, d);
  REQUIRE(calib.size() == 1);
  CHECK(calib[0].X == d.inputs);
  const Matrix Z = matmul(d.inputs, m.layers[0]);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(calib[0].gradZ(i, j) == doctest::Approx(2.0 * (Z(i, j) - d.targets(i, j))).epsilon(1e-14));
}

TEST_CASE("calibration gradients match finite differences of the total loss") {
  const Dataset d = gen_dataset(2, 32, 8, 4, LossKind::SoftmaxCrossEntropy);
  const MlpModel m = toy_model(LossKind::SoftmaxCrossEntropy, 2);
  const auto res = oracle::fd_gradient_check(m, d, 10);
  CHECK(res.checked == 30);
  CHECK(res.max_rel_error <= 1e-5);
}

TEST_CASE("a zero final layer with zero targets has zero output gradient") {
  const Dataset base = gen_dataset(3, 16, 8, 4, LossKind::SquaredError);
  Dataset d{base.inputs, Matrix(16, 4), 3};
  MlpModel m = toy_model(LossKind::SquaredError, 3);
  m.layers.back() = Matrix(16, 4);
  const auto calib = calibrate(m, d);
  CHECK(max_abs(calib.back().gradZ) == 0.0);
  CHECK(calib.size() == 3);
  CHECK(calib[1].X.cols() == 16);
}

TEST_CASE("calibration rejects mismatched data") {
  const Dataset d = gen_dataset(1, 8, 5, 4, LossKind::SquaredError);
  CHECK(error_code_of([&] { calibrate(toy_model(LossKind::SquaredError, 0), d); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("end loss of a self-generated target set is zero") {
  const MlpModel m = toy_model(LossKind::SquaredError, 5);
  const Dataset base = gen_dataset(5, 20, 8, 4, LossKind::SquaredError);
  const Dataset d{base.inputs, forward(m, base.inputs), 5};
  CHECK(end_loss(m, d) == 0.0);
  MlpModel copy = m;
  CHECK(end_loss(copy, base) == end_loss(m, base));
}

TEST_CASE("end loss agrees with a scalar forward pass") {
  for (LossKind loss : {LossKind::SquaredError, LossKind::SoftmaxCrossEntropy}) {
    const MlpModel m = toy_model(loss, 6);
    const Dataset d = gen_dataset(6, 3, 8, 4, loss);
    const Vector losses = sample_losses(m, d);
    for (std::size_t i = 0; i < 3; ++i) {
      const Vector z = oracle::scalar_forward(m, d.inputs.row(i));
      double want = 0.0;
      if (loss == LossKind::SquaredError) {
        for (std::size_t k = 0; k < 4; ++k) want += (z[k] - d.targets(i, k)) * (z[k] - d.targets(i, k));
      } else {
        double se = 0.0;
        for (double v : z) se += std::exp(v);
        for (std::size_t k = 0; k < 4; ++k) want -= d.targets(i, k) * (z[k] - std::log(se));
      }
      CHECK(std::abs(losses[i] - want) <= 1e-12 * (1.0 + std::abs(want)));
    }
  }
}

TEST_CASE("loss tags round-trip") {
  CHECK(parse_loss(to_string(LossKind::SquaredError)) == LossKind::SquaredError);
  CHECK(parse_loss("softmax_cross_entropy") == LossKind::SoftmaxCrossEntropy);
  CHECK(error_code_of([] { parse_loss("hinge"); }) == ErrorCode::InvalidConfig);
  CHECK(parse_activation("tanh") == Activation::Tanh);
}
