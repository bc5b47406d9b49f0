// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <random>

#include "fedima/checkpoint.hpp"
#include "fedima/nn.hpp"
#include "support/oracles.hpp"

namespace fedima {
namespace {

using testing::gradient_check;
using testing::random_matrix;

TEST(ModelSpec, LayoutAndCounts) {
  const auto spec = ModelSpec::mlp({4, 5, 3}, Activation::kRelu, LossKind::kMse);
  EXPECT_EQ(spec.num_layers(), 2u);
  EXPECT_EQ(spec.param_count(), 4u * 5 + 5 + 5 * 3 + 3);
  EXPECT_EQ(spec.weight_offset(0), 0u);
  EXPECT_EQ(spec.bias_offset(0), 20u);
  EXPECT_EQ(spec.weight_offset(1), 25u);
  EXPECT_EQ(spec.bias_offset(1), 40u);
}

TEST(ModelSpec, RejectsBadArchitectures) {
  EXPECT_THROW(ModelSpec({4}, {}, LossKind::kMse), ConfigError);
  EXPECT_THROW(ModelSpec({4, 0, 2}, {Activation::kRelu}, LossKind::kMse), ConfigError);
  EXPECT_THROW(ModelSpec({4, 3, 2}, {}, LossKind::kMse), ConfigError);
}

TEST(ModelSpec, FingerprintTracksArchitecture) {
  const auto a = ModelSpec::mlp({4, 5, 3}, Activation::kRelu, LossKind::kMse);
  const auto b = ModelSpec::mlp({4, 5, 3}, Activation::kRelu, LossKind::kMse);
  const auto c = ModelSpec::mlp({4, 6, 3}, Activation::kRelu, LossKind::kMse);
  const auto d = ModelSpec::mlp({4, 5, 3}, Activation::kIdentity, LossKind::kMse);
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_NE(a.fingerprint(), c.fingerprint());
  EXPECT_NE(a.fingerprint(), d.fingerprint());
}

TEST(InitParams, DeterministicAndBounded) {
  const auto spec = ModelSpec::mlp({9, 4, 2}, Activation::kRelu, LossKind::kMse);
  const auto p = init_params(spec, 5);
  EXPECT_EQ(p, init_params(spec, 5));
  EXPECT_NE(p, init_params(spec, 6));
  for (std::size_t i = 0; i < 36; ++i) EXPECT_LE(std::abs(p.values[i]), 1.0 / 3.0);
  for (std::size_t i = spec.bias_offset(0); i < spec.weight_offset(1); ++i) EXPECT_EQ(p.values[i], 0.0);
}

TEST(Forward, LinearModelMatchesMatrixProduct) {
  const auto spec = ModelSpec::mlp({2, 2}, Activation::kIdentity, LossKind::kMse);
  // W = [[1, 2], [3, 4]], b = [0.5, -1]
  ParamVector p{{1, 2, 3, 4, 0.5, -1}, spec.fingerprint()};
  Matrix x(1, 2);
  x << 1.0, -1.0;
  const Matrix y = forward(p, spec, x);
  EXPECT_DOUBLE_EQ(y(0, 0), -0.5);
  EXPECT_DOUBLE_EQ(y(0, 1), -2.0);
}

TEST(Forward, RejectsForeignParameters) {
  const auto spec = ModelSpec::mlp({2, 2}, Activation::kIdentity, LossKind::kMse);
  const auto other = ModelSpec::mlp({2, 3}, Activation::kIdentity, LossKind::kMse);
  EXPECT_THROW(forward(init_params(other, 1), spec, Matrix::Zero(1, 2)), InvariantError);
  EXPECT_THROW(forward(init_params(spec, 1), spec, Matrix::Zero(1, 3)), ConfigError);
}

class GradientOracle : public ::testing::TestWithParam<int> {};

TEST_P(GradientOracle, MatchesCentralDifferences) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()));
  for (const auto act : {Activation::kRelu, Activation::kTanh, Activation::kIdentity}) {
  for (const auto loss : {LossKind::kMse, LossKind::kSoftmaxCrossEntropy}) {
    const auto spec = ModelSpec::mlp({3, 4, 4, 2}, act, loss);
    // Zero biases can put a hidden unit exactly on the ReLU kink; jitter them off it.
    const auto params = testing::perturbed(init_params(spec, 100 + GetParam()), rng, 0.1);
    const Matrix x = random_matrix(rng, 6, 3);
    std::vector<int> labels{0, 1, 1, 0, 1, 0};
    const Matrix y = loss == LossKind::kMse ? random_matrix(rng, 6, 2) : one_hot(labels, 2);
    EXPECT_LT(gradient_check(spec, params, x, y), 1e-4);
  }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradientOracle, ::testing::Range(1, 6));

TEST(LossAndGrad, LabelOverloadMatchesOneHot) {
  const auto spec = ModelSpec::mlp({2, 3}, Activation::kIdentity, LossKind::kSoftmaxCrossEntropy);
  const auto p = init_params(spec, 3);
  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(rng, 4, 2);
  const std::vector<int> labels{0, 2, 1, 2};
  const auto a = loss_and_grad(p, spec, x, labels);
  const auto b = loss_and_grad(p, spec, x, one_hot(labels, 3));
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad, b.grad);
}

TEST(LossAndGrad, MseIsMeanOverBatchSummedOverOutputs) {
  const auto spec = ModelSpec::mlp({1, 2}, Activation::kIdentity, LossKind::kMse);
  ParamVector p{{0, 0, 0, 0}, spec.fingerprint()};
  Matrix x = Matrix::Ones(2, 1);
  Matrix y(2, 2);
  y << 1, 2, 3, 4;
  EXPECT_DOUBLE_EQ(loss_value(p, spec, x, y), (1 + 4 + 9 + 16) / 2.0);
}

TEST(Sgd, MomentumRecursion) {
  ParamVector p{{1.0}, 0};
  OptimizerState st(1, 0.5);
  const std::vector<double> g{2.0};
  sgd_step(p, g, 0.1, st);  // buffer 2
  EXPECT_DOUBLE_EQ(p.values[0], 0.8);
  sgd_step(p, g, 0.1, st);  // buffer 3
  EXPECT_DOUBLE_EQ(p.values[0], 0.5);
}

TEST(Schedules, Values) {
  EXPECT_DOUBLE_EQ(schedule_lr(ConstantLr{0.1}, 7), 0.1);
  EXPECT_DOUBLE_EQ(schedule_lr(ExponentialLr{0.1, 0.5}, 2), 0.025);
  const CyclicLr cyc{1e-2, 1e-4, 4};
  EXPECT_DOUBLE_EQ(schedule_lr(cyc, 0), 1e-2);
  EXPECT_NEAR(schedule_lr(cyc, 2), 1e-3, 1e-15);
  EXPECT_DOUBLE_EQ(schedule_lr(cyc, 4), 1e-2);
  const EpochDecay ed{0.05, 3, 10};
  EXPECT_EQ(effective_epochs(ed, 0, 9), 3);
  EXPECT_EQ(effective_epochs(ed, 10, 9), 2);
  EXPECT_EQ(effective_epochs(ed, 100, 9), 1);
  EXPECT_EQ(effective_epochs(ConstantLr{0.1}, 100, 9), 9);
}

TEST(Schedules, Validation) {
  EXPECT_THROW(validate(ConstantLr{0.0}), ConfigError);
  EXPECT_THROW(validate(ExponentialLr{0.1, 1.0}), ConfigError);
  EXPECT_THROW(validate(CyclicLr{0.1, 0.01, 0}), ConfigError);
  EXPECT_THROW(validate(EpochDecay{0.1, 0, 1}), ConfigError);
  EXPECT_NO_THROW(validate(ExponentialLr{0.1, 0.0}));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto spec = ModelSpec::mlp({3, 4, 2}, Activation::kRelu, LossKind::kMse);
  auto p = init_params(spec, 9);
  p.values[0] = -0.0;
  p.values[1] = 1e-310;
  const auto back = decode_checkpoint(encode_checkpoint(p));
  EXPECT_EQ(back.spec_fingerprint, p.spec_fingerprint);
  ASSERT_EQ(back.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.values[i]), std::bit_cast<std::uint64_t>(p.values[i]));
  }
}

TEST(Checkpoint, RejectsCorruptAndForeign) {
  const auto spec = ModelSpec::mlp({3, 4, 2}, Activation::kRelu, LossKind::kMse);
  const auto other = ModelSpec::mlp({3, 5, 2}, Activation::kRelu, LossKind::kMse);
  auto bytes = encode_checkpoint(init_params(spec, 1));
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), InvariantError);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), InvariantError);

  const auto path = std::filesystem::temp_directory_path() / "fedima_nn_test.fima";
  save_checkpoint(path, init_params(spec, 1));
  EXPECT_NO_THROW(load_checkpoint(path, spec));
  EXPECT_THROW(load_checkpoint(path, other), InvariantError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
}

}  // namespace
}  // namespace fedima
