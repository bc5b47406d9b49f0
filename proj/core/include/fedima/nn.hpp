// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

// Dense feed-forward networks with hand-written backpropagation.
//
// Parameters live in one flat vector. Layer l contributes its weight matrix
// (out x in, row-major) followed by its bias vector (out).

#ifndef FEDIMA_NN_HPP_
#define FEDIMA_NN_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "fedima/common.hpp"

namespace fedima {

enum class Activation { kRelu, kIdentity, kTanh };
enum class LossKind { kMse, kSoftmaxCrossEntropy };

class ModelSpec {
 public:
  /// `activations` has one entry per hidden layer (layer_widths.size() - 2).
  /// Throws ConfigError on an invalid architecture.
  ModelSpec(std::vector<std::size_t> layer_widths, std::vector<Activation> activations,
            LossKind loss);

  /// All hidden layers share `hidden`.
  static ModelSpec mlp(std::vector<std::size_t> layer_widths, Activation hidden, LossKind loss);

  const std::vector<std::size_t>& layer_widths() const { return widths_; }
  const std::vector<Activation>& activations() const { return activations_; }
  LossKind loss() const { return loss_; }
  std::uint64_t fingerprint() const { return fingerprint_; }

  std::size_t num_layers() const { return widths_.size() - 1; }
  std::size_t input_dim() const { return widths_.front(); }
  std::size_t output_dim() const { return widths_.back(); }
  std::size_t param_count() const;
  /// Offset of layer l's weight block in the flat vector; the bias follows it.
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;

 private:
  std::vector<std::size_t> widths_;
  std::vector<Activation> activations_;
  LossKind loss_;
  std::uint64_t fingerprint_;
};

struct ParamVector {
  std::vector<double> values;
  std::uint64_t spec_fingerprint = 0;

  std::size_t size() const { return values.size(); }
  bool operator==(const ParamVector&) const = default;
};

/// Throws InvariantError unless `params` belongs to `spec`.
void check_compatible(const ParamVector& params, const ModelSpec& spec);
/// Throws InvariantError unless both vectors share a fingerprint and length.
void check_compatible(const ParamVector& a, const ParamVector& b);
bool all_finite(const ParamVector& params);

// Learning-rate schedules. Rounds are zero-based.
struct ConstantLr {
  double lr;
};
struct ExponentialLr {
  double lr0;
  double decay;  // fraction removed per round, in [0, 1)
};
struct CyclicLr {
  double lr_hi;
  double lr_lo;
  int period;
};
struct EpochDecay {
  double lr;
  int epochs0;
  int rounds_per_drop;
};
using LrSchedule = std::variant<ConstantLr, ExponentialLr, CyclicLr, EpochDecay>;

void validate(const LrSchedule& schedule);
double schedule_lr(const LrSchedule& schedule, int round);
/// Local epochs for `round`; only EpochDecay changes the count.
int effective_epochs(const LrSchedule& schedule, int round, int base_epochs);

struct OptimizerState {
  std::vector<double> momentum_buffer;
  double momentum_coeff = 0.0;

  OptimizerState() = default;
  OptimizerState(std::size_t n, double momentum) : momentum_buffer(n, 0.0), momentum_coeff(momentum) {}
};

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

Matrix forward(const ParamVector& params, const ModelSpec& spec, const Matrix& inputs);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean loss over the batch and its exact gradient. For MSE the targets are
/// rows of regression targets (the per-sample loss sums over outputs); for
/// cross-entropy they are one-hot (or any probability) rows.
LossAndGrad loss_and_grad(const ParamVector& params, const ModelSpec& spec, const Matrix& inputs,
                          const Matrix& targets);
/// Cross-entropy convenience overload taking class indices.
LossAndGrad loss_and_grad(const ParamVector& params, const ModelSpec& spec, const Matrix& inputs,
                          std::span<const int> labels);

/// Mean loss only (no backward pass).
double loss_value(const ParamVector& params, const ModelSpec& spec, const Matrix& inputs,
                  const Matrix& targets);

/// buffer <- momentum * buffer + grad; params <- params - lr * buffer.
void sgd_step(ParamVector& params, std::span<const double> grad, double lr, OptimizerState& state);

Matrix one_hot(std::span<const int> labels, std::size_t num_classes);

}  // namespace fedima

#endif  // FEDIMA_NN_HPP_
