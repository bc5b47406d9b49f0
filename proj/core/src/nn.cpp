// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedima/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace fedima {
namespace {

using ConstMatrixMap = Eigen::Map<const Matrix>;
using ConstVectorMap = Eigen::Map<const Eigen::RowVectorXd>;

std::uint64_t compute_fingerprint(const std::vector<std::size_t>& widths,
                                  const std::vector<Activation>& activations, LossKind loss) {
  Fnv1a h;
  h.update("fedima.ModelSpec.v1");
  h.update_u64(widths.size());
  for (auto w : widths) h.update_u64(w);
  h.update_u64(activations.size());
  for (auto a : activations) h.update_u64(static_cast<std::uint64_t>(a));
  h.update_u64(static_cast<std::uint64_t>(loss));
  return h.digest();
}

void apply_activation(Activation act, Matrix& z) {
  if (act == Activation::kRelu) {
    z = z.cwiseMax(0.0);
  } else if (act == Activation::kTanh) {
    z = z.array().tanh().matrix();
  }
}

bool has_nan(const Matrix& m) { return !m.allFinite(); }

// Stores every layer's input so the backward pass can reuse it.
struct Trace {
  std::vector<Matrix> layer_inputs;  // activations feeding layer l
  std::vector<Matrix> pre_acts;      // z_l = a_l W_l^T + b_l
  Matrix output;
};

Trace run_forward(const ParamVector& params, const ModelSpec& spec, const Matrix& inputs,
                  bool keep_trace) {
  Trace trace;
  Matrix a = inputs;
  const auto& widths = spec.layer_widths();
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto in = static_cast<Eigen::Index>(widths[l]);
    const auto out = static_cast<Eigen::Index>(widths[l + 1]);
    ConstMatrixMap w(params.values.data() + spec.weight_offset(l), out, in);
    ConstVectorMap b(params.values.data() + spec.bias_offset(l), out);
    Matrix z = a * w.transpose();
    z.rowwise() += b;
    if (keep_trace) {
      trace.layer_inputs.push_back(std::move(a));
      trace.pre_acts.push_back(z);
    }
    if (l + 1 < spec.num_layers()) apply_activation(spec.activations()[l], z);
    a = std::move(z);
  }
  trace.output = std::move(a);
  return trace;
}

// Row-wise numerically stable log-softmax.
Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

void check_batch(const ModelSpec& spec, const Matrix& inputs, const Matrix& targets) {
  if (inputs.rows() == 0) throw ConfigError("loss_and_grad: empty batch");
  if (static_cast<std::size_t>(inputs.cols()) != spec.input_dim()) {
    throw ConfigError("input width " + std::to_string(inputs.cols()) + " != model input dim " +
                      std::to_string(spec.input_dim()));
  }
  if (targets.rows() != inputs.rows() ||
      static_cast<std::size_t>(targets.cols()) != spec.output_dim()) {
    throw ConfigError("target shape does not match batch/model output");
  }
  if (has_nan(inputs)) throw ConfigError("loss_and_grad: non-finite value in inputs");
}

// Mean loss and dLoss/dOutput for the whole batch.
double output_loss(LossKind kind, const Matrix& out, const Matrix& targets, Matrix* d_out) {
  const double n = static_cast<double>(out.rows());
  if (kind == LossKind::kMse) {
    Matrix residual = out - targets;
    if (d_out) *d_out = (2.0 / n) * residual;
    return residual.array().square().sum() / n;
  }
  Matrix logp = log_softmax(out);
  if (d_out) *d_out = (logp.array().exp().matrix() - targets) / n;
  return -(targets.array() * logp.array()).sum() / n;
}

}  // namespace

ModelSpec::ModelSpec(std::vector<std::size_t> layer_widths, std::vector<Activation> activations,
                     LossKind loss)
    : widths_(std::move(layer_widths)), activations_(std::move(activations)), loss_(loss) {
  if (widths_.size() < 2) throw ConfigError("ModelSpec needs at least input and output widths");
  if (std::any_of(widths_.begin(), widths_.end(), [](std::size_t w) { return w == 0; })) {
    throw ConfigError("ModelSpec layer widths must be >= 1");
  }
  if (activations_.size() != widths_.size() - 2) {
    throw ConfigError("ModelSpec needs one activation per hidden layer");
  }
  fingerprint_ = compute_fingerprint(widths_, activations_, loss_);
}

ModelSpec ModelSpec::mlp(std::vector<std::size_t> layer_widths, Activation hidden, LossKind loss) {
  const std::size_t hidden_layers = layer_widths.size() >= 2 ? layer_widths.size() - 2 : 0;
  return ModelSpec(std::move(layer_widths), std::vector<Activation>(hidden_layers, hidden), loss);
}

std::size_t ModelSpec::param_count() const { return weight_offset(num_layers()); }

std::size_t ModelSpec::weight_offset(std::size_t layer) const {
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layer; ++l) offset += widths_[l] * widths_[l + 1] + widths_[l + 1];
  return offset;
}

std::size_t ModelSpec::bias_offset(std::size_t layer) const {
  return weight_offset(layer) + widths_[layer] * widths_[layer + 1];
}

void check_compatible(const ParamVector& params, const ModelSpec& spec) {
  if (params.spec_fingerprint != spec.fingerprint()) {
    throw InvariantError("parameter fingerprint does not match model spec");
  }
  if (params.size() != spec.param_count()) {
    throw InvariantError("parameter count " + std::to_string(params.size()) +
                         " != model parameter count " + std::to_string(spec.param_count()));
  }
}

void check_compatible(const ParamVector& a, const ParamVector& b) {
  if (a.spec_fingerprint != b.spec_fingerprint || a.size() != b.size()) {
    throw InvariantError("parameter vectors belong to different models");
  }
}

bool all_finite(const ParamVector& params) {
  return std::all_of(params.values.begin(), params.values.end(),
                     [](double v) { return std::isfinite(v); });
}

void validate(const LrSchedule& schedule) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ConstantLr>) {
          if (!(s.lr > 0)) throw ConfigError("constant lr must be > 0");
        } else if constexpr (std::is_same_v<T, ExponentialLr>) {
          if (!(s.lr0 > 0)) throw ConfigError("exponential lr0 must be > 0");
          if (!(s.decay >= 0 && s.decay < 1)) throw ConfigError("exponential decay must be in [0,1)");
        } else if constexpr (std::is_same_v<T, CyclicLr>) {
          if (!(s.lr_hi > 0 && s.lr_lo > 0)) throw ConfigError("cyclic lr bounds must be > 0");
          if (s.period < 1) throw ConfigError("cyclic period must be >= 1");
        } else {
          if (!(s.lr > 0)) throw ConfigError("epoch-decay lr must be > 0");
          if (s.epochs0 < 1) throw ConfigError("epoch-decay epochs0 must be >= 1");
          if (s.rounds_per_drop < 1) throw ConfigError("epoch-decay rounds_per_drop must be >= 1");
        }
      },
      schedule);
}

double schedule_lr(const LrSchedule& schedule, int round) {
  round = std::max(round, 0);
  return std::visit(
      [round](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ConstantLr>) {
          return s.lr;
        } else if constexpr (std::is_same_v<T, ExponentialLr>) {
          return s.lr0 * std::pow(1.0 - s.decay, round);
        } else if constexpr (std::is_same_v<T, CyclicLr>) {
          // Log-linear from lr_hi down towards lr_lo, restarting each period.
          const double phase = static_cast<double>(round % s.period) / s.period;
          return std::exp(std::log(s.lr_hi) + phase * (std::log(s.lr_lo) - std::log(s.lr_hi)));
        } else {
          return s.lr;
        }
      },
      schedule);
}

int effective_epochs(const LrSchedule& schedule, int round, int base_epochs) {
  if (const auto* s = std::get_if<EpochDecay>(&schedule)) {
    return std::max(1, s->epochs0 - std::max(round, 0) / s->rounds_per_drop);
  }
  return base_epochs;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamVector p;
  p.spec_fingerprint = spec.fingerprint();
  p.values.assign(spec.param_count(), 0.0);
  std::mt19937_64 rng(seed);
  const auto& widths = spec.layer_widths();
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t begin = spec.weight_offset(l);
    const std::size_t end = spec.bias_offset(l);
    for (std::size_t i = begin; i < end; ++i) p.values[i] = dist(rng);
  }
  return p;
}

Matrix forward(const ParamVector& params, const ModelSpec& spec, const Matrix& inputs) {
  check_compatible(params, spec);
  if (static_cast<std::size_t>(inputs.cols()) != spec.input_dim()) {
    throw ConfigError("input width " + std::to_string(inputs.cols()) + " != model input dim " +
                      std::to_string(spec.input_dim()));
  }
  return run_forward(params, spec, inputs, false).output;
}

LossAndGrad loss_and_grad(const ParamVector& params, const ModelSpec& spec, const Matrix& inputs,
                          const Matrix& targets) {
  check_compatible(params, spec);
  check_batch(spec, inputs, targets);

  Trace trace = run_forward(params, spec, inputs, true);
  LossAndGrad result;
  result.grad.assign(params.size(), 0.0);
  Matrix dz;
  result.loss = output_loss(spec.loss(), trace.output, targets, &dz);

  const auto& widths = spec.layer_widths();
  for (std::size_t l = spec.num_layers(); l-- > 0;) {
    const auto in = static_cast<Eigen::Index>(widths[l]);
    const auto out = static_cast<Eigen::Index>(widths[l + 1]);
    Eigen::Map<Matrix> gw(result.grad.data() + spec.weight_offset(l), out, in);
    Eigen::Map<Eigen::RowVectorXd> gb(result.grad.data() + spec.bias_offset(l), out);
    gw.noalias() = dz.transpose() * trace.layer_inputs[l];
    gb = dz.colwise().sum();
    if (l == 0) break;
    ConstMatrixMap w(params.values.data() + spec.weight_offset(l), out, in);
    Matrix da = dz * w;
    if (spec.activations()[l - 1] == Activation::kRelu) {
      da = (trace.pre_acts[l - 1].array() > 0.0).select(da, 0.0);
    } else if (spec.activations()[l - 1] == Activation::kTanh) {
      da.array() *= 1.0 - trace.pre_acts[l - 1].array().tanh().square();
    }
    dz = std::move(da);
  }
  return result;
}

LossAndGrad loss_and_grad(const ParamVector& params, const ModelSpec& spec, const Matrix& inputs,
                          std::span<const int> labels) {
  if (spec.loss() != LossKind::kSoftmaxCrossEntropy) {
    throw ConfigError("class-index targets require a cross-entropy model");
  }
  if (labels.size() != static_cast<std::size_t>(inputs.rows())) {
    throw ConfigError("label count does not match batch size");
  }
  return loss_and_grad(params, spec, inputs, one_hot(labels, spec.output_dim()));
}

double loss_value(const ParamVector& params, const ModelSpec& spec, const Matrix& inputs,
                  const Matrix& targets) {
  check_compatible(params, spec);
  check_batch(spec, inputs, targets);
  return output_loss(spec.loss(), run_forward(params, spec, inputs, false).output, targets, nullptr);
}

void sgd_step(ParamVector& params, std::span<const double> grad, double lr, OptimizerState& state) {
  if (grad.size() != params.size() || state.momentum_buffer.size() != params.size()) {
    throw ConfigError("sgd_step: gradient/buffer/parameter length mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.momentum_buffer[i] = state.momentum_coeff * state.momentum_buffer[i] + grad[i];
    params.values[i] -= lr * state.momentum_buffer[i];
  }
}

Matrix one_hot(std::span<const int> labels, std::size_t num_classes) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(labels.size()),
                          static_cast<Eigen::Index>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ConfigError("label " + std::to_string(labels[i]) + " out of range");
    }
    m(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return m;
}

}  // namespace fedima
