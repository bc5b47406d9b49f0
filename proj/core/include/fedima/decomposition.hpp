// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

// Expected-loss decomposition of the federated global model.
//
// Client models are treated as random: a JointEnsemble holds S joint draws of
// the K client models. For MSE with one-hot targets, the expected loss of the
// output ensemble f_WENS = sum_k p_k f_k splits exactly into
//
//   bias^2 + sum_k p_k^2 Var_k + sum_{k != k'} p_k p_k' Cov_kk'
//
// where the bias residual of client k is TrainBias on its own samples and
// HeterBias elsewhere. FMA (parameter averaging) matches WENS up to a term
// quadratic in the locality max_k ||w_k - w_FMA||.

#ifndef FEDIMA_DECOMPOSITION_HPP_
#define FEDIMA_DECOMPOSITION_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedima/data.hpp"
#include "fedima/nn.hpp"

namespace fedima {

enum class EnsembleKind { kJoint, kIndependent };

struct JointEnsemble {
  /// samples[s][k]: client k's model in joint draw s.
  std::vector<std::vector<ParamVector>> samples;
  /// p_k = n_k / n, summing to 1.
  std::vector<double> weights;
  /// Client k's rows in the global dataset.
  std::vector<std::vector<std::size_t>> client_indices;
  EnsembleKind kind = EnsembleKind::kJoint;

  std::size_t num_samples() const { return samples.size(); }
  std::size_t num_clients() const { return weights.size(); }
  /// Throws ConfigError / InvariantError on a malformed ensemble.
  void validate() const;
};

/// Weights n_k / n from client index sets.
std::vector<double> size_weights(const std::vector<std::vector<std::size_t>>& client_indices);

struct DecompositionReport {
  double bias_term = 0.0;
  double train_bias_mean_sq = 0.0;
  double heter_bias_mean_sq = 0.0;
  double variance_term = 0.0;
  double covariance_term = 0.0;
  double wens_expected_loss = 0.0;    // bias + variance + covariance
  double direct_expected_loss = 0.0;  // mean over draws of the WENS loss
  double fma_loss = 0.0;              // parameter average of the last draw
  double locality_delta = 0.0;
  double approx_gap = 0.0;
  EnsembleKind kind = EnsembleKind::kJoint;
};

struct EqualWeightReport {
  DecompositionReport base;
  std::size_t num_clients = 1;
  double mean_variance = 0.0;    // mean over D of sum_k Var_k / K
  double mean_covariance = 0.0;  // mean over D of sum_{k != k'} Cov / (K (K - 1))
  /// mean_variance / K + (K - 1) / K * mean_covariance.
  double total() const;
};

Matrix wens_output(std::span<const ParamVector> models, std::span<const double> weights,
                   const ModelSpec& spec, const Matrix& inputs);

/// sum_k p_k w_k.
ParamVector weighted_average(std::span<const ParamVector> models, std::span<const double> weights);

struct FmaWensGap {
  double gap = 0.0;    // mean over inputs of ||f_FMA(x) - f_WENS(x)||_2
  double delta = 0.0;  // max_k ||w_k - w_FMA||_2
};

FmaWensGap fma_wens_gap(std::span<const ParamVector> models, std::span<const double> weights,
                        const ModelSpec& spec, const Matrix& eval_inputs);

DecompositionReport decompose(const JointEnsemble& ensemble, const ModelSpec& spec,
                              const Dataset& global);

/// Requires equal client weights.
EqualWeightReport decompose_equal_weights(const JointEnsemble& ensemble, const ModelSpec& spec,
                                          const Dataset& global);

struct CovarianceBound {
  double lhs = 0.0;  // mean over D of (1/K^2) sum_{k,k'} Cov (diagonal included)
  double rhs = 0.0;  // mean over D of (K-1)/K * min_{k != k'} Cov
  bool holds() const { return lhs >= rhs; }
};

/// Requires equal client weights.
CovarianceBound covariance_lower_bound_check(const JointEnsemble& ensemble, const ModelSpec& spec,
                                             const Dataset& global);

/// Linear CKA between two n x c output matrices; columns are centered first.
/// Throws ConfigError if either input has zero variance.
double cka_similarity(const Matrix& a, const Matrix& b);

/// Mean linear CKA over all pairs of models' outputs on `inputs`.
double mean_pairwise_cka(std::span<const ParamVector> models, const ModelSpec& spec,
                         const Matrix& inputs);

struct MmdResult {
  double mmd2 = 0.0;      // max(raw, 0)
  double raw = 0.0;       // estimator value, may be slightly negative (unbiased)
  double bandwidth = 0.0;
};

/// Median pairwise Euclidean distance over the pooled rows.
double median_heuristic_bandwidth(const Matrix& xa, const Matrix& xb);

/// Gaussian-kernel MMD^2, k(x, x') = exp(-||x - x'||^2 / (2 sigma^2)).
/// Bandwidth defaults to the median heuristic.
MmdResult mmd_rbf(const Matrix& xa, const Matrix& xb, std::optional<double> bandwidth = std::nullopt,
                  bool unbiased = true);

std::string to_string(EnsembleKind kind);

}  // namespace fedima

#endif  // FEDIMA_DECOMPOSITION_HPP_
