// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedima/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fedima {
namespace {

// Output statistics of every client model at every global sample.
struct OutputMoments {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<Matrix> mean;  // per client, n x c: E_s f_k(x)
  // cov[i * K * K + a * K + b] = (1/S) sum_s <f_a - E f_a, f_b - E f_b> at sample i,
  // summed over output coordinates.
  std::vector<double> cov;

  double at(std::size_t i, std::size_t a, std::size_t b) const { return cov[(i * k + a) * k + b]; }
};

std::vector<std::vector<Matrix>> all_outputs(const JointEnsemble& e, const ModelSpec& spec,
                                             const Matrix& inputs) {
  std::vector<std::vector<Matrix>> out(e.num_samples());
  for (std::size_t s = 0; s < e.num_samples(); ++s) {
    for (const auto& model : e.samples[s]) out[s].push_back(forward(model, spec, inputs));
  }
  return out;
}

OutputMoments moments(const std::vector<std::vector<Matrix>>& outputs, std::size_t num_clients) {
  OutputMoments m;
  const std::size_t S = outputs.size();
  m.k = num_clients;
  m.n = static_cast<std::size_t>(outputs[0][0].rows());
  const double inv_s = 1.0 / static_cast<double>(S);
  for (std::size_t a = 0; a < m.k; ++a) {
    Matrix sum = Matrix::Zero(outputs[0][a].rows(), outputs[0][a].cols());
    for (std::size_t s = 0; s < S; ++s) sum += outputs[s][a];
    m.mean.push_back(sum * inv_s);
  }
  m.cov.assign(m.n * m.k * m.k, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    std::vector<Matrix> dev;
    dev.reserve(m.k);
    for (std::size_t a = 0; a < m.k; ++a) dev.push_back(outputs[s][a] - m.mean[a]);
    for (std::size_t i = 0; i < m.n; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      for (std::size_t a = 0; a < m.k; ++a) {
        for (std::size_t b = a; b < m.k; ++b) {
          const double prod = dev[a].row(row).dot(dev[b].row(row));
          m.cov[(i * m.k + a) * m.k + b] += prod;
        }
      }
    }
  }
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t a = 0; a < m.k; ++a) {
      for (std::size_t b = a; b < m.k; ++b) {
        auto& v = m.cov[(i * m.k + a) * m.k + b];
        v *= inv_s;
        m.cov[(i * m.k + b) * m.k + a] = v;
      }
    }
  }
  return m;
}

void require_mse(const ModelSpec& spec) {
  if (spec.loss() != LossKind::kMse) {
    throw ConfigError("the loss decomposition is defined for MSE models only");
  }
}

void require_equal_weights(const JointEnsemble& e) {
  const double first = e.weights.front();
  for (double w : e.weights) {
    if (std::abs(w - first) > 1e-12) throw ConfigError("this check requires equal client weights");
  }
}

}  // namespace

std::string to_string(EnsembleKind kind) {
  return kind == EnsembleKind::kJoint ? "joint" : "independent";
}

void JointEnsemble::validate() const {
  if (samples.empty()) throw ConfigError("ensemble has no joint samples");
  if (weights.empty()) throw ConfigError("ensemble has no clients");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("ensemble weights must sum to 1");
  if (client_indices.size() != weights.size()) {
    throw ConfigError("ensemble needs one index set per client");
  }
  const auto fp = samples.front().front().spec_fingerprint;
  for (const auto& draw : samples) {
    if (draw.size() != weights.size()) throw ConfigError("every joint sample needs K client models");
    for (const auto& m : draw) {
      if (m.spec_fingerprint != fp) throw InvariantError("ensemble mixes model fingerprints");
    }
  }
}

std::vector<double> size_weights(const std::vector<std::vector<std::size_t>>& client_indices) {
  std::vector<double> w(client_indices.size());
  double total = 0.0;
  for (const auto& c : client_indices) total += static_cast<double>(c.size());
  if (!(total > 0)) throw ConfigError("clients hold no samples");
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = static_cast<double>(client_indices[k].size()) / total;
  return w;
}

double EqualWeightReport::total() const {
  const double k = static_cast<double>(num_clients);
  return mean_variance / k + (k - 1.0) / k * mean_covariance;
}

ParamVector weighted_average(std::span<const ParamVector> models, std::span<const double> weights) {
  if (models.empty() || models.size() != weights.size()) {
    throw ConfigError("weighted_average needs one weight per model");
  }
  ParamVector out = models.front();
  std::fill(out.values.begin(), out.values.end(), 0.0);
  for (std::size_t k = 0; k < models.size(); ++k) {
    check_compatible(models[k], out);
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += weights[k] * models[k].values[i];
  }
  return out;
}

Matrix wens_output(std::span<const ParamVector> models, std::span<const double> weights,
                   const ModelSpec& spec, const Matrix& inputs) {
  if (models.empty() || models.size() != weights.size()) {
    throw ConfigError("wens_output needs one weight per model");
  }
  Matrix out = weights[0] * forward(models[0], spec, inputs);
  for (std::size_t k = 1; k < models.size(); ++k) out += weights[k] * forward(models[k], spec, inputs);
  return out;
}

FmaWensGap fma_wens_gap(std::span<const ParamVector> models, std::span<const double> weights,
                        const ModelSpec& spec, const Matrix& eval_inputs) {
  if (eval_inputs.rows() == 0) throw ConfigError("fma_wens_gap needs evaluation inputs");
  const ParamVector fma = weighted_average(models, weights);
  const Matrix diff = forward(fma, spec, eval_inputs) - wens_output(models, weights, spec, eval_inputs);
  FmaWensGap r;
  r.gap = diff.rowwise().norm().mean();
  for (const auto& m : models) {
    double sq = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double d = m.values[i] - fma.values[i];
      sq += d * d;
    }
    r.delta = std::max(r.delta, std::sqrt(sq));
  }
  return r;
}

DecompositionReport decompose(const JointEnsemble& ensemble, const ModelSpec& spec,
                              const Dataset& global) {
  require_mse(spec);
  ensemble.validate();
  if (global.size() == 0) throw ConfigError("decompose needs a non-empty global dataset");
  const std::size_t K = ensemble.num_clients();
  const std::size_t S = ensemble.num_samples();
  const std::size_t n = global.size();
  const auto& p = ensemble.weights;
  const Matrix& y = global.one_hot_targets;

  std::vector<std::vector<char>> member(K, std::vector<char>(n, 0));
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i : ensemble.client_indices[k]) {
      if (i >= n) throw ConfigError("client index outside the global dataset");
      member[k][i] = 1;
    }
  }

  const auto outputs = all_outputs(ensemble, spec, global.features);
  const auto mom = moments(outputs, K);

  DecompositionReport r;
  r.kind = ensemble.kind;
  const auto c = y.cols();
  Eigen::RowVectorXd total(c), train(c), heter(c);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    total.setZero();
    train.setZero();
    heter.setZero();
    for (std::size_t k = 0; k < K; ++k) {
      const Eigen::RowVectorXd residual = y.row(row) - mom.mean[k].row(row);
      // The two indicators split D, so exactly one of them is active.
      if (member[k][i]) {
        train += p[k] * residual;
      } else {
        heter += p[k] * residual;
      }
    }
    total = train + heter;
    r.bias_term += total.squaredNorm();
    r.train_bias_mean_sq += train.squaredNorm();
    r.heter_bias_mean_sq += heter.squaredNorm();
    for (std::size_t a = 0; a < K; ++a) {
      r.variance_term += p[a] * p[a] * mom.at(i, a, a);
      for (std::size_t b = 0; b < K; ++b) {
        if (b != a) r.covariance_term += p[a] * p[b] * mom.at(i, a, b);
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  r.bias_term *= inv_n;
  r.train_bias_mean_sq *= inv_n;
  r.heter_bias_mean_sq *= inv_n;
  r.variance_term *= inv_n;
  r.covariance_term *= inv_n;
  r.wens_expected_loss = r.bias_term + r.variance_term + r.covariance_term;

  for (std::size_t s = 0; s < S; ++s) {
    Matrix wens = p[0] * outputs[s][0];
    for (std::size_t k = 1; k < K; ++k) wens += p[k] * outputs[s][k];
    r.direct_expected_loss += (y - wens).array().square().sum() * inv_n;
  }
  r.direct_expected_loss /= static_cast<double>(S);

  const auto& last = ensemble.samples.back();
  const ParamVector fma = weighted_average(last, p);
  r.fma_loss = (forward(fma, spec, global.features) - y).array().square().sum() * inv_n;
  const auto gap = fma_wens_gap(last, p, spec, global.features);
  r.locality_delta = gap.delta;
  r.approx_gap = gap.gap;
  return r;
}

EqualWeightReport decompose_equal_weights(const JointEnsemble& ensemble, const ModelSpec& spec,
                                          const Dataset& global) {
  ensemble.validate();
  require_equal_weights(ensemble);
  EqualWeightReport r;
  r.base = decompose(ensemble, spec, global);
  r.num_clients = ensemble.num_clients();
  const std::size_t K = ensemble.num_clients();
  const auto mom = moments(all_outputs(ensemble, spec, global.features), K);
  for (std::size_t i = 0; i < mom.n; ++i) {
    for (std::size_t a = 0; a < K; ++a) {
      r.mean_variance += mom.at(i, a, a);
      for (std::size_t b = 0; b < K; ++b) {
        if (b != a) r.mean_covariance += mom.at(i, a, b);
      }
    }
  }
  const double n = static_cast<double>(mom.n);
  const double k = static_cast<double>(K);
  r.mean_variance /= n * k;
  r.mean_covariance = K > 1 ? r.mean_covariance / (n * k * (k - 1.0)) : 0.0;
  return r;
}

CovarianceBound covariance_lower_bound_check(const JointEnsemble& ensemble, const ModelSpec& spec,
                                             const Dataset& global) {
  ensemble.validate();
  require_equal_weights(ensemble);
  const std::size_t K = ensemble.num_clients();
  const auto mom = moments(all_outputs(ensemble, spec, global.features), K);
  const double k = static_cast<double>(K);
  CovarianceBound b;
  for (std::size_t i = 0; i < mom.n; ++i) {
    double all_pairs = 0.0;
    double min_cross = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < K; ++a) {
      for (std::size_t c = 0; c < K; ++c) {
        all_pairs += mom.at(i, a, c);
        if (a != c) min_cross = std::min(min_cross, mom.at(i, a, c));
      }
    }
    b.lhs += all_pairs / (k * k);
    if (K > 1) b.rhs += (k - 1.0) / k * min_cross;
  }
  b.lhs /= static_cast<double>(mom.n);
  b.rhs /= static_cast<double>(mom.n);
  return b;
}

double cka_similarity(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ConfigError("CKA inputs differ in shape");
  if (a.rows() < 2) throw ConfigError("CKA needs at least two rows");
  const Matrix ac = a.rowwise() - a.colwise().mean();
  const Matrix bc = b.rowwise() - b.colwise().mean();
  const double aa = (ac.transpose() * ac).norm();
  const double bb = (bc.transpose() * bc).norm();
  if (!(aa > 0) || !(bb > 0)) throw ConfigError("CKA input has zero variance");
  const double ab = (ac.transpose() * bc).squaredNorm();
  return ab / (aa * bb);
}

double mean_pairwise_cka(std::span<const ParamVector> models, const ModelSpec& spec,
                         const Matrix& inputs) {
  if (models.size() < 2) throw ConfigError("pairwise CKA needs at least two models");
  std::vector<Matrix> outs;
  for (const auto& m : models) outs.push_back(forward(m, spec, inputs));
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    for (std::size_t j = i + 1; j < outs.size(); ++j, ++pairs) sum += cka_similarity(outs[i], outs[j]);
  }
  return sum / static_cast<double>(pairs);
}

double median_heuristic_bandwidth(const Matrix& xa, const Matrix& xb) {
  Matrix pooled(xa.rows() + xb.rows(), xa.cols());
  pooled << xa, xb;
  std::vector<double> dists;
  for (Eigen::Index i = 0; i < pooled.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < pooled.rows(); ++j) dists.push_back((pooled.row(i) - pooled.row(j)).norm());
  }
  if (dists.empty()) throw ConfigError("median heuristic needs at least two rows");
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  double median = *mid;
  if (dists.size() % 2 == 0) median = 0.5 * (median + *std::max_element(dists.begin(), mid));
  return median > 0 ? median : 1.0;
}

MmdResult mmd_rbf(const Matrix& xa, const Matrix& xb, std::optional<double> bandwidth,
                  bool unbiased) {
  if (xa.rows() < 2 || xb.rows() < 2) throw ConfigError("MMD needs at least two rows per set");
  if (xa.cols() != xb.cols()) throw ConfigError("MMD sets differ in dimension");
  MmdResult r;
  r.bandwidth = bandwidth ? *bandwidth : median_heuristic_bandwidth(xa, xb);
  if (!(r.bandwidth > 0)) throw ConfigError("MMD bandwidth must be > 0");
  const double scale = 1.0 / (2.0 * r.bandwidth * r.bandwidth);
  const auto kernel = [scale](const auto& u, const auto& v) {
    return std::exp(-(u - v).squaredNorm() * scale);
  };
  // Within-set mean; the unbiased variant drops the diagonal.
  const auto within = [&](const Matrix& x) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < x.rows(); ++j) sum += 2.0 * kernel(x.row(i), x.row(j));
    }
    const double m = static_cast<double>(x.rows());
    return unbiased ? sum / (m * (m - 1.0)) : (sum + m) / (m * m);
  };
  double cross = 0.0;
  for (Eigen::Index i = 0; i < xa.rows(); ++i) {
    for (Eigen::Index j = 0; j < xb.rows(); ++j) cross += kernel(xa.row(i), xb.row(j));
  }
  cross /= static_cast<double>(xa.rows()) * static_cast<double>(xb.rows());
  r.raw = within(xa) + within(xb) - 2.0 * cross;
  r.mmd2 = std::max(r.raw, 0.0);
  return r;
}

}  // namespace fedima
