// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

// Brute-force reference computations shared by the unit and acceptance tests.

#ifndef FEDIMA_TESTS_ORACLES_HPP_
#define FEDIMA_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "fedima/data.hpp"
#include "fedima/decomposition.hpp"
#include "fedima/federation.hpp"
#include "fedima/nn.hpp"

namespace fedima::testing {

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  }
  return m;
}

inline ParamVector perturbed(const ParamVector& p, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  ParamVector out = p;
  for (auto& v : out.values) v += n(rng);
  return out;
}

/// Max relative error between the backprop gradient and central differences.
inline double gradient_check(const ModelSpec& spec, const ParamVector& params, const Matrix& x,
                             const Matrix& y, double h = 1e-5) {
  const auto analytic = loss_and_grad(params, spec, x, y).grad;
  double worst = 0.0;
  ParamVector p = params;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p.values[i];
    p.values[i] = orig + h;
    const double up = loss_value(p, spec, x, y);
    p.values[i] = orig - h;
    const double down = loss_value(p, spec, x, y);
    p.values[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

/// Mean over draws of the WENS squared error on the global set.
inline double direct_wens_loss(const JointEnsemble& e, const ModelSpec& spec, const Dataset& global) {
  double total = 0.0;
  for (const auto& draw : e.samples) {
    const Matrix f = wens_output(draw, e.weights, spec, global.features);
    total += (f - global.one_hot_targets).array().square().sum() / static_cast<double>(global.size());
  }
  return total / static_cast<double>(e.num_samples());
}

struct RandomEnsemble {
  ModelSpec spec;
  Dataset global;
  JointEnsemble ensemble;
};

/// K clients with an even split of n samples; S joint draws scattered around
/// per-client centres. Nonlinear tiny MLP with MSE.
inline RandomEnsemble random_ensemble(std::uint64_t seed, std::size_t k, std::size_t s, std::size_t n,
                                      bool equal_split = false) {
  std::mt19937_64 rng(seed);
  ModelSpec spec = ModelSpec::mlp({3, 6, 2}, Activation::kRelu, LossKind::kMse);
  std::vector<int> labels(n);
  std::uniform_int_distribution<int> cls(0, 1);
  for (auto& l : labels) l = cls(rng);
  Dataset global = Dataset::from_labels(random_matrix(rng, static_cast<Eigen::Index>(n), 3), labels, 2);

  JointEnsemble e;
  e.client_indices.resize(k);
  if (equal_split) {
    for (std::size_t i = 0; i < n; ++i) e.client_indices[i % k].push_back(i);
  } else {
    // Uneven contiguous blocks, at least one sample each.
    std::vector<std::size_t> cuts{0};
    for (std::size_t c = 1; c < k; ++c) cuts.push_back(c * n / k + (c % 2 ? n / (4 * k) : 0));
    cuts.push_back(n);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t i = cuts[c]; i < cuts[c + 1]; ++i) e.client_indices[c].push_back(i);
    }
  }
  e.weights = size_weights(e.client_indices);

  std::vector<ParamVector> centres;
  for (std::size_t c = 0; c < k; ++c) centres.push_back(init_params(spec, seed * 31 + c));
  const ParamVector shared = init_params(spec, seed * 131 + 7);
  for (std::size_t d = 0; d < s; ++d) {
    const ParamVector common_noise = perturbed(shared, rng, 0.2);
    std::vector<ParamVector> draw;
    for (std::size_t c = 0; c < k; ++c) {
      ParamVector m = perturbed(centres[c], rng, 0.3);
      for (std::size_t i = 0; i < m.size(); ++i) m.values[i] += common_noise.values[i] - shared.values[i];
      draw.push_back(std::move(m));
    }
    e.samples.push_back(std::move(draw));
  }
  return {spec, global, e};
}

/// A client update whose final model is init + delta.
inline ClientUpdate make_update(std::size_t id, const ParamVector& init, std::vector<double> delta,
                                std::size_t samples, std::size_t steps) {
  ClientUpdate u;
  u.client_id = id;
  u.num_samples = samples;
  u.num_steps = steps;
  u.final_params = init;
  for (std::size_t i = 0; i < delta.size(); ++i) u.final_params.values[i] += delta[i];
  u.delta = std::move(delta);
  return u;
}

inline ParamVector flat_params(std::vector<double> values, std::uint64_t fingerprint = 42) {
  return ParamVector{std::move(values), fingerprint};
}

/// Log-log slope of the FMA-WENS output gap against the spread of K client
/// models scattered around a random centre, over spreads 1e-1 .. 1e-3.
inline double fma_wens_gap_slope(std::uint64_t seed, const ModelSpec& spec, std::size_t k = 3) {
  std::mt19937_64 rng(seed);
  const ParamVector centre = perturbed(init_params(spec, seed), rng, 0.5);
  std::vector<std::vector<double>> dirs(k, std::vector<double>(centre.size()));
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& d : dirs) {
    for (auto& x : d) x = n(rng);
  }
  std::vector<double> weights(k);
  double total = 0.0;
  for (auto& w : weights) total += (w = 1.0 + static_cast<double>(rng() % 5));
  for (auto& w : weights) w /= total;
  const Matrix inputs = random_matrix(rng, 64, static_cast<Eigen::Index>(spec.input_dim()));

  std::vector<double> xs, ys;
  for (double eps : {1e-1, 3e-2, 1e-2, 3e-3, 1e-3}) {
    std::vector<ParamVector> models;
    for (const auto& d : dirs) {
      ParamVector m = centre;
      for (std::size_t i = 0; i < m.size(); ++i) m.values[i] += eps * d[i];
      models.push_back(std::move(m));
    }
    const auto g = fma_wens_gap(models, weights, spec, inputs);
    xs.push_back(std::log(g.delta));
    ys.push_back(std::log(g.gap));
  }
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace fedima::testing

#endif  // FEDIMA_TESTS_ORACLES_HPP_
