// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "fedima/config.hpp"
#include "fedima/decomposition.hpp"
#include "fedima/experiment.hpp"
#include "fedima/landscape.hpp"
#include "support/oracles.hpp"

namespace fedima {
namespace {

using testing::make_update;
using testing::perturbed;
using testing::random_matrix;

struct Outcome {
  bool pass = true;
  std::string detail;
};

void note(Outcome& o, bool ok, const std::string& what) {
  o.pass = o.pass && ok;
  if (!ok) o.detail += (o.detail.empty() ? "" : "; ") + what;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// 1. Decomposition identity.
Outcome decomposition_identity() {
  Outcome o;
  double worst = 0.0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const auto r = testing::random_ensemble(s, 3, 4, 120);
    if (r.spec.param_count() > 100) note(o, false, "net exceeds 100 params");
    const auto rep = decompose(r.ensemble, r.spec, r.global);
    const double brute = testing::direct_wens_loss(r.ensemble, r.spec, r.global);
    worst = std::max(worst, std::abs(rep.bias_term + rep.variance_term + rep.covariance_term - brute));
  }
  note(o, worst <= 1e-9, "max |terms - direct| = " + fmt("%.3g", worst));
  if (o.pass) o.detail = "max abs residual " + fmt("%.3g", worst);
  return o;
}

// 2. FMA-WENS gap scales quadratically with locality; exact for linear models.
Outcome gap_scaling() {
  Outcome o;
  const auto spec = ModelSpec::mlp({3, 8, 2}, Activation::kTanh, LossKind::kMse);
  double lo = 1e9, hi = -1e9;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const double slope = testing::fma_wens_gap_slope(s, spec, 3);
    lo = std::min(lo, slope);
    hi = std::max(hi, slope);
  }
  note(o, lo >= 1.75 && hi <= 2.25, "slopes in [" + fmt("%.4f", lo) + ", " + fmt("%.4f", hi) + "]");

  std::mt19937_64 rng(1);
  const auto lin = ModelSpec::mlp({4, 3}, Activation::kIdentity, LossKind::kMse);
  std::vector<ParamVector> models;
  for (int k = 0; k < 3; ++k) models.push_back(perturbed(init_params(lin, 1), rng, 1.0));
  const std::vector<double> w{0.2, 0.3, 0.5};
  const double gap = fma_wens_gap(models, w, lin, random_matrix(rng, 64, 4)).gap;
  note(o, gap < 1e-12, "linear gap " + fmt("%.3g", gap));
  if (o.pass) o.detail = "slopes [" + fmt("%.4f", lo) + ", " + fmt("%.4f", hi) + "], linear gap " + fmt("%.3g", gap);
  return o;
}

// Shared state for criteria 3, 7 and 8.
struct TrendRun {
  std::vector<RoundRecord> trajectory;
  std::vector<ClientUpdate> last_updates;
  ParamVector final_global;
  std::optional<ParamVector> final_ima;
  Dataset test;
  ModelSpec spec = ModelSpec::mlp({2, 2}, Activation::kIdentity, LossKind::kMse);
};

ExperimentConfig trend_config(double alpha, bool ima, std::uint64_t seed) {
  auto c = default_experiment();  // 4 classes, dim 8, sep 2.5, 600 samples, K=20, ...
  c.seed = seed;
  c.federation.seed = seed;
  c.partition.alpha = alpha;
  if (!ima) c.federation.ima.reset();
  c.validate();
  return c;
}

TrendRun run_trend(const ExperimentConfig& c) {
  const auto setup = build_setup(c);
  TrendRun out;
  out.test = setup.test;
  out.spec = setup.spec;
  const Federation fed(setup.federation, setup.spec, setup.train, setup.partition, setup.test);
  const int last = c.federation.rounds;
  auto res = fed.run(std::nullopt, [&](const RoundEvent& ev) {
    if (ev.round == last) out.last_updates.assign(ev.updates.begin(), ev.updates.end());
  });
  out.trajectory = std::move(res.trajectory);
  out.final_global = res.final_state.global;
  out.final_ima = res.final_state.ima_model;
  return out;
}

double last10(const std::vector<RoundRecord>& t) { return summarize(t, 1.0).last10_mean_accuracy; }

TrendRun g_reference_fma;  // seed 1, alpha 0.1, FedAvg arm
TrendRun g_reference_ima;  // seed 1, alpha 0.1, IMA arm

// 3. IMA improves over FMA under strong label skew.
Outcome ima_trend() {
  Outcome o;
  std::vector<double> gains;
  for (double alpha : {0.1, 1.0, 10.0}) {
    double fma = 0.0, ima = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto f = run_trend(trend_config(alpha, false, seed));
      fma += last10(f.trajectory);
      if (alpha == 0.1 && seed == 1) g_reference_fma = std::move(f);
      auto r = run_trend(trend_config(alpha, true, seed));
      ima += last10(r.trajectory);
      if (alpha == 0.1 && seed == 1) g_reference_ima = std::move(r);
    }
    gains.push_back(100.0 * (ima - fma) / 5.0);
  }
  note(o, gains[0] > 0.0, "gain at alpha 0.1 not positive");
  note(o, gains[0] >= gains[2], "gain at alpha 0.1 below gain at alpha 10");
  o.detail = (o.pass ? "" : o.detail + "; ") + "gain (points) alpha 0.1/1/10 = " + fmt("%.2f", gains[0]) + "/" +
             fmt("%.2f", gains[1]) + "/" + fmt("%.2f", gains[2]);
  return o;
}

// 4. P = 1 with the base schedule reproduces plain FMA bit for bit.
Outcome p1_equivalence() {
  Outcome o;
  auto plain = trend_config(0.1, false, 3);
  auto p1 = plain;
  p1.federation.ima = ImaConfig{40, 1, std::nullopt, false};
  const auto a = run_trend(plain);
  const auto b = run_trend(p1);
  bool same = a.final_global == b.final_global && a.trajectory.size() == b.trajectory.size();
  for (std::size_t i = 0; same && i < a.trajectory.size(); ++i) {
    const auto& x = a.trajectory[i];
    const auto& y = b.trajectory[i];
    same = x.test_loss == y.test_loss && x.test_accuracy == y.test_accuracy && x.locality == y.locality &&
           x.lr == y.lr && x.participants == y.participants;
  }
  note(o, same, "trajectories differ");
  note(o, b.final_ima.has_value() && *b.final_ima == b.final_global, "IMA model differs from the last FMA model");
  if (o.pass) o.detail = "120 rounds bit-identical";
  return o;
}

// 5. Aggregator degenerate cases.
Outcome aggregator_consistency() {
  Outcome o;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  const std::size_t dim = 50;
  bool nova_bitwise = true;
  double gma_err = 0.0, yogi_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> init_v(dim);
    for (auto& v : init_v) v = n(rng);
    const auto init = testing::flat_params(init_v);
    std::vector<ClientUpdate> updates;
    for (std::size_t k = 0; k < 5; ++k) {
      std::vector<double> d(dim);
      for (auto& v : d) v = 0.1 * n(rng);
      updates.push_back(make_update(k, init, d, 10 + 7 * k, 12));
    }
    nova_bitwise = nova_bitwise && fednova_aggregate(updates, init) == fma_aggregate(updates, init);

    const auto fma = fma_aggregate(updates, init);
    const auto mask = fedgma_mask(updates, 0.0);
    for (std::size_t i = 0; i < dim; ++i) gma_err = std::max(gma_err, std::abs(init.values[i] + mask[i] - fma.values[i]));

    const auto g = weighted_delta(updates);
    std::vector<double> m0(dim), v0(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      m0[i] = 0.1 * n(rng);
      v0[i] = g[i] * g[i] * (1.0 + u(rng));  // v_prev >= delta^2
    }
    const AdaptiveParams p{0.01, 0.9, 0.99, 1e-3};
    auto ma = m0, va = v0, my = m0, vy = v0;
    const auto adam = fedadam_step(init, g, ma, va, p);
    const auto yogi = fedyogi_step(init, g, my, vy, p);
    for (std::size_t i = 0; i < dim; ++i) yogi_err = std::max(yogi_err, std::abs(adam.values[i] - yogi.values[i]));
  }
  note(o, nova_bitwise, "FedNova differs from FedAvg");
  note(o, gma_err <= 1e-12, "FedGMA(eps=0) error " + fmt("%.3g", gma_err));
  note(o, yogi_err <= 1e-12, "FedYogi vs FedAdam max diff " + fmt("%.3g", yogi_err));
  if (o.pass) o.detail = "FedNova bitwise, FedGMA " + fmt("%.3g", gma_err) + ", FedYogi " + fmt("%.3g", yogi_err);
  return o;
}

// 6. Landscape geometry.
Outcome landscape_geometry() {
  Outcome o;
  double ortho = 0.0, norm = 0.0, recon = 0.0, second = 0.0;
  bool endpoints = true;
  const auto spec = ModelSpec::mlp({3, 2}, Activation::kIdentity, LossKind::kMse);
  for (std::uint64_t s = 1; s <= 20; ++s) {
    std::mt19937_64 rng(s);
    const auto w1 = perturbed(init_params(spec, s), rng, 1.0);
    const auto w2 = perturbed(w1, rng, 1.0);
    const auto w3 = perturbed(w1, rng, 1.0);
    const auto b = build_plane(w1, w2, w3);
    double uv = 0.0, uu = 0.0, vv = 0.0;
    for (std::size_t i = 0; i < w1.size(); ++i) {
      uv += b.u_hat[i] * b.v_hat[i];
      uu += b.u_hat[i] * b.u_hat[i];
      vv += b.v_hat[i] * b.v_hat[i];
    }
    ortho = std::max(ortho, std::abs(uv));
    norm = std::max({norm, std::abs(uu - 1.0), std::abs(vv - 1.0)});
    const auto r2 = reconstruct_at(b, b.coords_w2.first, b.coords_w2.second);
    const auto r3 = reconstruct_at(b, b.coords_w3.first, b.coords_w3.second);
    const auto r1 = reconstruct_at(b, 0.0, 0.0);
    for (std::size_t i = 0; i < w1.size(); ++i) {
      recon = std::max({recon, std::abs(r1.values[i] - w1.values[i]), std::abs(r2.values[i] - w2.values[i]),
                        std::abs(r3.values[i] - w3.values[i])});
    }

    std::vector<int> labels(40);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
    const auto data = Dataset::from_labels(random_matrix(rng, 40, 3), labels, 2);
    const auto line = interpolate_1d(w1, w2, linspace(0.0, 1.0, 5), spec, data);
    endpoints = endpoints && line.loss(4, 0) == loss_value(w1, spec, data.features, data.one_hot_targets) &&
                line.loss(0, 0) == loss_value(w2, spec, data.features, data.one_hot_targets);

    const auto [ra, rb] = default_plane_ranges(b);
    const auto g = eval_plane(b, ra, rb, 9, 9, spec, data);
    const double daa = g.loss(2, 0) - 2 * g.loss(1, 0) + g.loss(0, 0);
    const double dbb = g.loss(0, 2) - 2 * g.loss(0, 1) + g.loss(0, 0);
    const double dab = g.loss(1, 1) - g.loss(1, 0) - g.loss(0, 1) + g.loss(0, 0);
    for (Eigen::Index i = 0; i + 2 < 9; ++i) {
      for (Eigen::Index j = 0; j + 2 < 9; ++j) {
        second = std::max({second, std::abs(g.loss(i + 2, j) - 2 * g.loss(i + 1, j) + g.loss(i, j) - daa),
                           std::abs(g.loss(i, j + 2) - 2 * g.loss(i, j + 1) + g.loss(i, j) - dbb),
                           std::abs(g.loss(i + 1, j + 1) - g.loss(i + 1, j) - g.loss(i, j + 1) + g.loss(i, j) - dab)});
      }
    }
  }
  note(o, ortho < 1e-9 && norm < 1e-9, "basis not orthonormal: " + fmt("%.3g", std::max(ortho, norm)));
  note(o, recon < 1e-9, "anchor reconstruction error " + fmt("%.3g", recon));
  note(o, endpoints, "1D endpoints inexact");
  note(o, second < 1e-6, "second differences vary by " + fmt("%.3g", second));
  if (o.pass) {
    o.detail = "ortho " + fmt("%.2g", ortho) + ", recon " + fmt("%.2g", recon) + ", second-diff spread " +
               fmt("%.2g", second);
  }
  return o;
}

// 7. Client models of the FedAvg run sit on the basin wall; in the IMA run the
// FMA->IMA segment dips below the FMA end.
Outcome basin_observation() {
  Outcome o;
  const auto& r = g_reference_fma;
  const auto& ri = g_reference_ima;
  if (r.last_updates.empty() || !ri.final_ima) {
    note(o, false, "criterion 3 reference run unavailable");
    return o;
  }
  const auto betas = linspace(0.0, 1.0, 11);
  int monotone = 0;
  for (const auto& u : r.last_updates) {
    // beta = 0 is the client, beta = 1 the global model.
    const auto g = interpolate_1d(r.final_global, u.final_params, betas, r.spec, r.test);
    bool ok = true;
    for (Eigen::Index i = 0; i + 1 < g.loss.rows(); ++i) ok = ok && g.loss(i + 1, 0) <= g.loss(i, 0);
    monotone += ok ? 1 : 0;
  }
  const int sampled = static_cast<int>(r.last_updates.size());
  note(o, monotone >= 3, std::to_string(monotone) + " of " + std::to_string(sampled) + " clients monotone");

  // beta = 0 is FMA, beta = 1 IMA.
  const auto seg = interpolate_1d(*ri.final_ima, ri.final_global, betas, ri.spec, ri.test);
  Eigen::Index argmin = 0;
  seg.loss.col(0).minCoeff(&argmin);
  note(o, argmin > 0, "FMA->IMA minimum at the FMA end");
  o.detail = (o.pass ? "" : o.detail + "; ") + std::to_string(monotone) + "/" + std::to_string(sampled) +
             " clients monotone, FMA->IMA argmin beta " + fmt("%.1f", betas[static_cast<std::size_t>(argmin)]);
  return o;
}

// 8. Locality stays bounded late in the decayed (IMA) run.
Outcome locality_stabilization() {
  Outcome o;
  const auto& t = g_reference_ima.trajectory;
  if (t.empty()) {
    note(o, false, "criterion 3 reference run unavailable");
    return o;
  }
  const std::size_t n = t.size();
  std::vector<double> middle;
  for (std::size_t i = 2 * n / 5; i < 3 * n / 5; ++i) middle.push_back(t[i].locality);
  std::nth_element(middle.begin(), middle.begin() + static_cast<std::ptrdiff_t>(middle.size() / 2), middle.end());
  double median = middle[middle.size() / 2];
  if (middle.size() % 2 == 0) {
    const double lower = *std::max_element(middle.begin(), middle.begin() + static_cast<std::ptrdiff_t>(middle.size() / 2));
    median = 0.5 * (median + lower);
  }
  double late = 0.0;
  for (std::size_t i = n - n / 5; i < n; ++i) late = std::max(late, t[i].locality);
  note(o, late <= 2.0 * median, "late max exceeds twice the middle median");
  o.detail = (o.pass ? "" : o.detail + "; ") + "late max " + fmt("%.4f", late) + ", middle median " + fmt("%.4f", median);
  return o;
}

// 9. CKA and MMD diagnostics.
Outcome diagnostics() {
  Outcome o;
  std::mt19937_64 rng(9);
  const Matrix a = random_matrix(rng, 50, 5);
  const Matrix b = random_matrix(rng, 50, 5);
  const Eigen::HouseholderQR<Matrix> qr(random_matrix(rng, 5, 5));
  const Matrix q = qr.householderQ();
  const double base = cka_similarity(a, b);
  const double self_err = std::abs(cka_similarity(a, a) - 1.0);
  const double orth_err = std::abs(cka_similarity(a * q, b) - base);
  const double scale_err = std::abs(cka_similarity(4.0 * a, b) - base);
  note(o, std::max({self_err, orth_err, scale_err}) <= 1e-9, "CKA invariance error");

  const Matrix x = random_matrix(rng, 100, 2);
  const double same = mmd_rbf(x, x, 1.0, false).mmd2;
  Matrix far = random_matrix(rng, 100, 2);
  far.col(0).array() += 10.0;
  const double apart = mmd_rbf(x, far, 1.0, true).mmd2;
  note(o, same < 1e-9, "MMD of identical sets " + fmt("%.3g", same));
  note(o, apart > 0.5, "MMD of separated blobs " + fmt("%.3g", apart));
  if (o.pass) o.detail = "CKA errors <= " + fmt("%.2g", std::max({self_err, orth_err, scale_err})) + ", MMD2 far " + fmt("%.3f", apart);
  return o;
}

// 10. Backprop against central differences.
Outcome gradient_oracle() {
  Outcome o;
  double worst = 0.0;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    std::mt19937_64 rng(s);
    const auto loss = s % 2 ? LossKind::kSoftmaxCrossEntropy : LossKind::kMse;
    const auto spec = ModelSpec::mlp({3, 4, 3}, s % 3 ? Activation::kTanh : Activation::kRelu, loss);
    const auto params = perturbed(init_params(spec, s), rng, 0.1);
    const Matrix x = random_matrix(rng, 8, 3);
    const std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1};
    const Matrix y = loss == LossKind::kMse ? random_matrix(rng, 8, 3) : one_hot(labels, 3);
    worst = std::max(worst, testing::gradient_check(spec, params, x, y));
  }
  note(o, worst < 1e-4, "max relative error " + fmt("%.3g", worst));
  if (o.pass) o.detail = "max relative error " + fmt("%.3g", worst);
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // <= 0: no runtime bound
  std::function<Outcome()> check;
};

}  // namespace
}  // namespace fedima

int main() {
  using namespace fedima;
  const std::vector<Criterion> criteria{
      {1, "decomposition identity", 10, decomposition_identity},
      {2, "FMA-WENS gap scaling", 10, gap_scaling},
      {3, "IMA trend", 300, ima_trend},
      {4, "P=1 equivalence", 60, p1_equivalence},
      {5, "aggregator consistency", 10, aggregator_consistency},
      {6, "landscape geometry", 30, landscape_geometry},
      {7, "basin observation", 0, basin_observation},
      {8, "locality stabilization", 0, locality_stabilization},
      {9, "CKA/MMD diagnostics", 10, diagnostics},
      {10, "gradient oracle", 5, gradient_oracle},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.check();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0 && secs >= c.budget_s) {
      out.pass = false;
      out.detail += "; runtime " + fmt("%.1f", secs) + " s over budget";
    }
    failures += out.pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s [%.2f s]\n", out.pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
