// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedima/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace fedima {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

std::vector<double> difference(const ParamVector& a, const ParamVector& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a.values[i] - b.values[i];
  return d;
}

// Remove the component along unit vector `u`.
void project_out(std::vector<double>& v, std::span<const double> u) {
  const double c = dot(v, u);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * u[i];
}

std::size_t nearest_index(std::span<const double> axis, double value) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < axis.size(); ++i) {
    if (std::abs(axis[i] - value) < std::abs(axis[best] - value)) best = i;
  }
  return best;
}

}  // namespace

std::vector<double> linspace(double lo, double hi, std::size_t count) {
  if (count < 2) throw ConfigError("linspace needs at least two points");
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) {
    v[i] = lo + (hi - lo) * (static_cast<double>(i) / static_cast<double>(count - 1));
  }
  return v;
}

LandscapeGrid interpolate_1d(const ParamVector& w1, const ParamVector& w2, std::span<const double> betas,
                             const ModelSpec& spec, const Dataset& data) {
  check_compatible(w1, spec);
  check_compatible(w1, w2);
  if (betas.empty()) throw ConfigError("interpolate_1d needs at least one beta");
  if (data.size() == 0) throw ConfigError("interpolate_1d needs a non-empty dataset");
  LandscapeGrid g;
  g.kind = GridKind::kLine;
  g.a_values.assign(betas.begin(), betas.end());
  g.loss.resize(static_cast<Eigen::Index>(betas.size()), 1);
  g.error.resize(static_cast<Eigen::Index>(betas.size()), 1);
  ParamVector w = w1;
  for (std::size_t j = 0; j < betas.size(); ++j) {
    const double beta = betas[j];
    for (std::size_t i = 0; i < w.size(); ++i) {
      w.values[i] = beta * w1.values[i] + (1.0 - beta) * w2.values[i];
    }
    const auto ev = evaluate(w, spec, data);
    g.loss(static_cast<Eigen::Index>(j), 0) = ev.loss;
    g.error(static_cast<Eigen::Index>(j), 0) = ev.error();
  }
  g.anchors.push_back({"w1", 1.0, 0.0, nearest_index(g.a_values, 1.0), 0});
  g.anchors.push_back({"w2", 0.0, 0.0, nearest_index(g.a_values, 0.0), 0});
  return g;
}

PlaneBasis build_plane(const ParamVector& w1, const ParamVector& w2, const ParamVector& w3) {
  check_compatible(w1, w2);
  check_compatible(w1, w3);
  PlaneBasis basis;
  basis.origin = w1;

  std::vector<double> u = difference(w2, w1);
  const double u_norm = norm(u);
  if (!(u_norm > 0)) throw ConfigError("degenerate plane: w2 coincides with w1");
  for (auto& x : u) x /= u_norm;

  const std::vector<double> r = difference(w3, w1);
  const double r_norm = norm(r);
  if (!(r_norm > 0)) throw ConfigError("degenerate plane: w3 coincides with w1");
  std::vector<double> v = r;
  project_out(v, u);
  // Second Gram-Schmidt pass keeps the basis orthogonal to rounding level.
  project_out(v, u);
  const double v_norm = norm(v);
  if (!(v_norm > 1e-8 * r_norm)) throw ConfigError("degenerate plane: w3 lies on the w1-w2 line");
  for (auto& x : v) x /= v_norm;

  basis.coords_w2 = {u_norm, 0.0};
  basis.coords_w3 = {dot(r, u), dot(r, v)};
  basis.u_hat = std::move(u);
  basis.v_hat = std::move(v);
  return basis;
}

ParamVector reconstruct_at(const PlaneBasis& basis, double a, double b) {
  ParamVector w = basis.origin;
  for (std::size_t i = 0; i < w.size(); ++i) w.values[i] += a * basis.u_hat[i] + b * basis.v_hat[i];
  return w;
}

std::pair<AxisRange, AxisRange> default_plane_ranges(const PlaneBasis& basis) {
  const double a_lo = std::min({0.0, basis.coords_w2.first, basis.coords_w3.first});
  const double a_hi = std::max({0.0, basis.coords_w2.first, basis.coords_w3.first});
  const double b_lo = std::min({0.0, basis.coords_w2.second, basis.coords_w3.second});
  const double b_hi = std::max({0.0, basis.coords_w2.second, basis.coords_w3.second});
  const double a_span = a_hi - a_lo;
  const double b_span = b_hi - b_lo;
  return {{a_lo - 0.2 * a_span, a_hi + 0.2 * a_span}, {b_lo - 0.2 * b_span, b_hi + 0.2 * b_span}};
}

LandscapeGrid eval_plane(const PlaneBasis& basis, AxisRange a_range, AxisRange b_range,
                         std::size_t res_a, std::size_t res_b, const ModelSpec& spec,
                         const Dataset& data) {
  if (data.size() == 0) throw ConfigError("eval_plane needs a non-empty dataset");
  if (res_a < 2 || res_b < 2) throw ConfigError("eval_plane needs resolution >= 2 per axis");
  check_compatible(basis.origin, spec);

  LandscapeGrid g;
  g.kind = GridKind::kPlane;
  g.a_values = linspace(a_range.lo, a_range.hi, res_a);
  g.b_values = linspace(b_range.lo, b_range.hi, res_b);
  g.loss.resize(static_cast<Eigen::Index>(res_a), static_cast<Eigen::Index>(res_b));
  g.error.resize(static_cast<Eigen::Index>(res_a), static_cast<Eigen::Index>(res_b));
  for (std::size_t i = 0; i < res_a; ++i) {
    for (std::size_t j = 0; j < res_b; ++j) {
      const auto ev = evaluate(reconstruct_at(basis, g.a_values[i], g.b_values[j]), spec, data);
      g.loss(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ev.loss;
      g.error(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ev.error();
    }
  }

  const std::pair<const char*, std::pair<double, double>> anchors[] = {
      {"w1", {0.0, 0.0}}, {"w2", basis.coords_w2}, {"w3", basis.coords_w3}};
  for (const auto& [name, ab] : anchors) {
    const auto [a, b] = ab;
    if (a < a_range.lo || a > a_range.hi || b < b_range.lo || b > b_range.hi) {
      g.warnings.push_back(std::string("anchor ") + name + " lies outside the grid ranges");
    }
    g.anchors.push_back({name, a, b, nearest_index(g.a_values, a), nearest_index(g.b_values, b)});
  }
  return g;
}

void write_line_csv(std::ostream& out, const LandscapeGrid& grid) {
  const auto prec = out.precision(17);
  out << "beta,loss,error\n";
  for (std::size_t i = 0; i < grid.a_values.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << grid.a_values[i] << "," << grid.loss(r, 0) << "," << grid.error(r, 0) << "\n";
  }
  out.precision(prec);
}

void write_plane_csv(std::ostream& out, const LandscapeGrid& grid) {
  const auto prec = out.precision(17);
  out << "# kind=plane a_range=" << grid.a_values.front() << ":" << grid.a_values.back()
      << " res_a=" << grid.a_values.size() << " b_range=" << grid.b_values.front() << ":"
      << grid.b_values.back() << " res_b=" << grid.b_values.size();
  for (const auto& m : grid.anchors) {
    out << " " << m.name << "=(" << m.a << ";" << m.b << ";cell=" << m.ia << ";" << m.ib << ")";
  }
  out << "\n";
  out << "a,b,loss,error\n";
  for (std::size_t i = 0; i < grid.a_values.size(); ++i) {
    for (std::size_t j = 0; j < grid.b_values.size(); ++j) {
      const auto r = static_cast<Eigen::Index>(i);
      const auto c = static_cast<Eigen::Index>(j);
      out << grid.a_values[i] << "," << grid.b_values[j] << "," << grid.loss(r, c) << ","
          << grid.error(r, c) << "\n";
    }
  }
  out.precision(prec);
}

}  // namespace fedima
