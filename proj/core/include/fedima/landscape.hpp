// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

// Loss/error landscapes along a segment between two models and over the plane
// through three models.

#ifndef FEDIMA_LANDSCAPE_HPP_
#define FEDIMA_LANDSCAPE_HPP_

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedima/data.hpp"
#include "fedima/nn.hpp"

namespace fedima {

struct PlaneBasis {
  ParamVector origin;         // w1
  std::vector<double> u_hat;  // unit vector along w2 - w1
  std::vector<double> v_hat;  // unit vector, orthogonal to u_hat, in span(w2-w1, w3-w1)
  std::pair<double, double> coords_w2;
  std::pair<double, double> coords_w3;
};

enum class GridKind { kLine, kPlane };

struct AnchorMark {
  std::string name;
  double a = 0.0;
  double b = 0.0;
  std::size_t ia = 0;  // nearest lattice indices
  std::size_t ib = 0;
};

struct LandscapeGrid {
  GridKind kind = GridKind::kLine;
  std::vector<double> a_values;  // betas for a line
  std::vector<double> b_values;  // empty for a line
  Matrix loss;                   // res_a x res_b (line: res x 1)
  Matrix error;
  std::vector<AnchorMark> anchors;
  std::vector<std::string> warnings;
};

/// Model at beta * w1 + (1 - beta) * w2 for each beta.
LandscapeGrid interpolate_1d(const ParamVector& w1, const ParamVector& w2, std::span<const double> betas,
                             const ModelSpec& spec, const Dataset& data);

/// Evenly spaced values lo..hi inclusive; value i is lo + (hi - lo) * (i / (count - 1)).
std::vector<double> linspace(double lo, double hi, std::size_t count);

/// Throws ConfigError when w2 == w1 or w3 lies on the w1-w2 line.
PlaneBasis build_plane(const ParamVector& w1, const ParamVector& w2, const ParamVector& w3);

ParamVector reconstruct_at(const PlaneBasis& basis, double a, double b);

struct AxisRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// Default ranges: anchors' bounding box extended by 20% of its span per side.
std::pair<AxisRange, AxisRange> default_plane_ranges(const PlaneBasis& basis);

LandscapeGrid eval_plane(const PlaneBasis& basis, AxisRange a_range, AxisRange b_range,
                         std::size_t res_a, std::size_t res_b, const ModelSpec& spec,
                         const Dataset& data);

void write_line_csv(std::ostream& out, const LandscapeGrid& grid);
void write_plane_csv(std::ostream& out, const LandscapeGrid& grid);

}  // namespace fedima

#endif  // FEDIMA_LANDSCAPE_HPP_
