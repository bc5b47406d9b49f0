// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedima/smoothing.hpp"

#include <string>

#include "fedima/common.hpp"

namespace fedima {
namespace {

// Row vector c such that c . y is the least-squares polynomial (in offsets
// relative to the window's first point) evaluated at offset `at`.
Eigen::RowVectorXd fit_weights(std::size_t window, std::size_t order, double at) {
  const auto w = static_cast<Eigen::Index>(window);
  const auto p = static_cast<Eigen::Index>(order + 1);
  // Offsets are centred on the window to keep the Vandermonde well conditioned.
  const double centre = 0.5 * static_cast<double>(window - 1);
  Eigen::MatrixXd a(w, p);
  for (Eigen::Index i = 0; i < w; ++i) {
    double x = 1.0;
    for (Eigen::Index j = 0; j < p; ++j, x *= static_cast<double>(i) - centre) a(i, j) = x;
  }
  Eigen::RowVectorXd basis(p);
  double x = 1.0;
  for (Eigen::Index j = 0; j < p; ++j, x *= at - centre) basis(j) = x;
  // weights = basis * pinv(A)
  const Eigen::MatrixXd pinv = a.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(w, w));
  return basis * pinv;
}

}  // namespace

std::vector<double> smooth_series(std::span<const double> values, std::size_t window,
                                  std::size_t poly_order) {
  if (window < 3) window = 3;
  if (window % 2 == 0) ++window;
  if (poly_order >= window) throw ConfigError("Savitzky-Golay poly_order must be < window");
  if (values.size() < window) {
    throw ConfigError("series of length " + std::to_string(values.size()) +
                      " is shorter than the smoothing window " + std::to_string(window));
  }
  const std::size_t half = window / 2;
  const std::size_t n = values.size();
  std::vector<double> out(n);

  const auto apply = [&](const Eigen::RowVectorXd& c, std::size_t first) {
    double s = 0.0;
    for (std::size_t i = 0; i < window; ++i) s += c(static_cast<Eigen::Index>(i)) * values[first + i];
    return s;
  };

  const Eigen::RowVectorXd centre = fit_weights(window, poly_order, static_cast<double>(half));
  for (std::size_t i = half; i + half < n; ++i) out[i] = apply(centre, i - half);
  for (std::size_t i = 0; i < half; ++i) {
    out[i] = apply(fit_weights(window, poly_order, static_cast<double>(i)), 0);
    const std::size_t tail = window - 1 - i;  // offset inside the last window
    out[n - 1 - i] = apply(fit_weights(window, poly_order, static_cast<double>(tail)), n - window);
  }
  return out;
}

std::size_t first_reaching(std::span<const double> values, double target) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] >= target) return i + 1;
  }
  return 0;
}

}  // namespace fedima
