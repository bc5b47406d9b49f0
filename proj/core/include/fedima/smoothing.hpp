// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDIMA_SMOOTHING_HPP_
#define FEDIMA_SMOOTHING_HPP_

#include <cstddef>
#include <span>
#include <vector>

namespace fedima {

/// Savitzky-Golay smoothing. An even window is widened to the next odd
/// length (minimum 3). Interior points use the centred least-squares
/// polynomial; the first and last half-window points are read off the
/// polynomial fitted to the first / last full window, so polynomials of
/// degree <= poly_order pass through unchanged everywhere.
/// Throws ConfigError if poly_order >= window or the series is shorter than
/// the window.
std::vector<double> smooth_series(std::span<const double> values, std::size_t window,
                                  std::size_t poly_order);

/// First round (1-based position in `values`) whose value reaches `target`,
/// or 0 when it never does.
std::size_t first_reaching(std::span<const double> values, double target);

}  // namespace fedima

#endif  // FEDIMA_SMOOTHING_HPP_
