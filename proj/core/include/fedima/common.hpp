// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDIMA_COMMON_HPP_
#define FEDIMA_COMMON_HPP_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace fedima {

/// Dense row-major matrix of 64-bit floats. Rows are samples.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// A caller-supplied value violates a documented precondition or a
/// configuration invariant.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A runtime invariant failed (fingerprint mismatch, NaN in a model,
/// malformed checkpoint, ...).
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// FNV-1a over raw bytes. Stable across runs and platforms, unlike std::hash.
class Fnv1a {
 public:
  void update(std::span<const std::uint8_t> bytes) {
    for (auto b : bytes) {
      state_ ^= b;
      state_ *= kPrime;
    }
  }
  void update(std::string_view text) {
    update(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }
  void update_u64(std::uint64_t v) {
    std::uint8_t bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<std::uint8_t>(v >> (8 * i));
    update(std::span(bytes));
  }
  [[nodiscard]] std::uint64_t digest() const { return state_; }

 private:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;
  std::uint64_t state_ = kOffset;
};

/// splitmix64 finalizer; used to derive independent RNG seeds from tuples.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                                  std::uint64_t b = 0) {
  return mix64(mix64(mix64(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

}  // namespace fedima

#endif  // FEDIMA_COMMON_HPP_
