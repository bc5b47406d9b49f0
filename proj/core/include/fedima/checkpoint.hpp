// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDIMA_CHECKPOINT_HPP_
#define FEDIMA_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

#include "fedima/nn.hpp"

namespace fedima {

// Binary layout, all little-endian:
//   "FIMA" | u16 version | u64 fingerprint | u64 count | count x f64
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::string encode_checkpoint(const ParamVector& params);
/// Throws InvariantError on bad magic, version, or truncated payload.
ParamVector decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamVector& params);
ParamVector load_checkpoint(const std::filesystem::path& path);
/// Loads and checks the fingerprint against `spec`.
ParamVector load_checkpoint(const std::filesystem::path& path, const ModelSpec& spec);

}  // namespace fedima

#endif  // FEDIMA_CHECKPOINT_HPP_
