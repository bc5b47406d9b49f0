// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedima/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace fedima {
namespace {

constexpr char kMagic[4] = {'F', 'I', 'M', 'A'};
constexpr std::size_t kHeaderSize = 4 + 2 + 8 + 8;

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint16_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t offset) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint16_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bits |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(in[offset + i])) << (8 * i));
  }
  return std::bit_cast<T>(bits);
}

}  // namespace

std::string encode_checkpoint(const ParamVector& params) {
  std::string out;
  out.reserve(kHeaderSize + 8 * params.size());
  out.append(kMagic, 4);
  put_le(out, kCheckpointVersion);
  put_le(out, params.spec_fingerprint);
  put_le(out, static_cast<std::uint64_t>(params.size()));
  for (double v : params.values) put_le(out, v);
  return out;
}

ParamVector decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw InvariantError("not a FIMA checkpoint");
  }
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kCheckpointVersion) {
    throw InvariantError("unsupported checkpoint version " + std::to_string(version));
  }
  ParamVector p;
  p.spec_fingerprint = get_le<std::uint64_t>(bytes, 6);
  const auto count = get_le<std::uint64_t>(bytes, 14);
  if (bytes.size() != kHeaderSize + 8 * count) {
    throw InvariantError("checkpoint payload size does not match its parameter count");
  }
  p.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) p.values[i] = get_le<double>(bytes, kHeaderSize + 8 * i);
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ParamVector& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_checkpoint(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ParamVector load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

ParamVector load_checkpoint(const std::filesystem::path& path, const ModelSpec& spec) {
  ParamVector p = load_checkpoint(path);
  check_compatible(p, spec);
  return p;
}

}  // namespace fedima
