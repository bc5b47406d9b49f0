// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment configuration files.
//
// The format is line oriented:
//
//   # comment
//   seed = 3
//   [federation]
//   clients = 20
//   participation = 0.25
//
// Keys before the first [section] belong to the "experiment" section. The
// canonical form sorts sections and keys, so its hash ignores field order.

#ifndef FEDIMA_CONFIG_HPP_
#define FEDIMA_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedima/data.hpp"
#include "fedima/federation.hpp"
#include "fedima/nn.hpp"

namespace fedima {

class ConfigDoc {
 public:
  using Section = std::map<std::string, std::string>;

  static ConfigDoc parse(const std::string& text);
  static ConfigDoc load(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, std::string value);
  void erase(const std::string& section, const std::string& key);
  const std::map<std::string, Section>& sections() const { return sections_; }

  std::string canonical() const;
  std::uint64_t hash() const;

 private:
  std::map<std::string, Section> sections_;
};

std::string hex64(std::uint64_t v);
/// Shortest text that parses back to exactly `v`.
std::string format_double(double v);

struct DatasetConfig {
  std::size_t classes = 4;
  std::size_t per_class = 150;
  std::size_t test_per_class = 100;
  std::size_t dim = 8;
  double separation = 2.5;
};

enum class PartitionKind { kDirichlet, kShards, kIid };

struct PartitionConfig {
  PartitionKind kind = PartitionKind::kDirichlet;
  double alpha = 0.1;
  std::size_t classes_per_client = 2;
  /// Client k's features are rotated by k * rotation_step radians (0 disables).
  double rotation_step = 0.0;
};

struct ModelConfig {
  std::vector<std::size_t> hidden = {16};
  Activation activation = Activation::kRelu;
  LossKind loss = LossKind::kSoftmaxCrossEntropy;
};

enum class EnsembleSource { kRoundClients, kSeedReplicas };

struct DecompositionConfig {
  EnsembleSource source = EnsembleSource::kSeedReplicas;
  std::size_t replicas = 8;  // S
  int every = 20;            // rounds between decompositions
};

struct LandscapeConfig {
  std::size_t points = 21;      // 1D interpolation points
  std::size_t resolution = 21;  // per plane axis
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  DatasetConfig dataset;
  PartitionConfig partition;
  ModelConfig model;
  FederationConfig federation;
  DecompositionConfig decomposition;
  LandscapeConfig landscape;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
  ModelSpec model_spec() const;
};

/// Strict: unknown sections or keys are errors.
ExperimentConfig parse_experiment(const ConfigDoc& doc);
/// Every field written out, so the canonical form pins the full configuration.
ConfigDoc to_doc(const ExperimentConfig& config);

/// The synthetic default task (4 Gaussian classes in 8-D, 20 clients with
/// Dirichlet(0.1) label skew, 120 rounds, IMA from round 90 with P = 5).
ExperimentConfig default_experiment();

}  // namespace fedima

#endif  // FEDIMA_CONFIG_HPP_
