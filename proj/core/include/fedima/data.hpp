// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic classification data and heterogeneous client partitions.

#ifndef FEDIMA_DATA_HPP_
#define FEDIMA_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fedima/common.hpp"
#include "fedima/nn.hpp"

namespace fedima {

struct Dataset {
  Matrix features;          // n x d
  std::vector<int> labels;  // n, each in [0, num_classes)
  Matrix one_hot_targets;   // n x c
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

  /// Builds a dataset and its one-hot targets; throws ConfigError on bad labels.
  static Dataset from_labels(Matrix features, std::vector<int> labels, std::size_t num_classes);
  /// Rows `indices` in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Targets matching `loss`: one-hot rows for both MSE and cross-entropy.
  const Matrix& targets() const { return one_hot_targets; }
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  double error() const { return 1.0 - accuracy; }
};

/// Mean loss under the model's loss kind and top-1 accuracy (argmax, ties to
/// the lowest class index).
Evaluation evaluate(const ParamVector& params, const ModelSpec& spec, const Dataset& data);
std::vector<int> predict_classes(const Matrix& outputs);

/// Gaussian blobs with identity covariance. Class c has mean
/// separation * (+/- e_{c mod dim}); the sign flips every `dim` classes.
/// Rows are shuffled. Deterministic in `seed`.
Dataset gen_synthetic_classification(std::uint64_t seed, std::size_t n_classes,
                                     std::size_t n_per_class, std::size_t dim,
                                     double class_separation);
Vector class_mean(std::size_t cls, std::size_t dim, double class_separation);

struct ShardsMethod {
  std::size_t classes_per_client;
};
struct DirichletMethod {
  double alpha;
};
struct IidMethod {};
using PartitionMethod = std::variant<ShardsMethod, DirichletMethod, IidMethod>;

struct Partition {
  std::vector<std::vector<std::size_t>> client_indices;
  PartitionMethod method;
  std::uint64_t seed = 0;

  std::size_t num_clients() const { return client_indices.size(); }
  std::size_t client_size(std::size_t k) const { return client_indices[k].size(); }
};

std::string describe(const PartitionMethod& method);

Partition partition_iid(const Dataset& data, std::size_t num_clients, std::uint64_t seed);
Partition partition_shards(const Dataset& data, std::size_t num_clients,
                           std::size_t classes_per_client, std::uint64_t seed);
Partition partition_dirichlet(const Dataset& data, std::size_t num_clients, double alpha,
                              std::uint64_t seed);

/// Splits `total` into integer parts proportional to `weights` that sum to
/// `total` exactly (largest remainder; ties go to the lower index).
std::vector<std::size_t> largest_remainder_counts(std::span<const double> weights,
                                                  std::size_t total);

struct FeatureSkewSpec {
  double rotation = 0.0;       // radians, in the plane of the first two features
  double scale = 1.0;          // > 0
  std::vector<double> offset;  // empty means zero
};

/// Replaces each client's feature rows by scale * R(rotation) x + offset.
Dataset apply_feature_skew(const Dataset& data, const Partition& partition,
                           std::span<const FeatureSkewSpec> specs);

struct PartitionReport {
  bool disjoint = true;
  bool in_range = true;
  bool all_nonempty = true;
  std::size_t assigned = 0;  // total indices assigned, duplicates included
  std::size_t covered = 0;   // distinct in-range indices
  std::vector<std::size_t> client_sizes;
  std::vector<std::vector<std::size_t>> class_histograms;

  bool ok() const { return disjoint && in_range && all_nonempty; }
};

PartitionReport validate_partition(const Dataset& data, const Partition& partition);

void write_dataset_csv(std::ostream& out, const Dataset& data);
void write_partition_csv(std::ostream& out, const Partition& partition);
void write_partition_report(std::ostream& out, const PartitionReport& report);

}  // namespace fedima

#endif  // FEDIMA_DATA_HPP_
