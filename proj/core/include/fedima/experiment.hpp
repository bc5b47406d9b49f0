// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment orchestration: builds data and partitions from an
// ExperimentConfig, runs federations, writes run artifacts and compares arms.

#ifndef FEDIMA_EXPERIMENT_HPP_
#define FEDIMA_EXPERIMENT_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fedima/config.hpp"
#include "fedima/decomposition.hpp"
#include "fedima/federation.hpp"

namespace fedima {

inline constexpr const char* kCodeVersion = "fedima 0.1.0";

struct ExperimentSetup {
  Dataset train;
  Dataset test;
  Partition partition;
  ModelSpec spec;
  FederationConfig federation;
};

/// Data, test set and partition depend only on the experiment seed and the
/// dataset/partition blocks, so arms differing in other fields share them.
ExperimentSetup build_setup(const ExperimentConfig& config);

Dataset build_train_data(const ExperimentConfig& config);
Dataset build_test_data(const ExperimentConfig& config);
Partition build_partition(const ExperimentConfig& config, const Dataset& train);

struct RunArtifacts {
  std::filesystem::path metrics_csv;
  std::filesystem::path manifest_json;
  std::filesystem::path config_file;
  std::vector<std::filesystem::path> checkpoints;
};

/// Runs the configured federation and writes metrics.csv, config.cfg,
/// manifest.json and checkpoints (every `checkpoint_every` rounds plus the
/// final FMA and, when IMA ran, the final IMA model) into `out_dir`.
RunArtifacts run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                            FederationResult* result = nullptr);

void write_metrics_csv(std::ostream& out, const std::vector<RoundRecord>& trajectory,
                       const std::string& aggregator);

struct RunSummary {
  double final_accuracy = 0.0;
  double last10_mean_accuracy = 0.0;
  /// First round whose smoothed accuracy reaches the target; 0 if never.
  int rounds_to_target = 0;
};

/// Needs every round evaluated. Smoothing uses window 10 and order 2.
RunSummary summarize(const std::vector<RoundRecord>& trajectory, double target_accuracy);

enum class CompareAxis { kIma, kAggregator, kDecay };

std::optional<CompareAxis> parse_compare_axis(const std::string& name);
std::string to_string(CompareAxis axis);

struct ArmResult {
  std::string name;
  std::uint64_t seed = 0;
  RunSummary summary;
};

struct CompareReport {
  CompareAxis axis = CompareAxis::kIma;
  std::vector<std::string> arm_names;
  std::vector<ArmResult> runs;  // arm-major, then seed
  /// Means over seeds; rounds_to_target averages only the seeds that reach the target.
  std::vector<RunSummary> mean_per_arm;
};

/// Throws InvariantError if two arms differ outside the keys owned by `axis`.
void check_arm_diff(const ExperimentConfig& a, const ExperimentConfig& b, CompareAxis axis);

/// Runs every arm for every seed. Arms share data, partition and seeds.
CompareReport compare(const std::vector<std::pair<std::string, ExperimentConfig>>& arms,
                      CompareAxis axis, const std::vector<std::uint64_t>& seeds,
                      double target_accuracy);

void write_compare_csv(std::ostream& out, const CompareReport& report);

/// Default arm pairs for an axis, derived from `base`.
std::vector<std::pair<std::string, ExperimentConfig>> default_arms(const ExperimentConfig& base,
                                                                   CompareAxis axis);

struct DecompositionRow {
  int round = 0;
  DecompositionReport report;
};

/// At every `decomposition.every` rounds (and the last round) every client
/// trains from the broadcast model under S different seeds; the S joint draws
/// form the ensemble. With seed_replicas, draw s starts from the broadcast of
/// an independent federation replica s; with round_clients all draws share
/// the main run's broadcast.
std::vector<DecompositionRow> run_decomposition(const ExperimentConfig& config);

void write_decomposition_csv(std::ostream& out, const std::vector<DecompositionRow>& rows);

}  // namespace fedima

#endif  // FEDIMA_EXPERIMENT_HPP_
