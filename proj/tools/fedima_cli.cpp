// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

// fedima: command-line driver for federated IMA experiments.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fedima/checkpoint.hpp"
#include "fedima/config.hpp"
#include "fedima/experiment.hpp"
#include "fedima/landscape.hpp"

namespace fs = std::filesystem;
using namespace fedima;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInvariant = 3;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "fedima_out";
  bool quiet = false;
};

// Thrown for unreadable or unwritable files.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ExperimentConfig load_config(const CommonOptions& o) {
  ExperimentConfig c = o.config_path.empty() ? default_experiment()
                                             : parse_experiment(ConfigDoc::load(o.config_path));
  if (o.seed) c.seed = *o.seed;
  c.federation.seed = c.seed;
  c.validate();
  return c;
}

fs::path prepare_out(const CommonOptions& o) {
  std::error_code ec;
  fs::create_directories(o.out_dir, ec);
  if (ec || !fs::is_directory(o.out_dir)) throw IoError("output directory not writable: " + o.out_dir);
  return o.out_dir;
}

std::ofstream open_file(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

ParamVector read_checkpoint(const std::string& path, const ModelSpec& spec) {
  if (!fs::exists(path)) throw IoError("checkpoint not found: " + path);
  return load_checkpoint(path, spec);
}

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config_path, "Experiment config file (default task if omitted)")
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "Override the experiment seed");
  sub->add_option("--out", o.out_dir, "Output directory");
  sub->add_flag("--quiet", o.quiet, "Suppress progress output");
}

int cmd_gen_data(const CommonOptions& o) {
  const auto c = load_config(o);
  const auto out = prepare_out(o);
  auto train = open_file(out / "train.csv");
  write_dataset_csv(train, build_train_data(c));
  auto test = open_file(out / "test.csv");
  write_dataset_csv(test, build_test_data(c));
  if (!o.quiet) std::cout << "wrote " << (out / "train.csv") << " and " << (out / "test.csv") << "\n";
  return kExitOk;
}

int cmd_partition(const CommonOptions& o) {
  const auto c = load_config(o);
  const auto out = prepare_out(o);
  const auto setup = build_setup(c);
  auto csv = open_file(out / "partition.csv");
  write_partition_csv(csv, setup.partition);
  const auto report = validate_partition(setup.train, setup.partition);
  auto rep = open_file(out / "partition_report.txt");
  write_partition_report(rep, report);
  if (!report.ok()) throw InvariantError("partition failed validation; see partition_report.txt");
  if (!o.quiet) {
    std::cout << describe(setup.partition.method) << ": " << setup.partition.num_clients()
              << " clients, report ok\n";
  }
  return kExitOk;
}

int cmd_run(const CommonOptions& o) {
  const auto c = load_config(o);
  const auto out = prepare_out(o);
  FederationResult result;
  const auto art = run_experiment(c, out, &result);
  if (!o.quiet) {
    const auto& last = result.trajectory.back();
    std::cout << "round " << last.round << " test_acc " << last.test_accuracy << " test_loss "
              << last.test_loss << "\n"
              << "wrote " << art.metrics_csv << ", " << art.checkpoints.size() << " checkpoints\n";
  }
  return kExitOk;
}

int cmd_decompose(const CommonOptions& o, const std::string& run_dir) {
  CommonOptions opts = o;
  if (!run_dir.empty()) {
    const fs::path dir = run_dir;
    if (!fs::exists(dir / "manifest.json") || !fs::exists(dir / "config.cfg")) {
      throw IoError("run directory lacks manifest.json or config.cfg: " + run_dir);
    }
    std::ifstream in(dir / "manifest.json");
    const auto manifest = nlohmann::json::parse(in, nullptr, false);
    if (manifest.is_discarded() || !manifest.contains("config_hash")) {
      throw IoError("malformed manifest in " + run_dir);
    }
    const auto doc = ConfigDoc::load(dir / "config.cfg");
    if (hex64(doc.hash()) != manifest["config_hash"].get<std::string>()) {
      throw InvariantError("config.cfg does not match the manifest's config hash");
    }
    if (opts.config_path.empty()) opts.config_path = (dir / "config.cfg").string();
  }
  const auto c = load_config(opts);
  const auto out = prepare_out(opts);
  const auto rows = run_decomposition(c);
  auto csv = open_file(out / "decomposition.csv");
  write_decomposition_csv(csv, rows);
  if (!o.quiet) std::cout << "wrote " << rows.size() << " decomposition rows\n";
  return kExitOk;
}

int cmd_landscape_1d(const CommonOptions& o, const std::string& a, const std::string& b, double lo,
                     double hi) {
  const auto c = load_config(o);
  const auto out = prepare_out(o);
  const auto spec = c.model_spec();
  const auto w1 = read_checkpoint(a, spec);
  const auto w2 = read_checkpoint(b, spec);
  const auto betas = linspace(lo, hi, c.landscape.points);
  const auto grid = interpolate_1d(w1, w2, betas, spec, build_test_data(c));
  auto csv = open_file(out / "landscape_1d.csv");
  write_line_csv(csv, grid);
  if (!o.quiet) std::cout << "wrote " << betas.size() << " interpolation points\n";
  return kExitOk;
}

int cmd_landscape_2d(const CommonOptions& o, const std::vector<std::string>& paths,
                     const std::vector<double>& ranges) {
  const auto c = load_config(o);
  const auto out = prepare_out(o);
  const auto spec = c.model_spec();
  const auto basis =
      build_plane(read_checkpoint(paths[0], spec), read_checkpoint(paths[1], spec), read_checkpoint(paths[2], spec));
  auto [ar, br] = default_plane_ranges(basis);
  if (!ranges.empty()) {
    ar = {ranges[0], ranges[1]};
    br = {ranges[2], ranges[3]};
  }
  const auto res = c.landscape.resolution;
  const auto grid = eval_plane(basis, ar, br, res, res, spec, build_test_data(c));
  auto csv = open_file(out / "landscape_2d.csv");
  write_plane_csv(csv, grid);
  for (const auto& w : grid.warnings) std::cerr << "warning: " << w << "\n";
  if (!o.quiet) std::cout << "wrote " << res << "x" << res << " grid\n";
  return kExitOk;
}

int cmd_compare(const CommonOptions& o, const std::string& axis_name, int num_seeds, double target) {
  const auto base = load_config(o);
  const auto out = prepare_out(o);
  const auto axis = parse_compare_axis(axis_name);
  if (!axis) throw ConfigError("unknown compare axis '" + axis_name + "'");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < num_seeds; ++i) seeds.push_back(base.seed + static_cast<std::uint64_t>(i));
  const auto report = compare(default_arms(base, *axis), *axis, seeds, target);
  auto csv = open_file(out / "compare.csv");
  write_compare_csv(csv, report);
  if (!o.quiet) {
    for (std::size_t i = 0; i < report.arm_names.size(); ++i) {
      const auto& m = report.mean_per_arm[i];
      std::cout << report.arm_names[i] << ": final " << m.final_accuracy << ", last-10 mean "
                << m.last10_mean_accuracy << ", rounds to " << target << ": " << m.rounds_to_target
                << "\n";
    }
    const double diff = report.mean_per_arm[1].last10_mean_accuracy -
                        report.mean_per_arm[0].last10_mean_accuracy;
    std::cout << report.arm_names[1] << " - " << report.arm_names[0] << " last-10 mean: " << diff << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedima: federated learning with iterative moving averaging"};
  app.require_subcommand(1);
  CommonOptions common;

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic train and test sets as CSV");
  add_common(gen, common);
  auto* part = app.add_subcommand("partition", "Write the client partition and its validation report");
  add_common(part, common);
  auto* run = app.add_subcommand("run", "Run a federation; write metrics, manifest and checkpoints");
  add_common(run, common);

  std::string run_dir;
  auto* dec = app.add_subcommand("decompose", "Write the bias/variance/covariance decomposition");
  add_common(dec, common);
  dec->add_option("--run", run_dir, "Run directory whose config (checked against its manifest) to use");

  std::string ckpt_a, ckpt_b;
  double beta_lo = 0.0, beta_hi = 1.0;
  auto* l1 = app.add_subcommand("landscape-1d", "Loss along beta*A + (1-beta)*B");
  add_common(l1, common);
  l1->add_option("--a", ckpt_a, "Checkpoint A (beta = 1)")->required();
  l1->add_option("--b", ckpt_b, "Checkpoint B (beta = 0)")->required();
  l1->add_option("--beta-lo", beta_lo, "Smallest beta");
  l1->add_option("--beta-hi", beta_hi, "Largest beta");

  std::vector<std::string> plane;
  std::vector<double> ranges;
  auto* l2 = app.add_subcommand("landscape-2d", "Loss over the plane through three checkpoints");
  add_common(l2, common);
  l2->add_option("--anchors", plane, "Three checkpoints: origin, first axis, third point")
      ->required()
      ->expected(3);
  l2->add_option("--ranges", ranges, "a_lo a_hi b_lo b_hi (default: anchors' box plus 20%)")->expected(4);

  std::string axis = "ima";
  int num_seeds = 5;
  double target = 0.9;
  auto* cmp = app.add_subcommand("compare", "Run matched arms differing along one axis");
  add_common(cmp, common);
  cmp->add_option("--axis", axis, "ima | aggregator | decay");
  cmp->add_option("--seeds", num_seeds, "Number of seeds, starting at the experiment seed")
      ->check(CLI::PositiveNumber);
  cmp->add_option("--target", target, "Target accuracy for rounds-to-target");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*part) return cmd_partition(common);
    if (*run) return cmd_run(common);
    if (*dec) return cmd_decompose(common, run_dir);
    if (*l1) return cmd_landscape_1d(common, ckpt_a, ckpt_b, beta_lo, beta_hi);
    if (*l2) return cmd_landscape_2d(common, plane, ranges);
    if (*cmp) return cmd_compare(common, axis, num_seeds, target);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitIo;
}
