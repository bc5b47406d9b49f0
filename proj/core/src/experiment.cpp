// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedima/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

#include "fedima/checkpoint.hpp"
#include "fedima/smoothing.hpp"

namespace fedima {
namespace {

constexpr std::uint64_t kTrainDataStream = 0x54524e;    // "TRN"
constexpr std::uint64_t kTestDataStream = 0x545354;     // "TST"
constexpr std::uint64_t kPartitionStream = 0x505254;    // "PRT"
constexpr std::uint64_t kReplicaStream = 0x52504c;      // "RPL"
constexpr std::uint64_t kDecompDrawStream = 0x445257;   // "DRW"

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string checkpoint_name(int round) {
  std::string digits = std::to_string(round);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return "ckpt_round_" + digits + ".fima";
}

bool key_owned_by(CompareAxis axis, const std::string& section, const std::string& key) {
  switch (axis) {
    case CompareAxis::kIma:
      return section == "ima";
    case CompareAxis::kAggregator:
      return section == "aggregator" || (section == "federation" && key == "aggregator");
    case CompareAxis::kDecay:
      return section == "schedule" || (section == "ima" && key.rfind("mild_", 0) == 0);
  }
  return false;
}

}  // namespace

Dataset build_train_data(const ExperimentConfig& c) {
  return gen_synthetic_classification(derive_seed(c.seed, kTrainDataStream), c.dataset.classes,
                                      c.dataset.per_class, c.dataset.dim, c.dataset.separation);
}

Dataset build_test_data(const ExperimentConfig& c) {
  return gen_synthetic_classification(derive_seed(c.seed, kTestDataStream), c.dataset.classes,
                                      c.dataset.test_per_class, c.dataset.dim, c.dataset.separation);
}

Partition build_partition(const ExperimentConfig& c, const Dataset& train) {
  const std::uint64_t seed = derive_seed(c.seed, kPartitionStream);
  const std::size_t k = c.federation.num_clients;
  switch (c.partition.kind) {
    case PartitionKind::kDirichlet:
      return partition_dirichlet(train, k, c.partition.alpha, seed);
    case PartitionKind::kShards:
      return partition_shards(train, k, c.partition.classes_per_client, seed);
    case PartitionKind::kIid:
      return partition_iid(train, k, seed);
  }
  throw ConfigError("unknown partition kind");
}

ExperimentSetup build_setup(const ExperimentConfig& config) {
  config.validate();
  ExperimentSetup s{build_train_data(config), build_test_data(config), {}, config.model_spec(),
                    config.federation};
  s.federation.seed = config.seed;
  s.partition = build_partition(config, s.train);
  if (config.partition.rotation_step != 0.0) {
    std::vector<FeatureSkewSpec> skew(s.partition.num_clients());
    for (std::size_t k = 0; k < skew.size(); ++k) {
      skew[k].rotation = config.partition.rotation_step * static_cast<double>(k);
    }
    s.train = apply_feature_skew(s.train, s.partition, skew);
  }
  return s;
}

void write_metrics_csv(std::ostream& out, const std::vector<RoundRecord>& trajectory,
                       const std::string& aggregator) {
  const auto prec = out.precision(17);
  out << "round,lr,test_loss,test_acc,locality_l2,broadcast_kind,aggregator\n";
  for (const auto& r : trajectory) {
    out << r.round << "," << r.lr << ",";
    if (r.evaluated) {
      out << r.test_loss << "," << r.test_accuracy;
    } else {
      out << ",";
    }
    out << "," << r.locality << "," << (r.broadcast_ima ? "ima" : "fma") << "," << aggregator << "\n";
  }
  out.precision(prec);
}

RunArtifacts run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                            FederationResult* result_out) {
  const ExperimentSetup setup = build_setup(config);
  std::filesystem::create_directories(out_dir);
  const std::string started = utc_timestamp();

  RunArtifacts art;
  const Federation fed(setup.federation, setup.spec, setup.train, setup.partition, setup.test);
  const auto observer = [&](const RoundEvent& ev) {
    if (config.checkpoint_every > 0 && ev.round % config.checkpoint_every == 0) {
      art.checkpoints.push_back(out_dir / checkpoint_name(ev.round));
      save_checkpoint(art.checkpoints.back(), ev.state.global);
    }
  };
  FederationResult result = fed.run(std::nullopt, observer);

  art.checkpoints.push_back(out_dir / "final_fma.fima");
  save_checkpoint(art.checkpoints.back(), result.final_state.global);
  if (result.final_state.ima_model) {
    art.checkpoints.push_back(out_dir / "final_ima.fima");
    save_checkpoint(art.checkpoints.back(), *result.final_state.ima_model);
  }

  art.metrics_csv = out_dir / "metrics.csv";
  {
    auto out = open_out(art.metrics_csv);
    write_metrics_csv(out, result.trajectory, aggregator_name(config.federation.aggregator));
  }
  const ConfigDoc doc = to_doc(config);
  art.config_file = out_dir / "config.cfg";
  open_out(art.config_file) << doc.canonical();

  nlohmann::json manifest;
  manifest["config_hash"] = hex64(doc.hash());
  manifest["code_version"] = kCodeVersion;
  manifest["seed"] = config.seed;
  manifest["started_utc"] = started;
  manifest["finished_utc"] = utc_timestamp();
  std::vector<std::string> files{art.metrics_csv.filename().string(), art.config_file.filename().string()};
  for (const auto& p : art.checkpoints) files.push_back(p.filename().string());
  manifest["files"] = files;
  art.manifest_json = out_dir / "manifest.json";
  open_out(art.manifest_json) << manifest.dump(2) << "\n";

  if (result_out) *result_out = std::move(result);
  return art;
}

RunSummary summarize(const std::vector<RoundRecord>& trajectory, double target_accuracy) {
  if (trajectory.empty()) throw ConfigError("summarize needs a non-empty trajectory");
  std::vector<double> acc;
  acc.reserve(trajectory.size());
  for (const auto& r : trajectory) {
    if (!r.evaluated) throw ConfigError("summarize needs every round evaluated (eval_every = 1)");
    acc.push_back(r.test_accuracy);
  }
  RunSummary s;
  s.final_accuracy = acc.back();
  const std::size_t tail = std::min<std::size_t>(10, acc.size());
  double sum = 0.0;
  for (std::size_t i = acc.size() - tail; i < acc.size(); ++i) sum += acc[i];
  s.last10_mean_accuracy = sum / static_cast<double>(tail);
  // A window of 10 is widened to 11 by the filter.
  const auto smoothed = acc.size() >= 11 ? smooth_series(acc, 10, 2) : acc;
  s.rounds_to_target = static_cast<int>(first_reaching(smoothed, target_accuracy));
  return s;
}

std::optional<CompareAxis> parse_compare_axis(const std::string& name) {
  if (name == "ima") return CompareAxis::kIma;
  if (name == "aggregator") return CompareAxis::kAggregator;
  if (name == "decay") return CompareAxis::kDecay;
  return std::nullopt;
}

std::string to_string(CompareAxis axis) {
  switch (axis) {
    case CompareAxis::kIma:
      return "ima";
    case CompareAxis::kAggregator:
      return "aggregator";
    case CompareAxis::kDecay:
      return "decay";
  }
  return "?";
}

void check_arm_diff(const ExperimentConfig& a, const ExperimentConfig& b, CompareAxis axis) {
  const auto da = to_doc(a);
  const auto db = to_doc(b);
  std::map<std::string, std::pair<std::optional<std::string>, std::optional<std::string>>> keys;
  for (const auto& [section, kv] : da.sections()) {
    for (const auto& [k, v] : kv) keys[section + "." + k].first = v;
  }
  for (const auto& [section, kv] : db.sections()) {
    for (const auto& [k, v] : kv) keys[section + "." + k].second = v;
  }
  for (const auto& [name, values] : keys) {
    if (values.first == values.second) continue;
    const auto dot = name.find('.');
    if (!key_owned_by(axis, name.substr(0, dot), name.substr(dot + 1))) {
      throw InvariantError("compare arms differ in '" + name + "', outside the '" + to_string(axis) +
                           "' axis");
    }
  }
}

CompareReport compare(const std::vector<std::pair<std::string, ExperimentConfig>>& arms,
                      CompareAxis axis, const std::vector<std::uint64_t>& seeds,
                      double target_accuracy) {
  if (arms.size() < 2) throw ConfigError("compare needs at least two arms");
  if (seeds.empty()) throw ConfigError("compare needs at least one seed");
  for (std::size_t i = 1; i < arms.size(); ++i) check_arm_diff(arms[0].second, arms[i].second, axis);

  CompareReport report;
  report.axis = axis;
  for (const auto& [name, cfg] : arms) {
    report.arm_names.push_back(name);
    RunSummary mean;
    int reached = 0;
    for (const auto seed : seeds) {
      ExperimentConfig c = cfg;
      c.seed = seed;
      c.federation.eval_every = 1;
      const ExperimentSetup s = build_setup(c);
      const auto result = Federation(s.federation, s.spec, s.train, s.partition, s.test).run();
      const auto summary = summarize(result.trajectory, target_accuracy);
      report.runs.push_back({name, seed, summary});
      mean.final_accuracy += summary.final_accuracy;
      mean.last10_mean_accuracy += summary.last10_mean_accuracy;
      if (summary.rounds_to_target > 0) {
        mean.rounds_to_target += summary.rounds_to_target;
        ++reached;
      }
    }
    const double n = static_cast<double>(seeds.size());
    mean.final_accuracy /= n;
    mean.last10_mean_accuracy /= n;
    mean.rounds_to_target =
        reached ? static_cast<int>(std::lround(mean.rounds_to_target / static_cast<double>(reached))) : 0;
    report.mean_per_arm.push_back(mean);
  }
  return report;
}

void write_compare_csv(std::ostream& out, const CompareReport& report) {
  const auto prec = out.precision(17);
  out << "axis,arm,seed,final_acc,last10_mean_acc,rounds_to_target\n";
  for (const auto& r : report.runs) {
    out << to_string(report.axis) << "," << r.name << "," << r.seed << "," << r.summary.final_accuracy
        << "," << r.summary.last10_mean_accuracy << "," << r.summary.rounds_to_target << "\n";
  }
  for (std::size_t i = 0; i < report.arm_names.size(); ++i) {
    const auto& m = report.mean_per_arm[i];
    out << to_string(report.axis) << "," << report.arm_names[i] << ",mean," << m.final_accuracy << ","
        << m.last10_mean_accuracy << "," << m.rounds_to_target << "\n";
  }
  const auto& base = report.mean_per_arm.front();
  for (std::size_t i = 1; i < report.arm_names.size(); ++i) {
    const auto& m = report.mean_per_arm[i];
    out << to_string(report.axis) << "," << report.arm_names[i] << "-" << report.arm_names[0]
        << ",diff," << m.final_accuracy - base.final_accuracy << ","
        << m.last10_mean_accuracy - base.last10_mean_accuracy << ","
        << m.rounds_to_target - base.rounds_to_target << "\n";
  }
  out.precision(prec);
}

std::vector<std::pair<std::string, ExperimentConfig>> default_arms(const ExperimentConfig& base,
                                                                   CompareAxis axis) {
  std::vector<std::pair<std::string, ExperimentConfig>> arms;
  switch (axis) {
    case CompareAxis::kIma: {
      ExperimentConfig fma = base;
      fma.federation.ima.reset();
      ExperimentConfig ima = base;
      if (!ima.federation.ima) ima.federation.ima = default_experiment().federation.ima;
      arms.emplace_back("fma", fma);
      arms.emplace_back("ima", ima);
      break;
    }
    case CompareAxis::kAggregator: {
      const Aggregator aggs[] = {FedAvgAgg{}, FedNovaAgg{}, FedAdamAgg{}, FedYogiAgg{}, FedGmaAgg{}};
      for (const auto& agg : aggs) {
        ExperimentConfig c = base;
        c.federation.aggregator = agg;
        arms.emplace_back(aggregator_name(agg), c);
      }
      break;
    }
    case CompareAxis::kDecay: {
      ExperimentConfig c = base;
      if (!c.federation.ima) throw ConfigError("the decay axis needs an [ima] block");
      const double lr = schedule_lr(c.federation.schedule, 0);
      const std::pair<const char*, std::optional<LrSchedule>> mild[] = {
          {"none", std::nullopt},
          {"exponential", ExponentialLr{lr, 0.03}},
          {"epoch_decay", EpochDecay{lr, c.federation.local_epochs, 5}},
          {"cyclic", CyclicLr{lr, lr * 0.01, 5}},
      };
      for (const auto& [name, schedule] : mild) {
        c.federation.ima->mild = schedule;
        arms.emplace_back(name, c);
      }
      break;
    }
  }
  return arms;
}

std::vector<DecompositionRow> run_decomposition(const ExperimentConfig& config) {
  const ExperimentSetup setup = build_setup(config);
  const Federation fed(setup.federation, setup.spec, setup.train, setup.partition, setup.test);
  const auto& cfg = setup.federation;
  const std::size_t draws = config.decomposition.replicas;
  const auto wanted = [&](int t) { return t % config.decomposition.every == 0 || t == cfg.rounds; };

  // broadcasts[t][s]: starting model of draw s at round t.
  std::map<int, std::vector<ParamVector>> broadcasts;
  const auto collect = [&](const RoundEvent& ev) {
    if (wanted(ev.round)) broadcasts[ev.round].push_back(ev.broadcast);
  };
  if (config.decomposition.source == EnsembleSource::kRoundClients) {
    fed.run(std::nullopt, collect);
    for (auto& [t, models] : broadcasts) models.resize(draws, models.front());
  } else {
    const ParamVector init = init_params(setup.spec, init_seed(cfg.seed));
    for (std::size_t s = 0; s < draws; ++s) {
      FederationConfig replica = cfg;
      replica.seed = derive_seed(cfg.seed, kReplicaStream, s);
      Federation(replica, setup.spec, setup.train, setup.partition, setup.test).run(init, collect);
    }
  }

  JointEnsemble ensemble;
  ensemble.client_indices = setup.partition.client_indices;
  ensemble.weights = size_weights(ensemble.client_indices);
  ensemble.kind = EnsembleKind::kJoint;

  std::vector<DecompositionRow> rows;
  for (const auto& [t, starts] : broadcasts) {
    const auto [lr, epochs] = fed.client_schedule(t);
    const LocalTrainOptions opts{epochs, cfg.batch_size, lr, cfg.momentum, cfg.prox_mu};
    ensemble.samples.assign(draws, {});
    for (std::size_t s = 0; s < draws; ++s) {
      for (std::size_t k = 0; k < cfg.num_clients; ++k) {
        const auto seed = derive_seed(derive_seed(cfg.seed, kDecompDrawStream, s), static_cast<std::uint64_t>(t), k);
        ensemble.samples[s].push_back(local_train(starts[s], setup.spec, fed.client_data(k), opts, seed).final_params);
      }
    }
    rows.push_back({t, decompose(ensemble, setup.spec, setup.train)});
  }
  return rows;
}

void write_decomposition_csv(std::ostream& out, const std::vector<DecompositionRow>& rows) {
  const auto prec = out.precision(17);
  out << "round,bias,train_bias,heter_bias,variance,covariance,wens_loss,direct_loss,fma_loss,"
         "locality,approx_gap,ensemble\n";
  for (const auto& [t, r] : rows) {
    out << t << "," << r.bias_term << "," << r.train_bias_mean_sq << "," << r.heter_bias_mean_sq << ","
        << r.variance_term << "," << r.covariance_term << "," << r.wens_expected_loss << ","
        << r.direct_expected_loss << "," << r.fma_loss << "," << r.locality_delta << ","
        << r.approx_gap << "," << to_string(r.kind) << "\n";
  }
  out.precision(prec);
}

}  // namespace fedima
