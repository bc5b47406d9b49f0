// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

// Federated training: client local SGD, server aggregation (FedAvg, FedNova,
// FedAdam, FedYogi, FedGMA) and iterative moving averaging (IMA) of recent
// global models with mild client exploration.

#ifndef FEDIMA_FEDERATION_HPP_
#define FEDIMA_FEDERATION_HPP_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fedima/data.hpp"
#include "fedima/nn.hpp"

namespace fedima {

struct FedAvgAgg {};
struct FedNovaAgg {};
struct FedAdamAgg {
  double server_lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double tau = 0.001;
};
struct FedYogiAgg {
  double server_lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double tau = 0.001;
};
struct FedGmaAgg {
  double epsilon = 0.8;
  double server_lr = 1.0;
};
using Aggregator = std::variant<FedAvgAgg, FedNovaAgg, FedAdamAgg, FedYogiAgg, FedGmaAgg>;

std::string aggregator_name(const Aggregator& agg);

struct ImaConfig {
  int start_round = 1;  // t_s; rounds are numbered 1..R
  int window = 5;       // P
  /// Client schedule once t >= t_s, indexed by (t - t_s). Empty means keep
  /// the base schedule unchanged (no additional decay).
  std::optional<LrSchedule> mild;
  /// Restart the mild schedule from the base lr in effect at t_s instead of
  /// its own initial lr (exponential and epoch-decay schedules).
  bool mild_from_current_lr = true;
};

struct FederationConfig {
  std::size_t num_clients = 10;
  double participation = 1.0;
  int rounds = 1;
  int local_epochs = 1;
  std::size_t batch_size = 32;
  LrSchedule schedule = ConstantLr{0.01};
  double momentum = 0.0;
  Aggregator aggregator = FedAvgAgg{};
  double prox_mu = 0.0;
  std::optional<ImaConfig> ima;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  int eval_every = 1;  // rounds between test evaluations; the last round is always evaluated

  /// Throws ConfigError on any violated invariant.
  void validate() const;
  std::size_t clients_per_round() const;
};

struct ClientUpdate {
  std::size_t client_id = 0;
  std::vector<double> delta;  // final - init
  std::size_t num_samples = 0;
  std::size_t num_steps = 0;  // local SGD steps (tau_k)
  ParamVector final_params;
};

struct RoundRecord {
  int round = 0;
  double lr = 0.0;
  int local_epochs = 0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  bool evaluated = false;
  double locality = 0.0;  // max_k ||w_k - w_FMA||_2
  bool broadcast_ima = false;
  std::vector<std::size_t> participants;
};

struct GlobalState {
  int round = 0;
  ParamVector global;
  std::deque<ParamVector> history;  // newest first, aggregated models only
  std::optional<ParamVector> ima_model;
  std::vector<double> server_m;
  std::vector<double> server_v;
};

/// Uniform sample of `count` distinct ids from [0, K), in draw order.
std::vector<std::size_t> sample_clients(std::mt19937_64& rng, std::size_t num_clients,
                                        std::size_t count);

/// Seed for client `client_id` in round `round`; independent of scheduling.
std::uint64_t client_round_seed(std::uint64_t seed, int round, std::size_t client_id);

struct LocalTrainOptions {
  int epochs = 1;
  std::size_t batch_size = 32;
  double lr = 0.01;
  double momentum = 0.0;
  double prox_mu = 0.0;
};

ClientUpdate local_train(const ParamVector& init, const ModelSpec& spec, const Dataset& client_data,
                         const LocalTrainOptions& options, std::uint64_t seed);

/// Weighted mean of client deltas, weights n_k / sum n.
std::vector<double> weighted_delta(std::span<const ClientUpdate> updates);

ParamVector fma_aggregate(std::span<const ClientUpdate> updates, const ParamVector& init);
ParamVector fednova_aggregate(std::span<const ClientUpdate> updates, const ParamVector& init);

struct AdaptiveParams {
  double server_lr;
  double beta1;
  double beta2;
  double tau;
};

/// One server step: m, v updated in place; returns base + lr * m / (sqrt(v) + tau).
ParamVector fedadam_step(const ParamVector& base, std::span<const double> pseudo_grad,
                         std::vector<double>& m, std::vector<double>& v, const AdaptiveParams& p);
ParamVector fedyogi_step(const ParamVector& base, std::span<const double> pseudo_grad,
                         std::vector<double>& m, std::vector<double>& v, const AdaptiveParams& p);

/// Weighted-mean delta with coordinates zeroed where fewer than a fraction
/// `epsilon` of clients agree in sign with it (zero counts as disagreement).
std::vector<double> fedgma_mask(std::span<const ClientUpdate> updates, double epsilon);

/// Unweighted mean of the newest `window` models (history is newest first).
ParamVector ima_average(const std::deque<ParamVector>& history, int window);

/// Max L2 distance between any client's final model and `center`.
double locality(std::span<const ClientUpdate> updates, const ParamVector& center);

/// Passed to the observer after the server step of every round.
struct RoundEvent {
  int round;
  const ParamVector& broadcast;
  bool broadcast_ima;
  std::span<const ClientUpdate> updates;  // ascending client id
  const GlobalState& state;
  const RoundRecord& record;
};
using RoundObserver = std::function<void(const RoundEvent&)>;

struct FederationResult {
  std::vector<RoundRecord> trajectory;
  GlobalState final_state;
};

class Federation {
 public:
  Federation(FederationConfig config, ModelSpec spec, Dataset train, Partition partition,
             Dataset test);

  /// Runs rounds 1..R from `init` (or a seeded initialization).
  FederationResult run(std::optional<ParamVector> init = std::nullopt,
                       const RoundObserver& observer = {}) const;

  /// Client lr and local epochs for round t (base schedule before t_s,
  /// mild schedule after).
  std::pair<double, int> client_schedule(int round) const;

  const FederationConfig& config() const { return config_; }
  const ModelSpec& spec() const { return spec_; }
  const Dataset& train() const { return train_; }
  const Dataset& test() const { return test_; }
  const Partition& partition() const { return partition_; }
  const Dataset& client_data(std::size_t k) const { return client_data_[k]; }

 private:
  FederationConfig config_;
  ModelSpec spec_;
  Dataset train_;
  Partition partition_;
  Dataset test_;
  std::vector<Dataset> client_data_;
};

/// Convenience wrapper around Federation::run.
FederationResult run_federation(const FederationConfig& config, const ModelSpec& spec,
                                const Dataset& train, const Partition& partition,
                                const Dataset& test, const RoundObserver& observer = {});

/// Seed used for the initial global model.
std::uint64_t init_seed(std::uint64_t seed);

}  // namespace fedima

#endif  // FEDIMA_FEDERATION_HPP_
