// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedima/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

namespace fedima {
namespace {

constexpr std::uint64_t kSamplingStream = 0x5a4d504cULL;  // "SMPL"
constexpr std::uint64_t kInitStream = 0x494e4954ULL;      // "INIT"

void check_updates(std::span<const ClientUpdate> updates, const ParamVector& init) {
  if (updates.empty()) throw ConfigError("aggregation needs at least one client update");
  for (const auto& u : updates) {
    check_compatible(u.final_params, init);
    if (u.delta.size() != init.size()) throw InvariantError("client delta length mismatch");
  }
}

std::vector<double> client_weights(std::span<const ClientUpdate> updates) {
  const double total = std::accumulate(updates.begin(), updates.end(), 0.0,
                                       [](double acc, const ClientUpdate& u) {
                                         return acc + static_cast<double>(u.num_samples);
                                       });
  if (!(total > 0)) throw ConfigError("client sample counts sum to zero");
  std::vector<double> w;
  w.reserve(updates.size());
  for (const auto& u : updates) w.push_back(static_cast<double>(u.num_samples) / total);
  return w;
}

// init + sum_k coeff_k * delta_k, accumulated in ascending update order.
ParamVector apply_deltas(const ParamVector& init, std::span<const ClientUpdate> updates,
                         std::span<const double> coeffs) {
  ParamVector out = init;
  for (std::size_t i = 0; i < init.size(); ++i) {
    double step = 0.0;
    for (std::size_t k = 0; k < updates.size(); ++k) step += coeffs[k] * updates[k].delta[i];
    out.values[i] = init.values[i] + step;
  }
  return out;
}

ParamVector adaptive_apply(const ParamVector& base, std::span<const double> m,
                           std::span<const double> v, const AdaptiveParams& p) {
  ParamVector out = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    out.values[i] = base.values[i] + p.server_lr * m[i] / (std::sqrt(v[i]) + p.tau);
  }
  return out;
}

void check_adaptive(const ParamVector& base, std::span<const double> g, std::vector<double>& m,
                    std::vector<double>& v) {
  if (m.empty()) m.assign(base.size(), 0.0);
  if (v.empty()) v.assign(base.size(), 0.0);
  if (g.size() != base.size() || m.size() != base.size() || v.size() != base.size()) {
    throw ConfigError("server optimizer: pseudo-gradient/state length mismatch");
  }
}

}  // namespace

std::string aggregator_name(const Aggregator& agg) {
  static constexpr const char* kNames[] = {"fedavg", "fednova", "fedadam", "fedyogi", "fedgma"};
  return kNames[agg.index()];
}

void FederationConfig::validate() const {
  if (num_clients < 1) throw ConfigError("federation needs at least one client");
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw ConfigError("participation must be in (0, 1]");
  }
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(prox_mu >= 0.0)) throw ConfigError("prox_mu must be >= 0");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  fedima::validate(schedule);
  if (const auto* g = std::get_if<FedGmaAgg>(&aggregator)) {
    if (!(g->epsilon >= 0.0 && g->epsilon <= 1.0)) throw ConfigError("fedgma epsilon must be in [0,1]");
  }
  if (ima) {
    if (ima->window < 1) throw ConfigError("IMA window P must be >= 1");
    if (ima->start_round < ima->window) {
      throw ConfigError("IMA start round t_s=" + std::to_string(ima->start_round) +
                        " must be >= window P=" + std::to_string(ima->window));
    }
    if (ima->mild) fedima::validate(*ima->mild);
  }
}

std::size_t FederationConfig::clients_per_round() const {
  const auto count = static_cast<std::size_t>(std::ceil(participation * static_cast<double>(num_clients) - 1e-12));
  return std::clamp<std::size_t>(count, 1, num_clients);
}

std::vector<std::size_t> sample_clients(std::mt19937_64& rng, std::size_t num_clients,
                                        std::size_t count) {
  if (count < 1 || count > num_clients) {
    throw ConfigError("cannot sample " + std::to_string(count) + " of " +
                      std::to_string(num_clients) + " clients");
  }
  std::vector<std::size_t> ids(num_clients);
  std::iota(ids.begin(), ids.end(), 0);
  // Partial Fisher-Yates: the first `count` slots are a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, num_clients - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(count);
  return ids;
}

std::uint64_t client_round_seed(std::uint64_t seed, int round, std::size_t client_id) {
  return derive_seed(seed, static_cast<std::uint64_t>(round), client_id + 1);
}

std::uint64_t init_seed(std::uint64_t seed) { return derive_seed(seed, kInitStream); }

ClientUpdate local_train(const ParamVector& init, const ModelSpec& spec, const Dataset& client_data,
                         const LocalTrainOptions& options, std::uint64_t seed) {
  if (client_data.size() == 0) throw ConfigError("local_train: client has no data");
  if (options.batch_size < 1 || options.epochs < 1) {
    throw ConfigError("local_train: epochs and batch size must be >= 1");
  }
  check_compatible(init, spec);

  const std::size_t n = client_data.size();
  const std::size_t batches = (n + options.batch_size - 1) / options.batch_size;
  ParamVector w = init;
  OptimizerState opt(w.size(), options.momentum);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  const auto d = client_data.features.cols();
  const auto c = client_data.one_hot_targets.cols();
  Matrix x;
  Matrix y;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * options.batch_size;
      const std::size_t end = std::min(n, begin + options.batch_size);
      const auto rows = static_cast<Eigen::Index>(end - begin);
      x.resize(rows, d);
      y.resize(rows, c);
      for (std::size_t r = begin; r < end; ++r) {
        const auto src = static_cast<Eigen::Index>(order[r]);
        x.row(static_cast<Eigen::Index>(r - begin)) = client_data.features.row(src);
        y.row(static_cast<Eigen::Index>(r - begin)) = client_data.one_hot_targets.row(src);
      }
      auto lg = loss_and_grad(w, spec, x, y);
      if (options.prox_mu > 0.0) {
        for (std::size_t i = 0; i < w.size(); ++i) {
          lg.grad[i] += options.prox_mu * (w.values[i] - init.values[i]);
        }
      }
      if (options.lr != 0.0) sgd_step(w, lg.grad, options.lr, opt);
    }
  }

  ClientUpdate u;
  u.delta.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) u.delta[i] = w.values[i] - init.values[i];
  u.num_samples = n;
  u.num_steps = static_cast<std::size_t>(options.epochs) * batches;
  u.final_params = std::move(w);
  return u;
}

std::vector<double> weighted_delta(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw ConfigError("aggregation needs at least one client update");
  const auto p = client_weights(updates);
  std::vector<double> out(updates.front().delta.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double step = 0.0;
    for (std::size_t k = 0; k < updates.size(); ++k) step += p[k] * updates[k].delta[i];
    out[i] = step;
  }
  return out;
}

ParamVector fma_aggregate(std::span<const ClientUpdate> updates, const ParamVector& init) {
  check_updates(updates, init);
  return apply_deltas(init, updates, client_weights(updates));
}

ParamVector fednova_aggregate(std::span<const ClientUpdate> updates, const ParamVector& init) {
  check_updates(updates, init);
  // tau_eff / tau_k is formed from integers so equal step counts give exactly 1.
  double weighted_steps = 0.0;
  double total = 0.0;
  for (const auto& u : updates) {
    if (u.num_steps == 0) throw ConfigError("fednova: client reported zero local steps");
    weighted_steps += static_cast<double>(u.num_samples) * static_cast<double>(u.num_steps);
    total += static_cast<double>(u.num_samples);
  }
  auto coeffs = client_weights(updates);
  for (std::size_t k = 0; k < updates.size(); ++k) {
    coeffs[k] *= weighted_steps / (total * static_cast<double>(updates[k].num_steps));
  }
  return apply_deltas(init, updates, coeffs);
}

ParamVector fedadam_step(const ParamVector& base, std::span<const double> g, std::vector<double>& m,
                         std::vector<double>& v, const AdaptiveParams& p) {
  check_adaptive(base, g, m, v);
  for (std::size_t i = 0; i < g.size(); ++i) {
    m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g[i];
    v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * g[i] * g[i];
  }
  return adaptive_apply(base, m, v, p);
}

ParamVector fedyogi_step(const ParamVector& base, std::span<const double> g, std::vector<double>& m,
                         std::vector<double>& v, const AdaptiveParams& p) {
  check_adaptive(base, g, m, v);
  for (std::size_t i = 0; i < g.size(); ++i) {
    m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g[i];
    const double g2 = g[i] * g[i];
    const double diff = v[i] - g2;
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    v[i] = v[i] - (1.0 - p.beta2) * g2 * sign;
  }
  return adaptive_apply(base, m, v, p);
}

std::vector<double> fedgma_mask(std::span<const ClientUpdate> updates, double epsilon) {
  auto mean = weighted_delta(updates);
  const double k = static_cast<double>(updates.size());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    std::size_t agree = 0;
    for (const auto& u : updates) {
      const double prod = u.delta[i] * mean[i];
      agree += prod > 0.0;
    }
    if (static_cast<double>(agree) / k < epsilon) mean[i] = 0.0;
  }
  return mean;
}

ParamVector ima_average(const std::deque<ParamVector>& history, int window) {
  if (window < 1) throw ConfigError("IMA window must be >= 1");
  if (history.size() < static_cast<std::size_t>(window)) {
    throw ConfigError("IMA window " + std::to_string(window) + " exceeds the " +
                      std::to_string(history.size()) + " stored global models");
  }
  ParamVector out = history.front();
  for (int i = 1; i < window; ++i) {
    check_compatible(out, history[static_cast<std::size_t>(i)]);
    for (std::size_t j = 0; j < out.size(); ++j) out.values[j] += history[static_cast<std::size_t>(i)].values[j];
  }
  if (window > 1) {
    for (auto& v : out.values) v /= window;
  }
  return out;
}

double locality(std::span<const ClientUpdate> updates, const ParamVector& center) {
  double worst = 0.0;
  for (const auto& u : updates) {
    double sq = 0.0;
    for (std::size_t i = 0; i < center.size(); ++i) {
      const double d = u.final_params.values[i] - center.values[i];
      sq += d * d;
    }
    worst = std::max(worst, std::sqrt(sq));
  }
  return worst;
}

Federation::Federation(FederationConfig config, ModelSpec spec, Dataset train, Partition partition,
                       Dataset test)
    : config_(std::move(config)),
      spec_(std::move(spec)),
      train_(std::move(train)),
      partition_(std::move(partition)),
      test_(std::move(test)) {
  config_.validate();
  if (partition_.num_clients() != config_.num_clients) {
    throw ConfigError("partition has " + std::to_string(partition_.num_clients()) +
                      " clients but the federation expects " + std::to_string(config_.num_clients));
  }
  const auto report = validate_partition(train_, partition_);
  if (!report.ok()) throw ConfigError("partition is not a disjoint non-empty cover of the dataset");
  if (train_.dim() != spec_.input_dim() || train_.num_classes != spec_.output_dim()) {
    throw ConfigError("model input/output widths do not match the dataset");
  }
  client_data_.reserve(config_.num_clients);
  for (const auto& idx : partition_.client_indices) client_data_.push_back(train_.subset(idx));
}

std::pair<double, int> Federation::client_schedule(int round) const {
  const int base_round = round - 1;
  const bool mild_phase = config_.ima && config_.ima->mild && round >= config_.ima->start_round;
  if (!mild_phase) {
    return {schedule_lr(config_.schedule, base_round),
            effective_epochs(config_.schedule, base_round, config_.local_epochs)};
  }
  const auto& ima = *config_.ima;
  const int rel = round - ima.start_round;
  const int start_base = ima.start_round - 1;
  const double lr_at_start = schedule_lr(config_.schedule, start_base);
  const int epochs_now = effective_epochs(config_.schedule, base_round, config_.local_epochs);
  if (ima.mild_from_current_lr) {
    if (const auto* e = std::get_if<ExponentialLr>(&*ima.mild)) {
      return {lr_at_start * std::pow(1.0 - e->decay, rel), epochs_now};
    }
    if (const auto* e = std::get_if<EpochDecay>(&*ima.mild)) {
      const int epochs_at_start = effective_epochs(config_.schedule, start_base, config_.local_epochs);
      return {lr_at_start, std::max(1, epochs_at_start - rel / e->rounds_per_drop)};
    }
  }
  return {schedule_lr(*ima.mild, rel), effective_epochs(*ima.mild, rel, epochs_now)};
}

FederationResult Federation::run(std::optional<ParamVector> init,
                                 const RoundObserver& observer) const {
  const auto& cfg = config_;
  FederationResult result;
  GlobalState& state = result.final_state;
  state.global = init ? std::move(*init) : init_params(spec_, init_seed(cfg.seed));
  check_compatible(state.global, spec_);

  const std::size_t history_cap = cfg.ima ? static_cast<std::size_t>(cfg.ima->window) : 1;
  const auto push_history = [&](int round) {
    state.history.push_front(state.global);
    while (state.history.size() > history_cap) state.history.pop_back();
    // The IMA model of round t_s - 1 is the first one broadcast (at t_s).
    if (cfg.ima && cfg.ima->start_round <= cfg.rounds && round >= cfg.ima->start_round - 1) {
      state.ima_model = ima_average(state.history, cfg.ima->window);
    }
  };
  push_history(0);

  std::mt19937_64 sampler(derive_seed(cfg.seed, kSamplingStream));
  const std::size_t per_round = cfg.clients_per_round();
  unsigned threads = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.threads;

  for (int t = 1; t <= cfg.rounds; ++t) {
    auto participants = sample_clients(sampler, cfg.num_clients, per_round);
    std::sort(participants.begin(), participants.end());

    const bool ima_phase = cfg.ima && t >= cfg.ima->start_round;
    const ParamVector broadcast = ima_phase ? *state.ima_model : state.global;
    const auto [lr, epochs] = client_schedule(t);
    const LocalTrainOptions opts{epochs, cfg.batch_size, lr, cfg.momentum, cfg.prox_mu};

    std::vector<ClientUpdate> updates(participants.size());
    const auto train_one = [&](std::size_t i) {
      const std::size_t k = participants[i];
      updates[i] = local_train(broadcast, spec_, client_data_[k], opts, client_round_seed(cfg.seed, t, k));
      updates[i].client_id = k;
    };
    const unsigned workers = std::min<unsigned>(threads, static_cast<unsigned>(participants.size()));
    if (workers <= 1) {
      for (std::size_t i = 0; i < participants.size(); ++i) train_one(i);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (std::size_t i = next++; i < participants.size(); i = next++) train_one(i);
        });
      }
    }

    ParamVector aggregated = std::visit(
        [&](const auto& agg) -> ParamVector {
          using T = std::decay_t<decltype(agg)>;
          if constexpr (std::is_same_v<T, FedAvgAgg>) {
            return fma_aggregate(updates, broadcast);
          } else if constexpr (std::is_same_v<T, FedNovaAgg>) {
            return fednova_aggregate(updates, broadcast);
          } else if constexpr (std::is_same_v<T, FedAdamAgg>) {
            return fedadam_step(broadcast, weighted_delta(updates), state.server_m, state.server_v,
                                {agg.server_lr, agg.beta1, agg.beta2, agg.tau});
          } else if constexpr (std::is_same_v<T, FedYogiAgg>) {
            return fedyogi_step(broadcast, weighted_delta(updates), state.server_m, state.server_v,
                                {agg.server_lr, agg.beta1, agg.beta2, agg.tau});
          } else {
            const auto masked = fedgma_mask(updates, agg.epsilon);
            ParamVector out = broadcast;
            for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += agg.server_lr * masked[i];
            return out;
          }
        },
        cfg.aggregator);
    if (!all_finite(aggregated)) {
      throw InvariantError("round " + std::to_string(t) + ": aggregated model is not finite");
    }

    RoundRecord rec;
    rec.round = t;
    rec.lr = lr;
    rec.local_epochs = epochs;
    rec.broadcast_ima = ima_phase;
    rec.participants = participants;
    rec.locality = locality(updates, aggregated);

    state.round = t;
    state.global = std::move(aggregated);
    push_history(t);

    if (t % cfg.eval_every == 0 || t == cfg.rounds) {
      const bool eval_ima = cfg.ima && t >= cfg.ima->start_round;
      const auto ev = evaluate(eval_ima ? *state.ima_model : state.global, spec_, test_);
      rec.test_loss = ev.loss;
      rec.test_accuracy = ev.accuracy;
      rec.evaluated = true;
    }
    result.trajectory.push_back(rec);
    if (observer) observer(RoundEvent{t, broadcast, ima_phase, updates, state, result.trajectory.back()});
  }
  return result;
}

FederationResult run_federation(const FederationConfig& config, const ModelSpec& spec,
                                const Dataset& train, const Partition& partition,
                                const Dataset& test, const RoundObserver& observer) {
  return Federation(config, spec, train, partition, test).run(std::nullopt, observer);
}

}  // namespace fedima
