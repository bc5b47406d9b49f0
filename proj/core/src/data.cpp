// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedima/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace fedima {
namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& data) {
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
  return by_class;
}

void check_clients(std::size_t num_clients, const Dataset& data) {
  if (num_clients == 0) throw ConfigError("partition needs at least one client");
  if (data.size() < num_clients) {
    throw ConfigError("cannot give " + std::to_string(num_clients) + " clients a sample each from " +
                      std::to_string(data.size()) + " samples");
  }
}

}  // namespace

Dataset Dataset::from_labels(Matrix features, std::vector<int> labels, std::size_t num_classes) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ConfigError("feature rows and label count differ");
  }
  if (labels.empty() || features.cols() < 1) throw ConfigError("dataset must be non-empty");
  if (num_classes < 2) throw ConfigError("dataset needs at least two classes");
  Dataset d;
  d.one_hot_targets = one_hot(labels, num_classes);
  d.features = std::move(features);
  d.labels = std::move(labels);
  d.num_classes = num_classes;
  return d;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset d;
  d.num_classes = num_classes;
  d.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  d.one_hot_targets.resize(static_cast<Eigen::Index>(indices.size()), one_hot_targets.cols());
  d.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(indices[r]);
    d.features.row(static_cast<Eigen::Index>(r)) = features.row(i);
    d.one_hot_targets.row(static_cast<Eigen::Index>(r)) = one_hot_targets.row(i);
    d.labels.push_back(labels[indices[r]]);
  }
  return d;
}

std::vector<int> predict_classes(const Matrix& outputs) {
  std::vector<int> out(static_cast<std::size_t>(outputs.rows()));
  for (Eigen::Index i = 0; i < outputs.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < outputs.cols(); ++j) {
      if (outputs(i, j) > outputs(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

Evaluation evaluate(const ParamVector& params, const ModelSpec& spec, const Dataset& data) {
  if (data.size() == 0) throw ConfigError("cannot evaluate on an empty dataset");
  const Matrix out = forward(params, spec, data.features);
  const double n = static_cast<double>(data.size());
  Evaluation ev;
  if (spec.loss() == LossKind::kMse) {
    ev.loss = (out - data.one_hot_targets).array().square().sum() / n;
  } else {
    double total = 0.0;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double m = out.row(i).maxCoeff();
      const double lse = m + std::log((out.row(i).array() - m).exp().sum());
      total += lse - out(i, data.labels[static_cast<std::size_t>(i)]);
    }
    ev.loss = total / n;
  }
  const auto pred = predict_classes(out);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i];
  ev.accuracy = static_cast<double>(correct) / n;
  return ev;
}

Vector class_mean(std::size_t cls, std::size_t dim, double class_separation) {
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(dim));
  const double sign = (cls / dim) % 2 == 0 ? 1.0 : -1.0;
  mean(static_cast<Eigen::Index>(cls % dim)) = sign * class_separation;
  return mean;
}

Dataset gen_synthetic_classification(std::uint64_t seed, std::size_t n_classes,
                                     std::size_t n_per_class, std::size_t dim,
                                     double class_separation) {
  if (n_classes < 2) throw ConfigError("need at least 2 classes");
  if (dim < 2) throw ConfigError("need at least 2 feature dimensions");
  if (n_per_class < 1) throw ConfigError("need at least one sample per class");
  if (!(class_separation > 0)) throw ConfigError("class separation must be > 0");

  const std::size_t n = n_classes * n_per_class;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  Matrix features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  std::vector<int> labels(n);
  std::size_t slot = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const Vector mean = class_mean(c, dim, class_separation);
    for (std::size_t i = 0; i < n_per_class; ++i, ++slot) {
      const auto row = static_cast<Eigen::Index>(order[slot]);
      for (std::size_t j = 0; j < dim; ++j) {
        features(row, static_cast<Eigen::Index>(j)) = mean(static_cast<Eigen::Index>(j)) + noise(rng);
      }
      labels[order[slot]] = static_cast<int>(c);
    }
  }
  return Dataset::from_labels(std::move(features), std::move(labels), n_classes);
}

std::string describe(const PartitionMethod& method) {
  return std::visit(
      [](const auto& m) -> std::string {
        using T = std::decay_t<decltype(m)>;
        std::ostringstream os;
        if constexpr (std::is_same_v<T, ShardsMethod>) {
          os << "shards(" << m.classes_per_client << ")";
        } else if constexpr (std::is_same_v<T, DirichletMethod>) {
          os << "dirichlet(" << m.alpha << ")";
        } else {
          os << "iid";
        }
        return os.str();
      },
      method);
}

std::vector<std::size_t> largest_remainder_counts(std::span<const double> weights,
                                                  std::size_t total) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty() || !(sum > 0)) throw ConfigError("largest_remainder_counts: weights must sum > 0");
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double exact = static_cast<double>(total) * weights[k] / sum;
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[k];
    remainders.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  // Floating-point floors can overshoot by one in pathological cases.
  while (assigned > total) {
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  for (std::size_t i = 0; assigned < total; i = (i + 1) % remainders.size()) {
    ++counts[remainders[i].second];
    ++assigned;
  }
  return counts;
}

Partition partition_iid(const Dataset& data, std::size_t num_clients, std::uint64_t seed) {
  check_clients(num_clients, data);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  const std::vector<double> equal(num_clients, 1.0);
  const auto counts = largest_remainder_counts(equal, data.size());
  Partition p{{}, IidMethod{}, seed};
  std::size_t cursor = 0;
  for (auto count : counts) {
    p.client_indices.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                  order.begin() + static_cast<std::ptrdiff_t>(cursor + count));
    cursor += count;
  }
  return p;
}

Partition partition_shards(const Dataset& data, std::size_t num_clients,
                           std::size_t classes_per_client, std::uint64_t seed) {
  check_clients(num_clients, data);
  const std::size_t n_classes = data.num_classes;
  if (classes_per_client < 1 || classes_per_client > n_classes) {
    throw ConfigError("classes_per_client must be in [1, " + std::to_string(n_classes) + "]");
  }
  const std::size_t total_shards = num_clients * classes_per_client;
  if (total_shards % n_classes != 0) {
    throw ConfigError("infeasible shards: " + std::to_string(num_clients) + " clients x " +
                      std::to_string(classes_per_client) + " classes = " +
                      std::to_string(total_shards) + " shards, not divisible by " +
                      std::to_string(n_classes) + " classes");
  }
  const std::size_t shards_per_class = total_shards / n_classes;

  std::mt19937_64 rng(seed);
  auto by_class = indices_by_class(data);
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (by_class[c].size() % shards_per_class != 0 || by_class[c].empty()) {
      throw ConfigError("infeasible shards: class " + std::to_string(c) + " has " +
                        std::to_string(by_class[c].size()) + " samples, not divisible into " +
                        std::to_string(shards_per_class) + " shards");
    }
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
  }

  std::vector<std::size_t> class_order(n_classes);
  std::iota(class_order.begin(), class_order.end(), 0);
  std::shuffle(class_order.begin(), class_order.end(), rng);
  std::vector<std::size_t> client_order(num_clients);
  std::iota(client_order.begin(), client_order.end(), 0);
  std::shuffle(client_order.begin(), client_order.end(), rng);

  // Shards of one class are consecutive in the deal and there are at most K of
  // them, so dealing round-robin never gives a client two shards of a class.
  Partition p{std::vector<std::vector<std::size_t>>(num_clients), ShardsMethod{classes_per_client},
              seed};
  std::size_t j = 0;
  for (std::size_t c : class_order) {
    const std::size_t shard_size = by_class[c].size() / shards_per_class;
    for (std::size_t s = 0; s < shards_per_class; ++s, ++j) {
      auto& dst = p.client_indices[client_order[j % num_clients]];
      const auto first = by_class[c].begin() + static_cast<std::ptrdiff_t>(s * shard_size);
      dst.insert(dst.end(), first, first + static_cast<std::ptrdiff_t>(shard_size));
    }
  }
  return p;
}

Partition partition_dirichlet(const Dataset& data, std::size_t num_clients, double alpha,
                              std::uint64_t seed) {
  if (!(alpha > 0)) throw ConfigError("dirichlet alpha must be > 0");
  check_clients(num_clients, data);

  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Partition p{std::vector<std::vector<std::size_t>>(num_clients), DirichletMethod{alpha}, seed};
  auto by_class = indices_by_class(data);
  for (auto& members : by_class) {
    if (members.empty()) continue;
    std::shuffle(members.begin(), members.end(), rng);
    std::vector<double> proportions(num_clients);
    for (auto& w : proportions) w = gamma(rng);
    if (std::accumulate(proportions.begin(), proportions.end(), 0.0) <= 0.0) {
      // Every draw underflowed (tiny alpha): the mass collapses on one client.
      std::fill(proportions.begin(), proportions.end(), 0.0);
      proportions[std::uniform_int_distribution<std::size_t>(0, num_clients - 1)(rng)] = 1.0;
    }
    const auto counts = largest_remainder_counts(proportions, members.size());
    std::size_t cursor = 0;
    for (std::size_t k = 0; k < num_clients; ++k) {
      auto& dst = p.client_indices[k];
      dst.insert(dst.end(), members.begin() + static_cast<std::ptrdiff_t>(cursor),
                 members.begin() + static_cast<std::ptrdiff_t>(cursor + counts[k]));
      cursor += counts[k];
    }
  }

  // Empty clients take one sample from the current largest client.
  for (std::size_t k = 0; k < num_clients; ++k) {
    if (!p.client_indices[k].empty()) continue;
    auto largest = std::max_element(
        p.client_indices.begin(), p.client_indices.end(),
        [](const auto& a, const auto& b) { return a.size() < b.size(); });
    p.client_indices[k].push_back(largest->back());
    largest->pop_back();
  }
  return p;
}

Dataset apply_feature_skew(const Dataset& data, const Partition& partition,
                           std::span<const FeatureSkewSpec> specs) {
  if (specs.size() != partition.num_clients()) {
    throw ConfigError("feature skew needs one spec per client: got " + std::to_string(specs.size()) +
                      " for " + std::to_string(partition.num_clients()) + " clients");
  }
  Dataset out = data;
  const auto d = static_cast<Eigen::Index>(data.dim());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto& s = specs[k];
    if (!(s.scale > 0)) throw ConfigError("feature skew scale must be > 0");
    if (!s.offset.empty() && static_cast<Eigen::Index>(s.offset.size()) != d) {
      throw ConfigError("feature skew offset length must match feature dimension");
    }
    const double c = std::cos(s.rotation);
    const double sn = std::sin(s.rotation);
    for (std::size_t i : partition.client_indices[k]) {
      auto row = out.features.row(static_cast<Eigen::Index>(i));
      if (s.rotation != 0.0) {
        const double x0 = row(0);
        const double x1 = row(1);
        row(0) = c * x0 - sn * x1;
        row(1) = sn * x0 + c * x1;
      }
      if (s.scale != 1.0) row *= s.scale;
      if (!s.offset.empty()) {
        for (Eigen::Index j = 0; j < d; ++j) row(j) += s.offset[static_cast<std::size_t>(j)];
      }
    }
  }
  return out;
}

PartitionReport validate_partition(const Dataset& data, const Partition& partition) {
  PartitionReport r;
  std::vector<char> seen(data.size(), 0);
  for (const auto& members : partition.client_indices) {
    r.client_sizes.push_back(members.size());
    std::vector<std::size_t> hist(data.num_classes, 0);
    if (members.empty()) r.all_nonempty = false;
    for (std::size_t i : members) {
      ++r.assigned;
      if (i >= data.size()) {
        r.in_range = false;
        continue;
      }
      if (seen[i]) {
        r.disjoint = false;
      } else {
        seen[i] = 1;
        ++r.covered;
      }
      ++hist[static_cast<std::size_t>(data.labels[i])];
    }
    r.class_histograms.push_back(std::move(hist));
  }
  return r;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  const auto prec = out.precision(17);
  for (std::size_t j = 0; j < data.dim(); ++j) out << "x" << j << ",";
  out << "label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.dim(); ++j) {
      out << data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) << ",";
    }
    out << data.labels[i] << "\n";
  }
  out.precision(prec);
}

void write_partition_csv(std::ostream& out, const Partition& partition) {
  out << "client_id,sample_index\n";
  for (std::size_t k = 0; k < partition.num_clients(); ++k) {
    for (std::size_t i : partition.client_indices[k]) out << k << "," << i << "\n";
  }
}

void write_partition_report(std::ostream& out, const PartitionReport& report) {
  out << "disjoint=" << (report.disjoint ? "true" : "false")
      << " in_range=" << (report.in_range ? "true" : "false")
      << " all_nonempty=" << (report.all_nonempty ? "true" : "false")
      << " assigned=" << report.assigned << " covered=" << report.covered << "\n";
  out << "client,size,class_histogram\n";
  for (std::size_t k = 0; k < report.client_sizes.size(); ++k) {
    out << k << "," << report.client_sizes[k] << ",";
    for (std::size_t c = 0; c < report.class_histograms[k].size(); ++c) {
      out << (c ? " " : "") << report.class_histograms[k][c];
    }
    out << "\n";
  }
}

}  // namespace fedima
