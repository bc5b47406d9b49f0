// Copyright 2026 The fedima Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedima/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace fedima {
namespace {

constexpr const char* kTopSection = "experiment";

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

// Reads typed values from a ConfigDoc and remembers which keys were used.
class Reader {
 public:
  explicit Reader(const ConfigDoc& doc) : doc_(doc) {}

  template <typename T>
  void read(const std::string& section, const std::string& key, T& out) {
    const auto value = doc_.get(section, key);
    used_.insert(section + "." + key);
    if (!value) return;
    out = convert<T>(section + "." + key, *value);
  }

  std::optional<std::string> raw(const std::string& section, const std::string& key) {
    used_.insert(section + "." + key);
    return doc_.get(section, key);
  }

  void reject_unknown() const {
    static const std::set<std::string> known = {kTopSection, "dataset",  "partition", "model",
                                                "federation", "schedule", "aggregator", "ima",
                                                "decomposition", "landscape"};
    for (const auto& [section, keys] : doc_.sections()) {
      if (!known.contains(section)) throw ConfigError("unknown config section [" + section + "]");
      for (const auto& [key, value] : keys) {
        if (!used_.contains(section + "." + key)) {
          throw ConfigError("unknown config key '" + key + "' in [" + section + "]");
        }
      }
    }
  }

 private:
  template <typename T>
  static T convert(const std::string& name, const std::string& text) {
    if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1" || text == "yes") return true;
      if (text == "false" || text == "0" || text == "no") return false;
      throw ConfigError(name + ": expected a boolean, got '" + text + "'");
    } else if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      std::vector<std::size_t> out;
      if (text.empty() || text == "none") return out;
      for (const auto& item : split(text, ',')) out.push_back(convert<std::size_t>(name, item));
      return out;
    } else {
      T value{};
      const auto* end = text.data() + text.size();
      const auto [ptr, ec] = std::from_chars(text.data(), end, value);
      if (ec != std::errc() || ptr != end) {
        throw ConfigError(name + ": cannot parse '" + text + "'");
      }
      return value;
    }
  }

  const ConfigDoc& doc_;
  std::set<std::string> used_;
};

LrSchedule read_schedule(Reader& r, const std::string& section, const std::string& prefix,
                         const LrSchedule& fallback) {
  std::string kind;
  double lr = schedule_lr(fallback, 0);
  double gamma = 0.0;
  double lr_hi = 1e-2;
  double lr_lo = 5e-5;
  int period = 20;
  int epochs0 = 1;
  int rounds_per_drop = 20;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ConstantLr>) kind = "constant";
        if constexpr (std::is_same_v<T, ExponentialLr>) {
          kind = "exponential";
          gamma = s.decay;
        }
        if constexpr (std::is_same_v<T, CyclicLr>) {
          kind = "cyclic";
          lr_hi = s.lr_hi;
          lr_lo = s.lr_lo;
          period = s.period;
        }
        if constexpr (std::is_same_v<T, EpochDecay>) {
          kind = "epoch_decay";
          epochs0 = s.epochs0;
          rounds_per_drop = s.rounds_per_drop;
        }
      },
      fallback);
  r.read(section, prefix + "kind", kind);
  r.read(section, prefix + "lr", lr);
  r.read(section, prefix + "gamma", gamma);
  r.read(section, prefix + "lr_hi", lr_hi);
  r.read(section, prefix + "lr_lo", lr_lo);
  r.read(section, prefix + "period", period);
  r.read(section, prefix + "epochs0", epochs0);
  r.read(section, prefix + "rounds_per_drop", rounds_per_drop);
  LrSchedule s;
  if (kind == "constant") {
    s = ConstantLr{lr};
  } else if (kind == "exponential") {
    s = ExponentialLr{lr, gamma};
  } else if (kind == "cyclic") {
    s = CyclicLr{lr_hi, lr_lo, period};
  } else if (kind == "epoch_decay") {
    s = EpochDecay{lr, epochs0, rounds_per_drop};
  } else {
    throw ConfigError("[" + section + "] " + prefix + "kind: unknown schedule '" + kind + "'");
  }
  validate(s);
  return s;
}

void write_schedule(ConfigDoc& doc, const std::string& section, const std::string& prefix,
                    const LrSchedule& schedule) {
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ConstantLr>) {
          doc.set(section, prefix + "kind", "constant");
          doc.set(section, prefix + "lr", format_double(s.lr));
        } else if constexpr (std::is_same_v<T, ExponentialLr>) {
          doc.set(section, prefix + "kind", "exponential");
          doc.set(section, prefix + "lr", format_double(s.lr0));
          doc.set(section, prefix + "gamma", format_double(s.decay));
        } else if constexpr (std::is_same_v<T, CyclicLr>) {
          doc.set(section, prefix + "kind", "cyclic");
          doc.set(section, prefix + "lr_hi", format_double(s.lr_hi));
          doc.set(section, prefix + "lr_lo", format_double(s.lr_lo));
          doc.set(section, prefix + "period", std::to_string(s.period));
        } else {
          doc.set(section, prefix + "kind", "epoch_decay");
          doc.set(section, prefix + "lr", format_double(s.lr));
          doc.set(section, prefix + "epochs0", std::to_string(s.epochs0));
          doc.set(section, prefix + "rounds_per_drop", std::to_string(s.rounds_per_drop));
        }
      },
      schedule);
}

}  // namespace

ConfigDoc ConfigDoc::parse(const std::string& text) {
  ConfigDoc doc;
  std::string section = kTopSection;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      doc.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (doc.has(section, key)) {
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    doc.sections_[section][key] = trim(line.substr(eq + 1));
  }
  return doc;
}

ConfigDoc ConfigDoc::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool ConfigDoc::has(const std::string& section, const std::string& key) const {
  return get(section, key).has_value();
}

std::optional<std::string> ConfigDoc::get(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return std::nullopt;
  const auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

void ConfigDoc::set(const std::string& section, const std::string& key, std::string value) {
  sections_[section][key] = std::move(value);
}

void ConfigDoc::erase(const std::string& section, const std::string& key) {
  auto s = sections_.find(section);
  if (s == sections_.end()) return;
  s->second.erase(key);
  if (s->second.empty()) sections_.erase(s);
}

std::string ConfigDoc::canonical() const {
  std::string out;
  for (const auto& [section, keys] : sections_) {
    if (keys.empty()) continue;
    out += "[" + section + "]\n";
    for (const auto& [key, value] : keys) out += key + " = " + value + "\n";
  }
  return out;
}

std::uint64_t ConfigDoc::hash() const {
  Fnv1a h;
  h.update(canonical());
  return h.digest();
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  const auto [ptr, ec] = std::to_chars(buf, buf + 16, v, 16);
  std::string s(buf, ptr);
  return std::string(16 - s.size(), '0') + s;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void ExperimentConfig::validate() const {
  if (dataset.classes < 2) throw ConfigError("[dataset] classes must be >= 2");
  if (dataset.dim < 2) throw ConfigError("[dataset] dim must be >= 2");
  if (dataset.per_class < 1 || dataset.test_per_class < 1) {
    throw ConfigError("[dataset] per_class and test_per_class must be >= 1");
  }
  if (!(dataset.separation > 0)) throw ConfigError("[dataset] separation must be > 0");
  if (partition.kind == PartitionKind::kDirichlet && !(partition.alpha > 0)) {
    throw ConfigError("[partition] alpha must be > 0");
  }
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (decomposition.replicas < 1) throw ConfigError("[decomposition] replicas must be >= 1");
  if (decomposition.every < 1) throw ConfigError("[decomposition] every must be >= 1");
  if (landscape.points < 2 || landscape.resolution < 2) {
    throw ConfigError("[landscape] points and resolution must be >= 2");
  }
  federation.validate();
  (void)model_spec();
}

ModelSpec ExperimentConfig::model_spec() const {
  std::vector<std::size_t> widths{dataset.dim};
  widths.insert(widths.end(), model.hidden.begin(), model.hidden.end());
  widths.push_back(dataset.classes);
  return ModelSpec::mlp(std::move(widths), model.activation, model.loss);
}

ExperimentConfig default_experiment() {
  ExperimentConfig c;
  auto& f = c.federation;
  f.num_clients = 20;
  f.participation = 0.25;
  f.rounds = 120;
  f.local_epochs = 3;
  f.batch_size = 20;
  f.schedule = ExponentialLr{0.05, 0.01};
  f.momentum = 0.9;
  f.ima = ImaConfig{90, 5, ExponentialLr{0.05, 0.03}, true};
  return c;
}

ExperimentConfig parse_experiment(const ConfigDoc& doc) {
  ExperimentConfig c = default_experiment();
  Reader r(doc);
  r.read(kTopSection, "seed", c.seed);
  r.read(kTopSection, "checkpoint_every", c.checkpoint_every);

  r.read("dataset", "classes", c.dataset.classes);
  r.read("dataset", "per_class", c.dataset.per_class);
  r.read("dataset", "test_per_class", c.dataset.test_per_class);
  r.read("dataset", "dim", c.dataset.dim);
  r.read("dataset", "separation", c.dataset.separation);

  std::string method = "dirichlet";
  r.read("partition", "method", method);
  if (method == "dirichlet") {
    c.partition.kind = PartitionKind::kDirichlet;
  } else if (method == "shards") {
    c.partition.kind = PartitionKind::kShards;
  } else if (method == "iid") {
    c.partition.kind = PartitionKind::kIid;
  } else {
    throw ConfigError("[partition] method: unknown '" + method + "'");
  }
  r.read("partition", "alpha", c.partition.alpha);
  r.read("partition", "classes_per_client", c.partition.classes_per_client);
  r.read("partition", "rotation_step", c.partition.rotation_step);

  r.read("model", "hidden", c.model.hidden);
  std::string activation = "relu";
  r.read("model", "activation", activation);
  if (activation == "relu") {
    c.model.activation = Activation::kRelu;
  } else if (activation == "identity") {
    c.model.activation = Activation::kIdentity;
  } else if (activation == "tanh") {
    c.model.activation = Activation::kTanh;
  } else {
    throw ConfigError("[model] activation: unknown '" + activation + "'");
  }
  std::string loss = "cross_entropy";
  r.read("model", "loss", loss);
  if (loss == "cross_entropy") {
    c.model.loss = LossKind::kSoftmaxCrossEntropy;
  } else if (loss == "mse") {
    c.model.loss = LossKind::kMse;
  } else {
    throw ConfigError("[model] loss: unknown '" + loss + "'");
  }

  auto& f = c.federation;
  r.read("federation", "clients", f.num_clients);
  r.read("federation", "participation", f.participation);
  r.read("federation", "rounds", f.rounds);
  r.read("federation", "local_epochs", f.local_epochs);
  r.read("federation", "batch_size", f.batch_size);
  r.read("federation", "momentum", f.momentum);
  r.read("federation", "prox_mu", f.prox_mu);
  r.read("federation", "threads", f.threads);
  r.read("federation", "eval_every", f.eval_every);
  f.schedule = read_schedule(r, "schedule", "", f.schedule);

  std::string agg = "fedavg";
  r.read("federation", "aggregator", agg);
  double server_lr = 0.01, beta1 = 0.9, beta2 = 0.99, tau = 0.001, epsilon = 0.8, gma_lr = 1.0;
  r.read("aggregator", "server_lr", server_lr);
  r.read("aggregator", "beta1", beta1);
  r.read("aggregator", "beta2", beta2);
  r.read("aggregator", "tau", tau);
  r.read("aggregator", "epsilon", epsilon);
  r.read("aggregator", "gma_server_lr", gma_lr);
  if (agg == "fedavg") {
    f.aggregator = FedAvgAgg{};
  } else if (agg == "fednova") {
    f.aggregator = FedNovaAgg{};
  } else if (agg == "fedadam") {
    f.aggregator = FedAdamAgg{server_lr, beta1, beta2, tau};
  } else if (agg == "fedyogi") {
    f.aggregator = FedYogiAgg{server_lr, beta1, beta2, tau};
  } else if (agg == "fedgma") {
    f.aggregator = FedGmaAgg{epsilon, gma_lr};
  } else {
    throw ConfigError("[federation] aggregator: unknown '" + agg + "'");
  }

  bool ima_enabled = f.ima.has_value();
  r.read("ima", "enabled", ima_enabled);
  ImaConfig ima = f.ima.value_or(ImaConfig{});
  r.read("ima", "start_round", ima.start_round);
  r.read("ima", "window", ima.window);
  r.read("ima", "mild_from_current_lr", ima.mild_from_current_lr);
  std::string mild_kind = "exponential";
  if (auto v = r.raw("ima", "mild_kind")) mild_kind = *v;
  if (mild_kind == "base" || mild_kind == "none") {
    // Keep the base schedule; consume any mild_* keys so they are not reported as unknown.
    for (const char* key : {"lr", "gamma", "lr_hi", "lr_lo", "period", "epochs0", "rounds_per_drop"}) {
      (void)r.raw("ima", std::string("mild_") + key);
    }
    ima.mild.reset();
  } else {
    ima.mild = read_schedule(r, "ima", "mild_", ima.mild.value_or(ExponentialLr{0.05, 0.03}));
  }
  f.ima = ima_enabled ? std::optional<ImaConfig>(ima) : std::nullopt;

  r.read("decomposition", "replicas", c.decomposition.replicas);
  r.read("decomposition", "every", c.decomposition.every);
  std::string source = "seed_replicas";
  r.read("decomposition", "source", source);
  if (source == "seed_replicas") {
    c.decomposition.source = EnsembleSource::kSeedReplicas;
  } else if (source == "round_clients") {
    c.decomposition.source = EnsembleSource::kRoundClients;
  } else {
    throw ConfigError("[decomposition] source: unknown '" + source + "'");
  }
  r.read("landscape", "points", c.landscape.points);
  r.read("landscape", "resolution", c.landscape.resolution);

  r.reject_unknown();
  f.seed = c.seed;
  c.validate();
  return c;
}

ConfigDoc to_doc(const ExperimentConfig& c) {
  ConfigDoc d;
  d.set(kTopSection, "seed", std::to_string(c.seed));
  d.set(kTopSection, "checkpoint_every", std::to_string(c.checkpoint_every));
  d.set("dataset", "classes", std::to_string(c.dataset.classes));
  d.set("dataset", "per_class", std::to_string(c.dataset.per_class));
  d.set("dataset", "test_per_class", std::to_string(c.dataset.test_per_class));
  d.set("dataset", "dim", std::to_string(c.dataset.dim));
  d.set("dataset", "separation", format_double(c.dataset.separation));
  static constexpr const char* kMethods[] = {"dirichlet", "shards", "iid"};
  d.set("partition", "method", kMethods[static_cast<int>(c.partition.kind)]);
  d.set("partition", "alpha", format_double(c.partition.alpha));
  d.set("partition", "classes_per_client", std::to_string(c.partition.classes_per_client));
  d.set("partition", "rotation_step", format_double(c.partition.rotation_step));
  std::string hidden;
  for (std::size_t i = 0; i < c.model.hidden.size(); ++i) {
    hidden += (i ? "," : "") + std::to_string(c.model.hidden[i]);
  }
  d.set("model", "hidden", hidden.empty() ? "none" : hidden);
  static constexpr const char* kActivations[] = {"relu", "identity", "tanh"};
  d.set("model", "activation", kActivations[static_cast<int>(c.model.activation)]);
  d.set("model", "loss", c.model.loss == LossKind::kMse ? "mse" : "cross_entropy");

  const auto& f = c.federation;
  d.set("federation", "clients", std::to_string(f.num_clients));
  d.set("federation", "participation", format_double(f.participation));
  d.set("federation", "rounds", std::to_string(f.rounds));
  d.set("federation", "local_epochs", std::to_string(f.local_epochs));
  d.set("federation", "batch_size", std::to_string(f.batch_size));
  d.set("federation", "momentum", format_double(f.momentum));
  d.set("federation", "prox_mu", format_double(f.prox_mu));
  d.set("federation", "threads", std::to_string(f.threads));
  d.set("federation", "eval_every", std::to_string(f.eval_every));
  d.set("federation", "aggregator", aggregator_name(f.aggregator));
  write_schedule(d, "schedule", "", f.schedule);
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, FedAdamAgg> || std::is_same_v<T, FedYogiAgg>) {
          d.set("aggregator", "server_lr", format_double(a.server_lr));
          d.set("aggregator", "beta1", format_double(a.beta1));
          d.set("aggregator", "beta2", format_double(a.beta2));
          d.set("aggregator", "tau", format_double(a.tau));
        } else if constexpr (std::is_same_v<T, FedGmaAgg>) {
          d.set("aggregator", "epsilon", format_double(a.epsilon));
          d.set("aggregator", "gma_server_lr", format_double(a.server_lr));
        }
      },
      f.aggregator);

  d.set("ima", "enabled", f.ima ? "true" : "false");
  if (f.ima) {
    d.set("ima", "start_round", std::to_string(f.ima->start_round));
    d.set("ima", "window", std::to_string(f.ima->window));
    d.set("ima", "mild_from_current_lr", f.ima->mild_from_current_lr ? "true" : "false");
    if (f.ima->mild) {
      write_schedule(d, "ima", "mild_", *f.ima->mild);
    } else {
      d.set("ima", "mild_kind", "base");
    }
  }
  d.set("decomposition", "source",
        c.decomposition.source == EnsembleSource::kSeedReplicas ? "seed_replicas" : "round_clients");
  d.set("decomposition", "replicas", std::to_string(c.decomposition.replicas));
  d.set("decomposition", "every", std::to_string(c.decomposition.every));
  d.set("landscape", "points", std::to_string(c.landscape.points));
  d.set("landscape", "resolution", std::to_string(c.landscape.resolution));
  return d;
}

}  // namespace fedima
