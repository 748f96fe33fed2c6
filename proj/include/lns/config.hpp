#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "lns/data_io.hpp"
#include "lns/error.hpp"
#include "lns/lsh_hashes.hpp"
#include "lns/lsh_tables.hpp"
#include "lns/sampler.hpp"
#include "lns/trainer.hpp"

namespace lns {

enum class DatasetKind { xc, skipgram, planted };

inline std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::xc: return "xc";
    case DatasetKind::skipgram: return "skipgram";
    case DatasetKind::planted: return "planted";
  }
  return "?";
}

inline DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "xc") return DatasetKind::xc;
  if (s == "skipgram") return DatasetKind::skipgram;
  if (s == "planted") return DatasetKind::planted;
  throw ConfigError("unknown dataset kind '" + s + "' (expected xc, skipgram or planted)");
}

struct DatasetConfig {
  DatasetKind kind = DatasetKind::planted;
  std::string train_path;
  std::string test_path;
  std::string corpus_path;
  std::size_t window = 2;
  std::size_t max_vocab = 5000;
  std::size_t max_tokens = 0;
  double test_fraction = 0.1;  // skip-gram: trailing share of samples held out
  bool unit_norm = false;
  PlantedClusterConfig planted;
};

struct ProbeSettings {
  std::size_t inputs = 20;
  std::size_t draws = 50;
};

struct RunConfig {
  DatasetConfig dataset;
  TrainerConfig trainer;
  ProbeSettings probe;
  std::string output_dir = "run";

  void validate() const {
    trainer.validate();
    if (dataset.kind == DatasetKind::xc && dataset.train_path.empty()) {
      throw ConfigError("dataset.train is required for xc datasets");
    }
    if (dataset.kind == DatasetKind::skipgram && dataset.corpus_path.empty()) {
      throw ConfigError("dataset.corpus is required for skipgram datasets");
    }
    if (dataset.window < 1) throw ConfigError("dataset.window must be >= 1");
    if (dataset.max_vocab < 2) throw ConfigError("dataset.max_vocab must be >= 2");
    if (!(dataset.test_fraction >= 0.0 && dataset.test_fraction < 1.0)) {
      throw ConfigError("dataset.test_fraction must be in [0, 1)");
    }
    if (probe.inputs < 1 || probe.draws < 1) throw ConfigError("probe inputs/draws must be >= 1");
  }
};

namespace detail {

using nlohmann::json;

// Reads keys from one JSON object and rejects any key it was not asked for.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ~ObjectReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + where(key) + "'");
    }
  }
  ObjectReader(const ObjectReader&) = delete;
  ObjectReader& operator=(const ObjectReader&) = delete;

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + where(key) + "' has the wrong type");
    }
  }
  const json* child(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }
  std::string where(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

/**
 * Applies a JSON config over the defaults in `cfg`. Unknown keys and
 * mistyped values are ConfigErrors. `hash.bucket_capacity` 0 means no cap.
 */
inline void apply_json(RunConfig& cfg, const nlohmann::json& j) {
  using detail::ObjectReader;
  ObjectReader root(j, "");
  if (const auto* d = root.child("dataset")) {
    ObjectReader r(*d, "dataset");
    std::string kind = to_string(cfg.dataset.kind);
    r.get("kind", kind);
    cfg.dataset.kind = parse_dataset_kind(kind);
    r.get("train", cfg.dataset.train_path);
    r.get("test", cfg.dataset.test_path);
    r.get("corpus", cfg.dataset.corpus_path);
    r.get("window", cfg.dataset.window);
    r.get("max_vocab", cfg.dataset.max_vocab);
    r.get("max_tokens", cfg.dataset.max_tokens);
    r.get("test_fraction", cfg.dataset.test_fraction);
    r.get("unit_norm", cfg.dataset.unit_norm);
    if (const auto* pl = r.child("planted")) {
      ObjectReader p(*pl, "dataset.planted");
      auto& c = cfg.dataset.planted;
      p.get("num_classes", c.num_classes);
      p.get("num_clusters", c.num_clusters);
      p.get("cluster_features", c.cluster_features);
      p.get("class_features", c.class_features);
      p.get("noise_features", c.noise_features);
      p.get("active_cluster", c.active_cluster);
      p.get("active_class", c.active_class);
      p.get("active_noise", c.active_noise);
      p.get("train_samples", c.train_samples);
      p.get("test_samples", c.test_samples);
    }
  }
  auto& t = cfg.trainer;
  if (const auto* m = root.child("model")) {
    ObjectReader r(*m, "model");
    r.get("hidden_dim", t.hidden_dim);
  }
  if (const auto* s = root.child("sampler")) {
    ObjectReader r(*s, "sampler");
    std::string kind = to_string(t.sampler);
    r.get("kind", kind);
    t.sampler = parse_sampler_kind(kind);
    r.get("n_samples", t.n_samples);
    r.get("top_k", t.top_k);
    r.get("logit_correction", t.logit_correction);
  }
  if (const auto* h = root.child("hash")) {
    ObjectReader r(*h, "hash");
    std::string family = to_string(t.hash.family);
    r.get("family", family);
    t.hash.family = parse_hash_kind(family);
    r.get("K", t.hash.k);
    r.get("L", t.hash.l);
    r.get("bin_size", t.hash.bin_size);
    std::size_t cap = t.hash.bucket_capacity == LshTables::kUnbounded ? 0 : t.hash.bucket_capacity;
    r.get("bucket_capacity", cap);
    t.hash.bucket_capacity = cap == 0 ? LshTables::kUnbounded : cap;
  }
  if (const auto* s = root.child("schedule")) {
    ObjectReader r(*s, "schedule");
    r.get("initial_period", t.update_period);
    r.get("gamma", t.update_gamma);
    r.get("rebuild_fraction", t.rebuild_fraction);
  }
  if (const auto* o = root.child("optimizer")) {
    ObjectReader r(*o, "optimizer");
    r.get("learning_rate", t.adam.learning_rate);
    r.get("beta1", t.adam.beta1);
    r.get("beta2", t.adam.beta2);
    r.get("epsilon", t.adam.epsilon);
  }
  if (const auto* tr = root.child("training")) {
    ObjectReader r(*tr, "training");
    r.get("batch_size", t.batch_size);
    r.get("epochs", t.epochs);
    r.get("max_iterations", t.max_iterations);
    r.get("workers", t.workers);
    r.get("seed", t.seed);
  }
  if (const auto* e = root.child("eval")) {
    ObjectReader r(*e, "eval");
    r.get("every", t.eval_every);
    r.get("k", t.eval_k);
    r.get("max_samples", t.eval_max_samples);
  }
  if (const auto* p = root.child("probe")) {
    ObjectReader r(*p, "probe");
    r.get("inputs", cfg.probe.inputs);
    r.get("draws", cfg.probe.draws);
  }
  if (const auto* o = root.child("output")) {
    ObjectReader r(*o, "output");
    r.get("dir", cfg.output_dir);
    r.get("wall_clock", t.record_wall_clock);
  }
}

/// Fully resolved config; feeding it back through apply_json reproduces `cfg`.
inline nlohmann::json to_json(const RunConfig& cfg) {
  const auto& t = cfg.trainer;
  const auto& p = cfg.dataset.planted;
  return {
      {"dataset",
       {{"kind", to_string(cfg.dataset.kind)},
        {"train", cfg.dataset.train_path},
        {"test", cfg.dataset.test_path},
        {"corpus", cfg.dataset.corpus_path},
        {"window", cfg.dataset.window},
        {"max_vocab", cfg.dataset.max_vocab},
        {"max_tokens", cfg.dataset.max_tokens},
        {"test_fraction", cfg.dataset.test_fraction},
        {"unit_norm", cfg.dataset.unit_norm},
        {"planted",
         {{"num_classes", p.num_classes},
          {"num_clusters", p.num_clusters},
          {"cluster_features", p.cluster_features},
          {"class_features", p.class_features},
          {"noise_features", p.noise_features},
          {"active_cluster", p.active_cluster},
          {"active_class", p.active_class},
          {"active_noise", p.active_noise},
          {"train_samples", p.train_samples},
          {"test_samples", p.test_samples}}}}},
      {"model", {{"hidden_dim", t.hidden_dim}}},
      {"sampler",
       {{"kind", to_string(t.sampler)},
        {"n_samples", t.n_samples},
        {"top_k", t.top_k},
        {"logit_correction", t.logit_correction}}},
      {"hash",
       {{"family", to_string(t.hash.family)},
        {"K", t.hash.k},
        {"L", t.hash.l},
        {"bin_size", t.hash.bin_size},
        {"bucket_capacity",
         t.hash.bucket_capacity == LshTables::kUnbounded ? 0 : t.hash.bucket_capacity}}},
      {"schedule",
       {{"initial_period", t.update_period},
        {"gamma", t.update_gamma},
        {"rebuild_fraction", t.rebuild_fraction}}},
      {"optimizer",
       {{"learning_rate", t.adam.learning_rate},
        {"beta1", t.adam.beta1},
        {"beta2", t.adam.beta2},
        {"epsilon", t.adam.epsilon}}},
      {"training",
       {{"batch_size", t.batch_size},
        {"epochs", t.epochs},
        {"max_iterations", t.max_iterations},
        {"workers", t.workers},
        {"seed", t.seed}}},
      {"eval", {{"every", t.eval_every}, {"k", t.eval_k}, {"max_samples", t.eval_max_samples}}},
      {"probe", {{"inputs", cfg.probe.inputs}, {"draws", cfg.probe.draws}}},
      {"output", {{"dir", cfg.output_dir}, {"wall_clock", t.record_wall_clock}}},
  };
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  RunConfig cfg;
  apply_json(cfg, j);
  return cfg;
}

struct LoadedData {
  XcDataset train;
  XcDataset test;
  bool has_test = false;
};

/// Loads or generates the configured dataset. Planted data derives its seed
/// from the master seed.
inline LoadedData load_dataset(const DatasetConfig& d, std::uint64_t master_seed) {
  LoadedData out;
  switch (d.kind) {
    case DatasetKind::xc:
      out.train = parse_xc(d.train_path);
      if (!d.test_path.empty()) {
        out.test = parse_xc(d.test_path);
        out.has_test = true;
        if (out.test.num_features != out.train.num_features ||
            out.test.num_labels != out.train.num_labels) {
          throw ConfigError("train and test headers disagree");
        }
      }
      break;
    case DatasetKind::skipgram: {
      auto corpus = build_skipgram(d.corpus_path, d.window, d.max_vocab, d.max_tokens);
      out.train = std::move(corpus.dataset);
      const auto n_test =
          static_cast<std::size_t>(d.test_fraction * static_cast<double>(out.train.size()));
      if (n_test > 0) {
        out.test.num_features = out.train.num_features;
        out.test.num_labels = out.train.num_labels;
        out.test.samples.assign(out.train.samples.end() - static_cast<std::ptrdiff_t>(n_test),
                                out.train.samples.end());
        out.train.samples.resize(out.train.samples.size() - n_test);
        out.has_test = true;
      }
      break;
    }
    case DatasetKind::planted: {
      auto data = make_planted_clusters(d.planted, derive_seed(master_seed, "data"));
      out.train = std::move(data.train);
      out.test = std::move(data.test);
      out.has_test = !out.test.samples.empty();
      break;
    }
  }
  if (out.train.samples.empty()) throw ConfigError("training set is empty");
  if (d.unit_norm) {
    normalize_features(out.train);
    normalize_features(out.test);
  }
  return out;
}

}  // namespace lns
