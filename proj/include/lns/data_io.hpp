#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lns/error.hpp"
#include "lns/random.hpp"
#include "lns/sampler.hpp"
#include "lns/vectors.hpp"

namespace lns {

struct Sample {
  SparseVector x;
  LabelSet y;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Extreme-classification dataset: header counts plus (features, labels) rows.
struct XcDataset {
  std::size_t num_features = 0;
  std::size_t num_labels = 0;
  std::vector<Sample> samples;
  std::size_t dropped_unlabeled = 0;

  std::size_t size() const noexcept { return samples.size(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

}  // namespace detail

/**
 * Parses the extreme-classification text format:
 *
 *     num_points num_features num_labels
 *     l1,l2,... f1:v1 f2:v2 ...
 *
 * A line whose first token contains ':' has no labels; such samples are
 * dropped and counted. Indices are validated against the header.
 */
inline XcDataset parse_xc(std::istream& in) {
  XcDataset ds;
  std::string line;
  std::size_t line_no = 0;
  std::size_t declared = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = detail::trim(line);
    if (text.empty()) continue;
    const auto tokens = detail::split_ws(text);
    if (!have_header) {
      if (tokens.size() != 3 || !detail::parse_number(tokens[0], declared) ||
          !detail::parse_number(tokens[1], ds.num_features) ||
          !detail::parse_number(tokens[2], ds.num_labels)) {
        throw ParseError("expected header 'num_points num_features num_labels'", line_no);
      }
      have_header = true;
      continue;
    }
    std::size_t first_feature = 0;
    std::vector<ClassId> labels;
    if (tokens[0].find(':') == std::string_view::npos) {
      first_feature = 1;
      std::string_view rest = tokens[0];
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        const auto item = rest.substr(0, comma);
        ClassId label = 0;
        if (!detail::parse_number(item, label)) {
          throw ParseError("malformed label '" + std::string(item) + "'", line_no);
        }
        if (label >= ds.num_labels) {
          throw ParseError("label " + std::to_string(label) + " >= num_labels " +
                               std::to_string(ds.num_labels),
                           line_no);
        }
        labels.push_back(label);
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      }
    }
    std::vector<std::pair<std::uint32_t, double>> features;
    for (std::size_t t = first_feature; t < tokens.size(); ++t) {
      const auto colon = tokens[t].find(':');
      std::uint32_t index = 0;
      double value = 0.0;
      if (colon == std::string_view::npos ||
          !detail::parse_number(tokens[t].substr(0, colon), index) ||
          !detail::parse_number(tokens[t].substr(colon + 1), value)) {
        throw ParseError("malformed feature '" + std::string(tokens[t]) + "'", line_no);
      }
      if (index >= ds.num_features) {
        throw ParseError("feature " + std::to_string(index) + " >= num_features " +
                             std::to_string(ds.num_features),
                         line_no);
      }
      features.emplace_back(index, value);
    }
    if (labels.empty()) {
      ++ds.dropped_unlabeled;
      continue;
    }
    Sample s;
    try {
      s.x = SparseVector::from_pairs(std::move(features));
    } catch (const ArgumentError& e) {
      throw ParseError(e.what(), line_no);
    }
    s.y = make_label_set(std::move(labels));
    ds.samples.push_back(std::move(s));
  }
  if (!have_header) throw ParseError("missing header", line_no);
  return ds;
}

inline XcDataset parse_xc(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset '" + path + "'");
  return parse_xc(in);
}

/// Writes the format read by parse_xc (max_digits10 precision).
inline void write_xc(std::ostream& out, const XcDataset& ds) {
  std::ostringstream buf;
  buf.precision(17);
  buf << ds.samples.size() << ' ' << ds.num_features << ' ' << ds.num_labels << '\n';
  for (const auto& s : ds.samples) {
    for (std::size_t i = 0; i < s.y.size(); ++i) buf << (i ? "," : "") << s.y[i];
    for (std::size_t i = 0; i < s.x.nnz(); ++i) {
      buf << ' ' << s.x.indices[i] << ':' << s.x.values[i];
    }
    buf << '\n';
  }
  out << buf.str();
}

/// Scales every sample's features to unit L2 norm; all-zero rows stay as they are.
inline void normalize_features(XcDataset& ds) {
  for (auto& s : ds.samples) {
    double n2 = 0.0;
    for (double v : s.x.values) n2 += v * v;
    if (n2 == 0.0) continue;
    const double inv = 1.0 / std::sqrt(n2);
    for (double& v : s.x.values) v *= inv;
  }
}

/// Vocabulary plus one-hot → multi-hot context samples.
struct SkipGramCorpus {
  std::vector<std::string> vocabulary;  // id -> token, descending frequency
  std::vector<std::uint64_t> token_counts;
  std::size_t window = 2;
  XcDataset dataset;
};

/**
 * Whitespace-tokenizes `in` (at most `max_tokens` tokens; 0 = all). The
 * vocabulary is the `max_vocab` most frequent tokens, ties by first
 * occurrence. Every in-vocabulary position emits one sample: input is the
 * center token, labels are the in-vocabulary tokens within `window`
 * positions on either side. Positions with no in-vocabulary context are
 * dropped and counted.
 */
inline SkipGramCorpus build_skipgram(std::istream& in, std::size_t window, std::size_t max_vocab,
                                     std::size_t max_tokens = 0) {
  if (window < 1) throw ArgumentError("skip-gram window must be >= 1");
  if (max_vocab < 1) throw ArgumentError("max_vocab must be >= 1");
  std::vector<std::string> tokens;
  std::string tok;
  while ((max_tokens == 0 || tokens.size() < max_tokens) && (in >> tok)) tokens.push_back(tok);
  if (tokens.empty()) throw ArgumentError("empty corpus");

  struct Entry {
    std::uint64_t count = 0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string, Entry> counts;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto [it, inserted] = counts.try_emplace(tokens[i]);
    if (inserted) it->second.first = i;
    ++it->second.count;
  }
  std::vector<std::pair<std::string, Entry>> ordered(counts.begin(), counts.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    return a.second.count != b.second.count ? a.second.count > b.second.count
                                            : a.second.first < b.second.first;
  });
  if (ordered.size() > max_vocab) ordered.resize(max_vocab);

  SkipGramCorpus corpus;
  corpus.window = window;
  std::unordered_map<std::string, ClassId> id_of;
  for (const auto& [word, entry] : ordered) {
    id_of.emplace(word, static_cast<ClassId>(corpus.vocabulary.size()));
    corpus.vocabulary.push_back(word);
    corpus.token_counts.push_back(entry.count);
  }
  std::vector<std::int64_t> ids(tokens.size(), -1);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto it = id_of.find(tokens[i]);
    if (it != id_of.end()) ids[i] = it->second;
  }
  auto& ds = corpus.dataset;
  ds.num_features = corpus.vocabulary.size();
  ds.num_labels = corpus.vocabulary.size();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0) continue;
    std::vector<ClassId> ctx;
    const std::size_t lo = i >= window ? i - window : 0;
    const std::size_t hi = std::min(ids.size() - 1, i + window);
    for (std::size_t j = lo; j <= hi; ++j) {
      if (j != i && ids[j] >= 0) ctx.push_back(static_cast<ClassId>(ids[j]));
    }
    if (ctx.empty()) {
      ++ds.dropped_unlabeled;
      continue;
    }
    Sample s;
    s.x.indices.push_back(static_cast<std::uint32_t>(ids[i]));
    s.x.values.push_back(1.0);
    s.y = make_label_set(std::move(ctx));
    ds.samples.push_back(std::move(s));
  }
  return corpus;
}

inline SkipGramCorpus build_skipgram(const std::string& path, std::size_t window,
                                     std::size_t max_vocab, std::size_t max_tokens = 0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus '" + path + "'");
  return build_skipgram(in, window, max_vocab, max_tokens);
}

/// Number of samples containing each class.
inline FrequencyTable class_frequencies(const XcDataset& ds) {
  std::vector<std::uint64_t> counts(ds.num_labels, 0);
  for (const auto& s : ds.samples) {
    for (ClassId c : s.y) ++counts[c];
  }
  return FrequencyTable(std::move(counts));
}

/// Class ids ordered by descending frequency (ties by id); index = rank.
inline std::vector<ClassId> classes_by_frequency(const FrequencyTable& freq) {
  std::vector<ClassId> order(freq.num_classes());
  std::iota(order.begin(), order.end(), ClassId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](ClassId a, ClassId b) { return freq.count(a) > freq.count(b); });
  return order;
}

/// Sample indices for one epoch, shuffled by (seed, epoch) and cut into
/// batches; the last batch may be partial.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t num_samples,
                                                           std::size_t batch_size,
                                                           std::uint64_t seed,
                                                           std::uint64_t epoch) {
  if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
  std::vector<std::size_t> order(num_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "shuffle", epoch));
  shuffle(std::span<std::size_t>(order), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < num_samples; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(num_samples, i + batch_size)));
  }
  return out;
}

/**
 * Synthetic task with class structure. Classes are split evenly into
 * clusters. Each cluster owns `cluster_features` features and each class
 * owns `class_features`; a sample of class c activates a few of its
 * cluster's features, a few of its own, and some global noise features.
 * Classes within a cluster are each other's hard negatives.
 */
struct PlantedClusterConfig {
  std::size_t num_classes = 1000;
  std::size_t num_clusters = 10;
  std::size_t cluster_features = 20;
  std::size_t class_features = 10;
  std::size_t noise_features = 1000;
  std::size_t active_cluster = 6;
  std::size_t active_class = 3;
  std::size_t active_noise = 4;
  std::size_t train_samples = 20000;
  std::size_t test_samples = 5000;
};

struct PlantedClusterData {
  XcDataset train;
  XcDataset test;
  std::vector<std::size_t> cluster_of;
};

inline PlantedClusterData make_planted_clusters(const PlantedClusterConfig& cfg, std::uint64_t seed) {
  if (cfg.num_clusters == 0 || cfg.num_classes < cfg.num_clusters) {
    throw ConfigError("planted clusters: need 1 <= clusters <= classes");
  }
  if (cfg.active_cluster > cfg.cluster_features || cfg.active_class > cfg.class_features ||
      cfg.active_noise > cfg.noise_features) {
    throw ConfigError("planted clusters: active counts exceed feature pools");
  }
  const std::size_t cluster_base = 0;
  const std::size_t class_base = cfg.num_clusters * cfg.cluster_features;
  const std::size_t noise_base = class_base + cfg.num_classes * cfg.class_features;
  const std::size_t dim = noise_base + cfg.noise_features;

  PlantedClusterData data;
  data.cluster_of.resize(cfg.num_classes);
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    data.cluster_of[c] = c * cfg.num_clusters / cfg.num_classes;
  }
  Rng rng(derive_seed(seed, "planted"));
  auto pick = [&](std::size_t base, std::size_t pool, std::size_t count,
                  std::vector<std::pair<std::uint32_t, double>>& out) {
    std::vector<std::size_t> idx(pool);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(pool - i));
      std::swap(idx[i], idx[j]);
      out.emplace_back(static_cast<std::uint32_t>(base + idx[i]), 0.5 + rng.uniform());
    }
  };
  auto generate = [&](std::size_t n, XcDataset& ds) {
    ds.num_features = dim;
    ds.num_labels = cfg.num_classes;
    ds.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<ClassId>(i < cfg.num_classes ? i : rng.below(cfg.num_classes));
      std::vector<std::pair<std::uint32_t, double>> f;
      pick(cluster_base + data.cluster_of[c] * cfg.cluster_features, cfg.cluster_features,
           cfg.active_cluster, f);
      pick(class_base + c * cfg.class_features, cfg.class_features, cfg.active_class, f);
      pick(noise_base, cfg.noise_features, cfg.active_noise, f);
      ds.samples.push_back({SparseVector::from_pairs(std::move(f)), LabelSet{c}});
    }
  };
  generate(cfg.train_samples, data.train);
  generate(cfg.test_samples, data.test);
  return data;
}

}  // namespace lns
