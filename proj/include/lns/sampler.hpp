#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "lns/error.hpp"
#include "lns/lsh_tables.hpp"
#include "lns/random.hpp"
#include "lns/vectors.hpp"

namespace lns {

enum class SamplerKind { full, lns_label, lns_embedding, uniform, log_uniform, frequency, top_k };

inline std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::full: return "full";
    case SamplerKind::lns_label: return "lns_label";
    case SamplerKind::lns_embedding: return "lns_embedding";
    case SamplerKind::uniform: return "uniform";
    case SamplerKind::log_uniform: return "log_uniform";
    case SamplerKind::frequency: return "frequency";
    case SamplerKind::top_k: return "top_k";
  }
  return "?";
}

inline SamplerKind parse_sampler_kind(const std::string& s) {
  for (auto kind : {SamplerKind::full, SamplerKind::lns_label, SamplerKind::lns_embedding,
                    SamplerKind::uniform, SamplerKind::log_uniform, SamplerKind::frequency,
                    SamplerKind::top_k}) {
    if (to_string(kind) == s) return kind;
  }
  throw ConfigError("unknown sampler '" + s + "'");
}

inline bool uses_tables(SamplerKind kind) {
  return kind == SamplerKind::lns_label || kind == SamplerKind::lns_embedding;
}

/// Last-layer neurons computed for one input: ids ascending, true labels flagged.
struct ActiveSet {
  std::vector<ClassId> ids;
  std::vector<std::uint8_t> true_mask;

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t num_true() const {
    return static_cast<std::size_t>(std::count(true_mask.begin(), true_mask.end(), 1));
  }
};

/// Builds the active set y ∪ negatives. Negatives must not intersect y.
inline ActiveSet make_active_set(const LabelSet& y, std::span<const ClassId> negatives) {
  ActiveSet a;
  a.ids.reserve(y.size() + negatives.size());
  a.ids.insert(a.ids.end(), y.begin(), y.end());
  a.ids.insert(a.ids.end(), negatives.begin(), negatives.end());
  std::sort(a.ids.begin(), a.ids.end());
  a.ids.erase(std::unique(a.ids.begin(), a.ids.end()), a.ids.end());
  a.true_mask.resize(a.ids.size());
  for (std::size_t i = 0; i < a.ids.size(); ++i) a.true_mask[i] = contains(y, a.ids[i]) ? 1 : 0;
  return a;
}

inline ActiveSet all_classes(std::size_t num_classes, const LabelSet& y) {
  std::vector<ClassId> ids(num_classes);
  std::iota(ids.begin(), ids.end(), ClassId{0});
  return make_active_set(y, ids);
}

/// Counters the trainer reports; fallbacks are logged here rather than thrown.
struct SamplerStats {
  std::uint64_t queries = 0;
  std::uint64_t hash_evaluations = 0;
  std::uint64_t ids_examined = 0;
  std::uint64_t degenerate_queries = 0;
  std::uint64_t padded_sets = 0;
  std::uint64_t padded_ids = 0;

  SamplerStats& operator+=(const SamplerStats& o) {
    queries += o.queries;
    hash_evaluations += o.hash_evaluations;
    ids_examined += o.ids_examined;
    degenerate_queries += o.degenerate_queries;
    padded_sets += o.padded_sets;
    padded_ids += o.padded_ids;
    return *this;
  }
};

/**
 * Per-class occurrence counts with a Vose alias table for O(1) draws over
 * the classes that have nonzero count.
 */
class FrequencyTable {
 public:
  FrequencyTable() = default;
  explicit FrequencyTable(std::vector<std::uint64_t> counts) : counts_(std::move(counts)) {
    total_ = std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
    for (std::size_t c = 0; c < counts_.size(); ++c) {
      if (counts_[c] > 0) support_.push_back(static_cast<ClassId>(c));
    }
    const std::size_t n = support_.size();
    if (n == 0) return;
    prob_.assign(n, 0.0);
    alias_.assign(n, 0);
    std::vector<double> scaled(n);
    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = static_cast<double>(counts_[support_[i]]) * static_cast<double>(n) /
                  static_cast<double>(total_);
      (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      const std::size_t s = small.back();
      small.pop_back();
      const std::size_t g = large.back();
      prob_[s] = scaled[s];
      alias_[s] = g;
      scaled[g] = (scaled[g] + scaled[s]) - 1.0;
      if (scaled[g] < 1.0) {
        large.pop_back();
        small.push_back(g);
      }
    }
    for (std::size_t g : large) prob_[g] = 1.0;
    for (std::size_t s : small) prob_[s] = 1.0;
  }

  std::size_t num_classes() const noexcept { return counts_.size(); }
  std::uint64_t total() const noexcept { return total_; }
  std::uint64_t count(ClassId c) const { return counts_.at(c); }
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }
  std::span<const ClassId> support() const noexcept { return support_; }

  double probability(ClassId c) const {
    return total_ == 0 ? 0.0 : static_cast<double>(counts_.at(c)) / static_cast<double>(total_);
  }

  ClassId draw(Rng& rng) const {
    if (support_.empty()) throw ArgumentError("frequency table has no mass");
    const auto i = static_cast<std::size_t>(rng.below(support_.size()));
    return rng.uniform() < prob_[i] ? support_[i] : support_[alias_[i]];
  }

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
  std::vector<ClassId> support_;
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

namespace detail {

/**
 * n distinct draws from `draw`, rejecting excluded and repeated classes.
 * If rejections pile up (mass concentrated on excluded ids) it switches to
 * exact sequential sampling without replacement using `weight`.
 */
template <class DrawFn, class WeightFn>
std::vector<ClassId> draw_distinct(std::size_t n, std::size_t num_classes, const LabelSet& exclude,
                                   DrawFn draw, WeightFn weight, Rng& rng) {
  std::vector<ClassId> out;
  out.reserve(n);
  std::unordered_set<ClassId> seen;
  const std::size_t max_rejections = 64 * (n + exclude.size()) + 1024;
  std::size_t rejections = 0;
  while (out.size() < n && rejections < max_rejections) {
    const ClassId c = draw();
    if (contains(exclude, c) || !seen.insert(c).second) {
      ++rejections;
      continue;
    }
    out.push_back(c);
  }
  if (out.size() < n) {
    std::vector<ClassId> pool;
    std::vector<double> w;
    for (std::size_t c = 0; c < num_classes; ++c) {
      const auto id = static_cast<ClassId>(c);
      if (contains(exclude, id) || seen.count(id)) continue;
      const double wc = weight(id);
      if (wc <= 0.0) continue;
      pool.push_back(id);
      w.push_back(wc);
    }
    while (out.size() < n && !pool.empty()) {
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      double u = rng.uniform() * total;
      std::size_t pick = 0;
      while (pick + 1 < pool.size() && u >= w[pick]) u -= w[pick++];
      out.push_back(pool[pick]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
      w.erase(w.begin() + static_cast<std::ptrdiff_t>(pick));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// n distinct classes uniformly from [0, N) \ exclude.
inline std::vector<ClassId> sample_uniform(std::size_t n, std::size_t num_classes,
                                           const LabelSet& exclude, Rng& rng) {
  std::size_t excluded = 0;
  for (ClassId c : exclude) excluded += c < num_classes ? 1 : 0;
  if (n > num_classes - excluded) {
    throw ArgumentError("sample_uniform: n exceeds the number of available classes");
  }
  return detail::draw_distinct(
      n, num_classes, exclude, [&] { return static_cast<ClassId>(rng.below(num_classes)); },
      [](ClassId) { return 1.0; }, rng);
}

/// Log-uniform mass of zero-based frequency rank r among N ranks.
inline double log_uniform_mass(std::size_t rank, std::size_t num_classes) {
  return std::log((static_cast<double>(rank) + 2.0) / (static_cast<double>(rank) + 1.0)) /
         std::log(static_cast<double>(num_classes) + 1.0);
}

/**
 * n distinct classes with P(rank r) ∝ log((r+2)/(r+1)), drawn without
 * replacement and excluding `exclude`. `class_of_rank[r]` maps a rank to its
 * class id; an empty span means rank == class id.
 */
inline std::vector<ClassId> sample_log_uniform(std::size_t n, std::size_t num_classes,
                                               const LabelSet& exclude,
                                               std::span<const ClassId> class_of_rank, Rng& rng) {
  if (!class_of_rank.empty() && class_of_rank.size() != num_classes) {
    throw ArgumentError("sample_log_uniform: rank map size != N");
  }
  std::size_t excluded = 0;
  for (ClassId c : exclude) excluded += c < num_classes ? 1 : 0;
  if (n > num_classes - excluded) {
    throw ArgumentError("sample_log_uniform: n exceeds N - |exclude|");
  }
  std::vector<std::size_t> rank_of;
  if (!class_of_rank.empty()) {
    rank_of.resize(num_classes);
    for (std::size_t r = 0; r < num_classes; ++r) rank_of[class_of_rank[r]] = r;
  }
  const double log_range = std::log(static_cast<double>(num_classes) + 1.0);
  auto to_class = [&](std::size_t r) {
    return class_of_rank.empty() ? static_cast<ClassId>(r) : class_of_rank[r];
  };
  return detail::draw_distinct(
      n, num_classes, exclude,
      [&] {
        const double x = std::exp(rng.uniform() * log_range);
        auto r = static_cast<std::size_t>(x) - 1;
        return to_class(std::min(r, num_classes - 1));
      },
      [&](ClassId c) { return log_uniform_mass(rank_of.empty() ? c : rank_of[c], num_classes); },
      rng);
}

/// n distinct classes with marginals ∝ training counts, rejecting exclude/duplicates.
inline std::vector<ClassId> sample_frequency(std::size_t n, const FrequencyTable& freq,
                                             const LabelSet& exclude, Rng& rng) {
  std::size_t available = freq.support().size();
  for (ClassId c : exclude) {
    if (c < freq.num_classes() && freq.count(c) > 0) --available;
  }
  if (available == 0) throw ArgumentError("sample_frequency: all mass excluded");
  if (n > available) throw ArgumentError("sample_frequency: n exceeds classes with mass");
  return detail::draw_distinct(
      n, freq.num_classes(), exclude, [&] { return freq.draw(rng); },
      [&](ClassId c) { return static_cast<double>(freq.count(c)); }, rng);
}

/// y ∪ the k highest logits, ties broken by lower class id.
inline ActiveSet top_k_candidates(std::span<const double> logits, std::size_t k, const LabelSet& y) {
  if (k < 1 || k > logits.size()) throw ArgumentError("top_k_candidates: need 1 <= k <= N");
  std::vector<ClassId> order(logits.size());
  std::iota(order.begin(), order.end(), ClassId{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](ClassId a, ClassId b) {
                      return logits[a] > logits[b] || (logits[a] == logits[b] && a < b);
                    });
  order.resize(k);
  return make_active_set(y, order);
}

inline CandidateSet subtract(const CandidateSet& candidates, const LabelSet& y) {
  CandidateSet out;
  out.reserve(candidates.size());
  std::set_difference(candidates.begin(), candidates.end(), y.begin(), y.end(),
                      std::back_inserter(out));
  return out;
}

namespace detail {

inline CandidateSet query_or_empty(const LshTables& tables, std::span<const double> q,
                                   SamplerStats* stats) {
  if (stats) ++stats->queries;
  try {
    QueryResult r = tables.query(q);
    if (stats) {
      stats->hash_evaluations += r.hash_evaluations;
      stats->ids_examined += r.ids_examined;
    }
    return std::move(r.ids);
  } catch (const DegenerateInputError&) {
    if (stats) ++stats->degenerate_queries;
    return {};
  }
}

}  // namespace detail

/**
 * LSH-Label: queries the tables with the current class vector of one
 * uniformly chosen true label and returns the retrieved ids minus y.
 */
inline CandidateSet sample_lns_label(const LabelSet& y, const LshTables& tables,
                                     const Matrix& class_vectors, Rng& rng,
                                     SamplerStats* stats = nullptr) {
  if (y.empty()) throw ArgumentError("sample_lns_label: empty label set");
  const ClassId pick = y[static_cast<std::size_t>(rng.below(y.size()))];
  return subtract(detail::query_or_empty(tables, class_vectors.row(pick), stats), y);
}

/**
 * LSH-Embedding: queries with the penultimate activation. An all-zero
 * embedding yields no candidates (counted as degenerate); the caller pads.
 */
inline CandidateSet sample_lns_embedding(std::span<const double> embedding, const LabelSet& y,
                                         const LshTables& tables, SamplerStats* stats = nullptr) {
  return subtract(detail::query_or_empty(tables, embedding, stats), y);
}

/**
 * Deduplicates, removes y, then trims to a uniform subsample of n_target or
 * pads with uniform non-true classes up to n_target. Returns C' ∪ y.
 */
inline ActiveSet finalize_active_set(const CandidateSet& candidates, const LabelSet& y,
                                     std::size_t n_target, std::size_t num_classes, Rng& rng,
                                     SamplerStats* stats = nullptr) {
  if (n_target + y.size() >= num_classes) {
    throw ArgumentError("finalize_active_set: n_target must be < N - |y|");
  }
  std::vector<ClassId> negatives = make_label_set(candidates);
  negatives = subtract(negatives, y);
  if (negatives.size() > n_target) {
    for (std::size_t i = 0; i < n_target; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(negatives.size() - i));
      std::swap(negatives[i], negatives[j]);
    }
    negatives.resize(n_target);
  } else if (negatives.size() < n_target) {
    if (stats) {
      ++stats->padded_sets;
      stats->padded_ids += n_target - negatives.size();
    }
    std::unordered_set<ClassId> present(negatives.begin(), negatives.end());
    while (negatives.size() < n_target) {
      const auto c = static_cast<ClassId>(rng.below(num_classes));
      if (contains(y, c) || !present.insert(c).second) continue;
      negatives.push_back(c);
    }
  }
  return make_active_set(y, negatives);
}

}  // namespace lns
