#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lns/data_io.hpp"
#include "lns/error.hpp"
#include "lns/lsh_hashes.hpp"
#include "lns/lsh_tables.hpp"
#include "lns/metrics.hpp"
#include "lns/network.hpp"
#include "lns/random.hpp"
#include "lns/sampler.hpp"
#include "lns/trainer.hpp"

namespace lns {

inline double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ArgumentError("tv_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

/// Ranks with ties averaged (1-based).
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = r;
    i = j + 1;
  }
  return rank;
}

/// Spearman rank correlation (Pearson correlation of average ranks).
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("spearman: need equal sizes >= 2");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

enum class SimilarityMetric { cosine, inner_product, rank_agreement };

/// Fraction of coordinate pairs ordered the same way in a and b (the
/// similarity WTA hashing tracks).
inline double rank_agreement(std::span<const double> a, std::span<const double> b) {
  std::size_t agree = 0, pairs = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      agree += (da > 0) == (db > 0) && (da < 0) == (db < 0) ? 1 : 0;
      ++pairs;
    }
  }
  return pairs ? static_cast<double>(agree) / static_cast<double>(pairs) : 1.0;
}

inline double similarity(std::span<const double> a, std::span<const double> b,
                         SimilarityMetric metric) {
  switch (metric) {
    case SimilarityMetric::cosine: {
      const double d = norm(a) * norm(b);
      return d == 0.0 ? 0.0 : dot(a, b) / d;
    }
    case SimilarityMetric::inner_product: return dot(a, b);
    case SimilarityMetric::rank_agreement: return rank_agreement(a, b);
  }
  return 0.0;
}

/// Exact top-k rows of `vectors` by similarity to `query`, ties to lower id.
inline std::vector<ClassId> brute_force_similar(std::span<const double> query, const Matrix& vectors,
                                                SimilarityMetric metric, std::size_t k) {
  std::vector<double> score(vectors.rows());
  for (std::size_t i = 0; i < vectors.rows(); ++i) score[i] = similarity(query, vectors.row(i), metric);
  return top_k_ids(score, k);
}

struct ProbeConfig {
  SamplerKind sampler = SamplerKind::lns_label;
  std::size_t n_samples = 50;
  HashConfig hash;
  std::size_t draws_per_input = 50;
  std::uint64_t seed = 7;
};

/**
 * Sampler distribution vs the full-softmax negative distribution. Masses
 * are averaged over the probe inputs; each per-input mass sums to 1.
 */
struct AdaptivityReport {
  std::uint64_t iteration = 0;
  std::vector<double> target_mass;
  std::vector<double> empirical_mass;
  std::vector<double> uniform_mass;
  double tv_empirical_uniform = 0.0;
  double tv_empirical_target = 0.0;
  double tv_uniform_target = 0.0;
};

/**
 * For each probe input: target = softmax over all N logits with the true
 * classes removed; empirical = frequency of each class among the negatives
 * of `draws_per_input` sampler calls. LNS draws use freshly seeded hash
 * tables each time so the frequencies reflect hash randomness.
 */
inline AdaptivityReport adaptivity_probe(const NetworkParams& p, std::span<const Sample> inputs,
                                         const ProbeConfig& cfg, std::uint64_t iteration = 0) {
  if (cfg.sampler != SamplerKind::uniform && !uses_tables(cfg.sampler)) {
    throw ConfigError("adaptivity probe supports uniform, lns_label and lns_embedding");
  }
  if (inputs.empty() || cfg.draws_per_input == 0) {
    throw ArgumentError("adaptivity probe needs inputs and draws");
  }
  const std::size_t n = p.shape.num_classes;
  AdaptivityReport rep;
  rep.iteration = iteration;
  rep.target_mass.assign(n, 0.0);
  rep.empirical_mass.assign(n, 0.0);
  rep.uniform_mass.assign(n, 0.0);
  const double weight = 1.0 / static_cast<double>(inputs.size());

  for (std::size_t q = 0; q < inputs.size(); ++q) {
    const Sample& s = inputs[q];
    const auto e = forward_embedding(s.x, p);
    auto logits = full_logits(e, p);
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> target(n, 0.0);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (contains(s.y, static_cast<ClassId>(c))) continue;
      target[c] = std::exp(logits[c] - mx);
      z += target[c];
    }
    const double uniform = 1.0 / static_cast<double>(n - s.y.size());
    for (std::size_t c = 0; c < n; ++c) {
      rep.target_mass[c] += weight * target[c] / z;
      if (!contains(s.y, static_cast<ClassId>(c))) rep.uniform_mass[c] += weight * uniform;
    }

    std::vector<double> counts(n, 0.0);
    double total = 0.0;
    for (std::size_t d = 0; d < cfg.draws_per_input; ++d) {
      const std::uint64_t draw_seed = derive_seed(cfg.seed, "probe", q * 1000003 + d);
      Rng rng(draw_seed);
      std::vector<ClassId> negatives;
      if (cfg.sampler == SamplerKind::uniform) {
        negatives = sample_uniform(cfg.n_samples, n, s.y, rng);
      } else {
        auto family = HashFamily::make(cfg.hash.family, p.shape.hidden_dim, cfg.hash.k,
                                       cfg.hash.l, cfg.hash.bin_size,
                                       derive_seed(draw_seed, "hash"));
        LshTables tables(std::move(family), cfg.hash.bucket_capacity,
                         derive_seed(draw_seed, "tables"));
        tables.build(p.w_out);
        const CandidateSet cand = cfg.sampler == SamplerKind::lns_label
                                      ? sample_lns_label(s.y, tables, p.w_out, rng)
                                      : sample_lns_embedding(e, s.y, tables);
        const ActiveSet a = finalize_active_set(cand, s.y, cfg.n_samples, n, rng);
        for (std::size_t i = 0; i < a.size(); ++i) {
          if (!a.true_mask[i]) negatives.push_back(a.ids[i]);
        }
      }
      for (ClassId c : negatives) counts[c] += 1.0;
      total += static_cast<double>(negatives.size());
    }
    for (std::size_t c = 0; c < n; ++c) rep.empirical_mass[c] += weight * counts[c] / total;
  }
  rep.tv_empirical_uniform = tv_distance(rep.empirical_mass, rep.uniform_mass);
  rep.tv_empirical_target = tv_distance(rep.empirical_mass, rep.target_mass);
  rep.tv_uniform_target = tv_distance(rep.uniform_mass, rep.target_mass);
  return rep;
}

/// CSV: iteration,class_id,target_mass,empirical_mass
inline void write_adaptivity_csv(const AdaptivityReport& rep, const std::string& path,
                                 bool append = false) {
  bool header = true;
  if (append) {
    std::ifstream probe(path, std::ios::binary | std::ios::ate);
    header = !probe || probe.tellg() == 0;
  }
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write adaptivity report '" + path + "'");
  if (header) out << "iteration,class_id,target_mass,empirical_mass\n";
  char buf[128];
  for (std::size_t c = 0; c < rep.target_mass.size(); ++c) {
    std::snprintf(buf, sizeof buf, "%llu,%zu,%.17g,%.17g\n",
                  static_cast<unsigned long long>(rep.iteration), c, rep.target_mass[c],
                  rep.empirical_mass[c]);
    out << buf;
  }
  if (!out) throw std::runtime_error("adaptivity report write failed");
}

struct QueryScalingRow {
  std::size_t num_classes = 0;
  double mean_query_seconds = 0.0;
  std::size_t hash_evaluations_per_query = 0;
  double mean_ids_examined = 0.0;
  double build_seconds = 0.0;
};

struct QueryScalingConfig {
  std::size_t dim = 128;
  HashConfig hash;
  std::size_t queries = 10000;
  bool duplicate_vectors = false;  // negative control: every class vector identical
  std::uint64_t seed = 11;
};

/**
 * Builds tables over N random Gaussian class vectors for each N and times
 * `queries` random queries. Hash evaluations per query are counted exactly.
 */
inline std::vector<QueryScalingRow> query_cost_scaling(std::span<const std::size_t> class_counts,
                                                       const QueryScalingConfig& cfg) {
  std::vector<QueryScalingRow> rows;
  for (std::size_t n : class_counts) {
    Rng rng(derive_seed(cfg.seed, "vectors", n));
    Matrix vectors(n, cfg.dim);
    if (cfg.duplicate_vectors) {
      std::vector<double> v(cfg.dim);
      for (double& x : v) x = rng.normal();
      for (std::size_t i = 0; i < n; ++i) std::copy(v.begin(), v.end(), vectors.row(i).begin());
    } else {
      for (double& x : vectors.data()) x = rng.normal();
    }
    auto family = HashFamily::make(cfg.hash.family, cfg.dim, cfg.hash.k, cfg.hash.l,
                                   cfg.hash.bin_size, derive_seed(cfg.seed, "hash"));
    LshTables tables(std::move(family), cfg.hash.bucket_capacity, derive_seed(cfg.seed, "tables"));
    const auto b0 = std::chrono::steady_clock::now();
    tables.build(vectors);
    const auto b1 = std::chrono::steady_clock::now();

    Matrix queries(cfg.queries, cfg.dim);
    Rng qrng(derive_seed(cfg.seed, "queries"));
    if (cfg.duplicate_vectors) {
      for (std::size_t i = 0; i < cfg.queries; ++i) {
        std::copy(vectors.row(0).begin(), vectors.row(0).end(), queries.row(i).begin());
      }
    } else {
      for (double& x : queries.data()) x = qrng.normal();
    }
    std::size_t evals = 0, examined = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < cfg.queries; ++i) {
      const auto r = tables.query(queries.row(i));
      evals += r.hash_evaluations;
      examined += r.ids_examined;
    }
    const auto t1 = std::chrono::steady_clock::now();
    QueryScalingRow row;
    row.num_classes = n;
    row.mean_query_seconds =
        std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(cfg.queries);
    row.hash_evaluations_per_query = cfg.queries ? evals / cfg.queries : 0;
    row.mean_ids_examined = static_cast<double>(examined) / static_cast<double>(cfg.queries);
    row.build_seconds = std::chrono::duration<double>(b1 - b0).count();
    rows.push_back(row);
  }
  return rows;
}

}  // namespace lns
