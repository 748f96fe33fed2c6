#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lns/data_io.hpp"
#include "lns/network.hpp"
#include "lns/vectors.hpp"

namespace lns {

struct MetricsRecord {
  std::uint64_t iteration = 0;
  double wall_clock_s = 0.0;
  double train_loss = 0.0;
  double p_at_1 = 0.0;
  std::optional<double> p_at_k;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

inline constexpr const char* kMetricsHeader = "iteration,wall_clock_s,train_loss,p_at_1,p_at_k";

/// Top-k class ids by descending score, ties to the lower id.
inline std::vector<ClassId> top_k_ids(std::span<const double> scores, std::size_t k) {
  k = std::min(k, scores.size());
  std::vector<ClassId> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<ClassId>(i);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](ClassId a, ClassId b) {
                      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                    });
  order.resize(k);
  return order;
}

/// |top-k ∩ truth| / k over a ranking of all classes; nullopt when truth is
/// empty (such samples are left out of averages).
inline std::optional<double> precision_at_k(std::span<const ClassId> ranked, const LabelSet& truth,
                                            std::size_t k) {
  if (k < 1 || k > ranked.size()) throw ArgumentError("precision_at_k: need 1 <= k <= N");
  if (truth.empty()) return std::nullopt;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += contains(truth, ranked[i]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

inline std::optional<double> precision_at_k(std::span<const double> scores, const LabelSet& truth,
                                            std::size_t k) {
  if (k < 1 || k > scores.size()) throw ArgumentError("precision_at_k: need 1 <= k <= N");
  return precision_at_k(top_k_ids(scores, k), truth, k);
}

/// Scores of every class for one input (evaluation always scores all N).
inline std::vector<double> full_logits(std::span<const double> e, const NetworkParams& p) {
  std::vector<double> out(p.shape.num_classes);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = dot(p.w_out.row(c), e) + p.b_out[c];
  return out;
}

struct EvalResult {
  double p_at_1 = 0.0;
  double p_at_k = 0.0;
  std::size_t evaluated = 0;
};

/// Mean P@1 and P@k over (up to `max_samples`) samples with full scoring.
inline EvalResult evaluate(const NetworkParams& p, const XcDataset& ds, std::size_t k,
                           std::size_t max_samples = 0) {
  EvalResult r;
  const std::size_t n = max_samples == 0 ? ds.size() : std::min(max_samples, ds.size());
  k = std::min(k, p.shape.num_classes);
  double sum1 = 0.0, sumk = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = ds.samples[i];
    if (s.y.empty()) continue;
    const auto e = forward_embedding(s.x, p);
    const auto ranked = top_k_ids(full_logits(e, p), k);
    sum1 += *precision_at_k(ranked, s.y, 1);
    sumk += *precision_at_k(ranked, s.y, k);
    ++r.evaluated;
  }
  if (r.evaluated > 0) {
    r.p_at_1 = sum1 / static_cast<double>(r.evaluated);
    r.p_at_k = sumk / static_cast<double>(r.evaluated);
  }
  return r;
}

inline std::string format_metrics_row(const MetricsRecord& r) {
  char buf[256];
  if (r.p_at_k) {
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%.17g",
                  static_cast<unsigned long long>(r.iteration), r.wall_clock_s, r.train_loss,
                  r.p_at_1, *r.p_at_k);
  } else {
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,",
                  static_cast<unsigned long long>(r.iteration), r.wall_clock_s, r.train_loss,
                  r.p_at_1);
  }
  return buf;
}

/**
 * Streams metrics rows to a CSV file, flushing after each row. Appending to
 * an existing nonempty file does not repeat the header.
 */
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path, bool append = false) : path_(path) {
    bool need_header = true;
    if (append) {
      std::ifstream probe(path, std::ios::binary | std::ios::ate);
      need_header = !probe || probe.tellg() == 0;
    }
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open metrics file '" + path + "'");
    if (need_header) {
      out_ << kMetricsHeader << '\n';
      out_.flush();
    }
    check();
  }

  void write(const MetricsRecord& r) {
    out_ << format_metrics_row(r) << '\n';
    out_.flush();
    check();
  }

 private:
  void check() {
    if (!out_) throw std::runtime_error("write failed for metrics file '" + path_ + "'");
  }

  std::string path_;
  std::ofstream out_;
};

inline void emit_metrics(std::span<const MetricsRecord> records, const std::string& path) {
  MetricsWriter w(path);
  for (const auto& r : records) w.write(r);
}

inline std::vector<MetricsRecord> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw ParseError("bad metrics header", 1);
  }
  std::vector<MetricsRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 5) throw ParseError("expected 5 fields", line_no);
    MetricsRecord r;
    try {
      r.iteration = std::stoull(f[0]);
      r.wall_clock_s = std::stod(f[1]);
      r.train_loss = std::stod(f[2]);
      r.p_at_1 = std::stod(f[3]);
      if (!f[4].empty()) r.p_at_k = std::stod(f[4]);
    } catch (const std::exception&) {
      throw ParseError("malformed metrics row", line_no);
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace lns
