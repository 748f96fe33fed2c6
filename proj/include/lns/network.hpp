#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lns/error.hpp"
#include "lns/lsh_tables.hpp"
#include "lns/random.hpp"
#include "lns/sampler.hpp"
#include "lns/vectors.hpp"

namespace lns {

struct NetworkShape {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 128;
  std::size_t num_classes = 0;

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

/// Sparse-input MLP with one ReLU hidden layer. Row i of `w_out` is class i's vector.
struct NetworkParams {
  NetworkShape shape;
  Matrix w1;  // input_dim x hidden_dim; row j holds feature j's fan-out
  std::vector<double> b1;
  Matrix w_out;  // num_classes x hidden_dim
  std::vector<double> b_out;

  /// Uniform in ±sqrt(6 / (fan_in + fan_out)), zero biases.
  static NetworkParams init(const NetworkShape& shape, Rng& rng) {
    if (shape.input_dim == 0 || shape.hidden_dim == 0 || shape.num_classes == 0) {
      throw ConfigError("network dimensions must be positive");
    }
    NetworkParams p;
    p.shape = shape;
    p.w1 = Matrix(shape.input_dim, shape.hidden_dim);
    p.b1.assign(shape.hidden_dim, 0.0);
    p.w_out = Matrix(shape.num_classes, shape.hidden_dim);
    p.b_out.assign(shape.num_classes, 0.0);
    const double r1 = std::sqrt(6.0 / static_cast<double>(shape.input_dim + shape.hidden_dim));
    for (double& w : p.w1.data()) w = rng.uniform(-r1, r1);
    const double r2 = std::sqrt(6.0 / static_cast<double>(shape.hidden_dim + shape.num_classes));
    for (double& w : p.w_out.data()) w = rng.uniform(-r2, r2);
    return p;
  }

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/**
 * Lazy adaptive moments. Rows of w1 and w_out keep their own step counters
 * and are bias-corrected by their own age; a row whose gradient is entirely
 * zero is skipped (moments untouched). b_out entries share their class row's
 * counter; b1 has a single counter.
 */
struct AdamState {
  Matrix m_w1, v_w1;
  std::vector<std::uint64_t> steps_w1;
  std::vector<double> m_b1, v_b1;
  std::uint64_t steps_b1 = 0;
  Matrix m_out, v_out;
  std::vector<std::uint64_t> steps_out;
  std::vector<double> m_bout, v_bout;
  std::uint64_t global_step = 0;

  static AdamState zeros(const NetworkShape& s) {
    AdamState a;
    a.m_w1 = Matrix(s.input_dim, s.hidden_dim);
    a.v_w1 = Matrix(s.input_dim, s.hidden_dim);
    a.steps_w1.assign(s.input_dim, 0);
    a.m_b1.assign(s.hidden_dim, 0.0);
    a.v_b1.assign(s.hidden_dim, 0.0);
    a.m_out = Matrix(s.num_classes, s.hidden_dim);
    a.v_out = Matrix(s.num_classes, s.hidden_dim);
    a.steps_out.assign(s.num_classes, 0);
    a.m_bout.assign(s.num_classes, 0.0);
    a.v_bout.assign(s.num_classes, 0.0);
    return a;
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// E_x = relu(W1ᵀx + b1), iterating the nonzeros of x.
inline std::vector<double> forward_embedding(const SparseVector& x, const NetworkParams& p) {
  std::vector<double> e = p.b1;
  for (std::size_t i = 0; i < x.nnz(); ++i) {
    if (x.indices[i] >= p.shape.input_dim) throw ArgumentError("feature index out of range");
    const double xv = x.values[i];
    const auto row = p.w1.row(x.indices[i]);
    for (std::size_t k = 0; k < e.size(); ++k) e[k] += xv * row[k];
  }
  for (double& v : e) v = v > 0.0 ? v : 0.0;
  return e;
}

/// logit_i = w_iᵀe + b_i for the active ids only, in active order.
inline std::vector<double> forward_output_active(std::span<const double> e,
                                                 std::span<const ClassId> active,
                                                 const NetworkParams& p) {
  std::vector<double> logits(active.size());
  for (std::size_t a = 0; a < active.size(); ++a) {
    logits[a] = dot(p.w_out.row(active[a]), e) + p.b_out[active[a]];
  }
  return logits;
}

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> dlogits;
};

/**
 * Softmax cross-entropy restricted to the active set. Targets are 1/|y∩A|
 * on the flagged true ids. dlogits = p - t.
 */
inline LossAndGradient softmax_ce_active(std::span<const double> logits,
                                         std::span<const std::uint8_t> true_mask) {
  assert(logits.size() == true_mask.size());
  const std::size_t n_true =
      static_cast<std::size_t>(std::count(true_mask.begin(), true_mask.end(), 1));
  if (n_true == 0) throw ArgumentError("softmax_ce_active: no true label in the active set");
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - max_logit);
  const double log_z = max_logit + std::log(z);
  const double target = 1.0 / static_cast<double>(n_true);
  LossAndGradient out;
  out.dlogits.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double log_p = logits[i] - log_z;
    const double t = true_mask[i] ? target : 0.0;
    if (true_mask[i]) out.loss -= t * log_p;
    out.dlogits[i] = std::exp(log_p) - t;
  }
  return out;
}

/**
 * Batch gradient restricted to touched rows. Slot maps are sized to the
 * full parameter shape once; resetting only walks the touched lists.
 */
class SparseGradient {
 public:
  explicit SparseGradient(const NetworkShape& s)
      : shape_(s),
        slot_w1_(s.input_dim, kNoSlot),
        slot_out_(s.num_classes, kNoSlot),
        g_b1_(s.hidden_dim, 0.0) {}

  /// Adds `scale` times one sample's gradient, using parameters `p` as the point.
  void add_sample(const SparseVector& x, std::span<const double> e,
                  std::span<const double> dlogits, std::span<const ClassId> active,
                  const NetworkParams& p, double scale) {
    const std::size_t h = shape_.hidden_dim;
    std::vector<double> de(h, 0.0);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const double g = dlogits[a] * scale;
      if (g == 0.0) continue;
      const ClassId c = active[a];
      const auto w = p.w_out.row(c);
      for (std::size_t k = 0; k < h; ++k) de[k] += dlogits[a] * w[k];
      double* gw = out_row(c);
      for (std::size_t k = 0; k < h; ++k) gw[k] += g * e[k];
      g_bout_[slot_out_[c]] += g;
    }
    for (std::size_t k = 0; k < h; ++k) de[k] = e[k] > 0.0 ? de[k] * scale : 0.0;
    for (std::size_t k = 0; k < h; ++k) g_b1_[k] += de[k];
    for (std::size_t i = 0; i < x.nnz(); ++i) {
      const double xv = x.values[i];
      double* gw = w1_row(x.indices[i]);
      for (std::size_t k = 0; k < h; ++k) gw[k] += xv * de[k];
    }
  }

  void clear() {
    for (std::uint32_t r : rows_w1_) slot_w1_[r] = kNoSlot;
    for (ClassId c : rows_out_) slot_out_[c] = kNoSlot;
    rows_w1_.clear();
    rows_out_.clear();
    g_w1_.clear();
    g_out_.clear();
    g_bout_.clear();
    std::fill(g_b1_.begin(), g_b1_.end(), 0.0);
  }

  const NetworkShape& shape() const noexcept { return shape_; }
  std::span<const std::uint32_t> w1_rows() const noexcept { return rows_w1_; }
  std::span<const ClassId> out_rows() const noexcept { return rows_out_; }
  std::span<const double> w1_grad(std::size_t slot) const {
    return {g_w1_.data() + slot * shape_.hidden_dim, shape_.hidden_dim};
  }
  std::span<const double> out_grad(std::size_t slot) const {
    return {g_out_.data() + slot * shape_.hidden_dim, shape_.hidden_dim};
  }
  double bout_grad(std::size_t slot) const { return g_bout_[slot]; }
  std::span<const double> b1_grad() const noexcept { return g_b1_; }

 private:
  static constexpr std::uint32_t kNoSlot = 0xffffffffu;

  double* w1_row(std::uint32_t r) {
    if (slot_w1_[r] == kNoSlot) {
      slot_w1_[r] = static_cast<std::uint32_t>(rows_w1_.size());
      rows_w1_.push_back(r);
      g_w1_.resize(g_w1_.size() + shape_.hidden_dim, 0.0);
    }
    return g_w1_.data() + static_cast<std::size_t>(slot_w1_[r]) * shape_.hidden_dim;
  }

  double* out_row(ClassId c) {
    if (slot_out_[c] == kNoSlot) {
      slot_out_[c] = static_cast<std::uint32_t>(rows_out_.size());
      rows_out_.push_back(c);
      g_out_.resize(g_out_.size() + shape_.hidden_dim, 0.0);
      g_bout_.push_back(0.0);
    }
    return g_out_.data() + static_cast<std::size_t>(slot_out_[c]) * shape_.hidden_dim;
  }

  NetworkShape shape_;
  std::vector<std::uint32_t> slot_w1_;
  std::vector<std::uint32_t> slot_out_;
  std::vector<std::uint32_t> rows_w1_;
  std::vector<ClassId> rows_out_;
  std::vector<double> g_w1_;
  std::vector<double> g_out_;
  std::vector<double> g_bout_;
  std::vector<double> g_b1_;
};

namespace detail {

inline void check_finite(std::span<const double> g, const char* what, std::size_t row) {
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!std::isfinite(g[k])) {
      throw NumericError(std::string("non-finite gradient in ") + what + " row " +
                         std::to_string(row) + " col " + std::to_string(k));
    }
  }
}

inline bool all_zero(std::span<const double> g, double extra = 0.0) {
  return extra == 0.0 && is_all_zero(g);
}

// One Adam step on a contiguous row with its own step count `t` (>= 1).
inline void adam_row(std::span<double> w, std::span<double> m, std::span<double> v,
                     std::span<const double> g, std::uint64_t t, const AdamConfig& cfg) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < w.size(); ++k) {
    m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
    v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
    const double m_hat = m[k] / c1;
    const double v_hat = v[k] / c2;
    w[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

}  // namespace detail

/**
 * Applies one lazy Adam step for the rows present in `grad`. Returns the
 * class rows that actually changed (nonzero gradient).
 */
inline std::vector<ClassId> apply_adam(const SparseGradient& grad, NetworkParams& p,
                                       AdamState& adam, const AdamConfig& cfg) {
  ++adam.global_step;
  const auto w1_rows = grad.w1_rows();
  for (std::size_t s = 0; s < w1_rows.size(); ++s) {
    detail::check_finite(grad.w1_grad(s), "w1", w1_rows[s]);
  }
  const auto out_rows = grad.out_rows();
  for (std::size_t s = 0; s < out_rows.size(); ++s) {
    detail::check_finite(grad.out_grad(s), "w_out", out_rows[s]);
    const double gb = grad.bout_grad(s);
    detail::check_finite(std::span<const double>(&gb, 1), "b_out", out_rows[s]);
  }
  detail::check_finite(grad.b1_grad(), "b1", 0);

  for (std::size_t s = 0; s < w1_rows.size(); ++s) {
    const auto r = w1_rows[s];
    if (detail::all_zero(grad.w1_grad(s))) continue;
    const std::uint64_t t = ++adam.steps_w1[r];
    detail::adam_row(p.w1.row(r), adam.m_w1.row(r), adam.v_w1.row(r), grad.w1_grad(s), t, cfg);
  }
  if (!detail::all_zero(grad.b1_grad())) {
    const std::uint64_t t = ++adam.steps_b1;
    detail::adam_row(p.b1, adam.m_b1, adam.v_b1, grad.b1_grad(), t, cfg);
  }
  std::vector<ClassId> changed;
  changed.reserve(out_rows.size());
  for (std::size_t s = 0; s < out_rows.size(); ++s) {
    const ClassId c = out_rows[s];
    const double gb = grad.bout_grad(s);
    if (detail::all_zero(grad.out_grad(s), gb)) continue;
    const std::uint64_t t = ++adam.steps_out[c];
    detail::adam_row(p.w_out.row(c), adam.m_out.row(c), adam.v_out.row(c), grad.out_grad(s), t,
                     cfg);
    detail::adam_row(std::span<double>(&p.b_out[c], 1), std::span<double>(&adam.m_bout[c], 1),
                     std::span<double>(&adam.v_bout[c], 1), std::span<const double>(&gb, 1), t,
                     cfg);
    changed.push_back(c);
  }
  return changed;
}

/// Single-sample gradient and lazy Adam step. Returns the changed class rows.
inline std::vector<ClassId> backward_update(const SparseVector& x, std::span<const double> e,
                                            std::span<const double> dlogits,
                                            std::span<const ClassId> active, NetworkParams& p,
                                            AdamState& adam, const AdamConfig& cfg) {
  SparseGradient grad(p.shape);
  grad.add_sample(x, e, dlogits, active, p, 1.0);
  return apply_adam(grad, p, adam, cfg);
}

/**
 * Table refresh schedule: first refresh at `initial_period`; after each
 * refresh the period is multiplied by gamma and the next refresh lands
 * ceil(period) iterations later (50, 103, 159, ... for gamma = 1.05).
 */
struct UpdateSchedule {
  double period = 50.0;
  double gamma = 1.05;
  std::uint64_t next_update = 50;

  static UpdateSchedule make(double initial_period, double gamma) {
    if (initial_period < 1.0) throw ConfigError("update period must be >= 1");
    if (gamma < 1.0) throw ConfigError("update gamma must be >= 1");
    return {initial_period, gamma, static_cast<std::uint64_t>(std::ceil(initial_period))};
  }

  bool due(std::uint64_t step) const noexcept { return step == next_update; }

  void advance() {
    period *= gamma;
    next_update += static_cast<std::uint64_t>(std::ceil(period));
  }

  friend bool operator==(const UpdateSchedule&, const UpdateSchedule&) = default;
};

/// Classes whose vectors changed since the last table refresh.
class TouchedSet {
 public:
  explicit TouchedSet(std::size_t num_classes = 0) : flag_(num_classes, 0) {}

  void add(ClassId c) {
    if (!flag_[c]) {
      flag_[c] = 1;
      ids_.push_back(c);
    }
  }
  void add(std::span<const ClassId> cs) {
    for (ClassId c : cs) add(c);
  }
  void clear() {
    for (ClassId c : ids_) flag_[c] = 0;
    ids_.clear();
  }
  std::size_t size() const noexcept { return ids_.size(); }
  std::span<const ClassId> ids() const noexcept { return ids_; }
  bool contains(ClassId c) const { return flag_.at(c) != 0; }

 private:
  std::vector<std::uint8_t> flag_;
  std::vector<ClassId> ids_;
};

struct TableRefresh {
  bool performed = false;
  bool full_rebuild = false;
  std::size_t per_id_updates = 0;
};

/**
 * Called once per iteration after the optimizer step. On a scheduled step
 * re-inserts every touched class's current vector, or rebuilds all tables
 * when more than `rebuild_fraction` of the classes were touched.
 */
inline TableRefresh maybe_update_tables(std::uint64_t step, UpdateSchedule& schedule,
                                        TouchedSet& touched, LshTables& tables,
                                        const NetworkParams& p, double rebuild_fraction = 0.2) {
  TableRefresh r;
  if (!schedule.due(step)) return r;
  r.performed = true;
  const double fraction =
      static_cast<double>(touched.size()) / static_cast<double>(p.shape.num_classes);
  if (fraction > rebuild_fraction) {
    tables.build(p.w_out);
    r.full_rebuild = true;
  } else {
    for (ClassId c : touched.ids()) {
      tables.update(c, p.w_out.row(c));
      ++r.per_id_updates;
    }
  }
  touched.clear();
  schedule.advance();
  return r;
}

}  // namespace lns
