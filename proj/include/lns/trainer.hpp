#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "lns/data_io.hpp"
#include "lns/error.hpp"
#include "lns/lsh_hashes.hpp"
#include "lns/lsh_tables.hpp"
#include "lns/metrics.hpp"
#include "lns/network.hpp"
#include "lns/random.hpp"
#include "lns/sampler.hpp"

namespace lns {

struct HashConfig {
  HashKind family = HashKind::simhash;
  int k = 6;
  int l = 50;
  std::size_t bin_size = 8;
  std::size_t bucket_capacity = 128;  // LshTables::kUnbounded for no cap
};

struct TrainerConfig {
  SamplerKind sampler = SamplerKind::lns_label;
  std::size_t n_samples = 100;  // negatives per input
  std::size_t top_k = 100;
  bool logit_correction = false;
  HashConfig hash;
  double update_period = 50.0;
  double update_gamma = 1.05;
  double rebuild_fraction = 0.2;
  AdamConfig adam;
  std::size_t hidden_dim = 128;
  std::size_t batch_size = 256;
  std::size_t epochs = 1;
  std::size_t max_iterations = 0;  // 0: run all epochs
  std::size_t workers = 1;
  std::size_t eval_every = 100;
  std::size_t eval_k = 5;
  std::size_t eval_max_samples = 0;
  bool record_wall_clock = true;
  std::uint64_t seed = 42;

  void validate() const {
    if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
    if (top_k < 1) throw ConfigError("top_k must be >= 1");
    if (hash.k < 1 || hash.l < 1) throw ConfigError("hash K and L must be >= 1");
    if (hash.bucket_capacity < 1) throw ConfigError("bucket capacity must be >= 1");
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (eval_k < 1) throw ConfigError("eval k must be >= 1");
    if (!(adam.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
      throw ConfigError("Adam betas must be in [0, 1)");
    }
    if (!(adam.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
    if (!(rebuild_fraction >= 0.0 && rebuild_fraction <= 1.0)) {
      throw ConfigError("rebuild_fraction must be in [0, 1]");
    }
    if (logit_correction && sampler != SamplerKind::uniform &&
        sampler != SamplerKind::log_uniform && sampler != SamplerKind::frequency) {
      throw ConfigError("logit correction needs a sampler with a closed-form proposal");
    }
    UpdateSchedule::make(update_period, update_gamma);
  }
};

struct IterationStats {
  std::uint64_t iteration = 0;
  double mean_loss = 0.0;
  std::size_t changed_classes = 0;
  std::size_t active_ids = 0;
  TableRefresh refresh;
};

/**
 * Runs the LNS training loop: embedding forward pass, negative sampling,
 * active-set softmax, sparse backward pass, lazy Adam, scheduled table
 * refresh. Each sample's sampler randomness comes from a stream keyed by
 * (seed, iteration, position in batch), so results do not depend on the
 * worker count.
 */
class Trainer {
 public:
  Trainer(const XcDataset& train, TrainerConfig cfg)
      : Trainer(train, cfg, initial_params(train, cfg), std::nullopt) {}

  /// Resumes from saved state (e.g. a checkpoint).
  Trainer(const XcDataset& train, TrainerConfig cfg, NetworkParams params,
          std::optional<std::pair<AdamState, UpdateSchedule>> state)
      : train_(train),
        cfg_(cfg),
        params_(std::move(params)),
        adam_(state ? state->first : AdamState::zeros(params_.shape)),
        schedule_(state ? state->second : UpdateSchedule::make(cfg.update_period, cfg.update_gamma)),
        touched_(params_.shape.num_classes),
        grad_(params_.shape) {
    cfg_.validate();
    if (params_.shape.input_dim != train.num_features ||
        params_.shape.num_classes != train.num_labels) {
      throw ConfigError("network shape does not match the dataset");
    }
    const std::size_t n = params_.shape.num_classes;
    const bool sampled = cfg_.sampler != SamplerKind::full && cfg_.sampler != SamplerKind::top_k;
    if (sampled && cfg_.n_samples + 1 >= n) {
      throw ConfigError("n_samples must be smaller than num_classes - 1");
    }
    if (cfg_.sampler == SamplerKind::top_k && cfg_.top_k > n) {
      throw ConfigError("top_k exceeds num_classes");
    }
    if (cfg_.sampler == SamplerKind::frequency || cfg_.sampler == SamplerKind::log_uniform) {
      frequencies_ = class_frequencies(train);
      class_of_rank_ = classes_by_frequency(frequencies_);
      rank_of_.resize(n);
      for (std::size_t r = 0; r < n; ++r) rank_of_[class_of_rank_[r]] = r;
    }
    if (uses_tables(cfg_.sampler)) {
      auto family = HashFamily::make(cfg_.hash.family, params_.shape.hidden_dim, cfg_.hash.k,
                                     cfg_.hash.l, cfg_.hash.bin_size,
                                     derive_seed(cfg_.seed, "hash"));
      tables_ = std::make_unique<LshTables>(std::move(family), cfg_.hash.bucket_capacity,
                                            derive_seed(cfg_.seed, "tables"));
      tables_->build(params_.w_out);
    }
  }

  static NetworkParams initial_params(const XcDataset& train, const TrainerConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, "init"));
    return NetworkParams::init({train.num_features, cfg.hidden_dim, train.num_labels}, rng);
  }

  const NetworkParams& params() const noexcept { return params_; }
  const AdamState& adam() const noexcept { return adam_; }
  const UpdateSchedule& schedule() const noexcept { return schedule_; }
  const TrainerConfig& config() const noexcept { return cfg_; }
  const LshTables* tables() const noexcept { return tables_.get(); }
  const SamplerStats& sampler_stats() const noexcept { return stats_; }
  std::uint64_t iteration() const noexcept { return adam_.global_step; }

  /// Active set for one sample (exposed for probes and tests).
  ActiveSet choose_active(const Sample& s, std::span<const double> e, Rng& rng,
                          SamplerStats& stats) const {
    const std::size_t n = params_.shape.num_classes;
    switch (cfg_.sampler) {
      case SamplerKind::full:
        return all_classes(n, s.y);
      case SamplerKind::top_k:
        return top_k_candidates(full_logits(e, params_), cfg_.top_k, s.y);
      case SamplerKind::lns_label:
        return finalize_active_set(sample_lns_label(s.y, *tables_, params_.w_out, rng, &stats),
                                   s.y, cfg_.n_samples, n, rng, &stats);
      case SamplerKind::lns_embedding:
        return finalize_active_set(sample_lns_embedding(e, s.y, *tables_, &stats), s.y,
                                   cfg_.n_samples, n, rng, &stats);
      case SamplerKind::uniform:
        return make_active_set(s.y, sample_uniform(cfg_.n_samples, n, s.y, rng));
      case SamplerKind::log_uniform:
        return make_active_set(s.y,
                               sample_log_uniform(cfg_.n_samples, n, s.y, class_of_rank_, rng));
      case SamplerKind::frequency:
        return make_active_set(s.y, sample_frequency(cfg_.n_samples, frequencies_, s.y, rng));
    }
    throw ConfigError("unhandled sampler");
  }

  /// One iteration over the given sample indices.
  IterationStats step(std::span<const std::size_t> batch) {
    const std::uint64_t iteration = adam_.global_step + 1;
    std::vector<Work> work(batch.size());
    const std::uint64_t stream = derive_seed(cfg_.seed, "sampler", iteration);
    auto run = [&](std::size_t begin, std::size_t stride) {
      for (std::size_t i = begin; i < batch.size(); i += stride) {
        compute(train_.samples[batch[i]], Rng(derive_seed(stream, "sample", i)), work[i]);
      }
    };
    const std::size_t workers = std::min(cfg_.workers, std::max<std::size_t>(batch.size(), 1));
    if (workers <= 1) {
      run(0, 1);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w, workers);
    }

    IterationStats out;
    out.iteration = iteration;
    grad_.clear();
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Work& w = work[i];
      grad_.add_sample(train_.samples[batch[i]].x, w.e, w.loss.dlogits, w.active.ids, params_,
                       scale);
      out.mean_loss += w.loss.loss * scale;
      out.active_ids += w.active.size();
      stats_ += w.stats;
    }
    const auto changed = apply_adam(grad_, params_, adam_, cfg_.adam);
    out.changed_classes = changed.size();
    if (tables_) {
      touched_.add(changed);
      out.refresh = maybe_update_tables(iteration, schedule_, touched_, *tables_, params_,
                                        cfg_.rebuild_fraction);
    } else if (schedule_.due(iteration)) {
      schedule_.advance();
    }
    return out;
  }

  using MetricsSink = std::function<void(const MetricsRecord&)>;

  /**
   * Epochs x batches until `max_iterations` (if set). Records metrics every
   * `eval_every` iterations and after the last one; the wall clock excludes
   * evaluation. `eval_set` defaults to the training set.
   */
  std::vector<MetricsRecord> train(const XcDataset* eval_set = nullptr,
                                   const MetricsSink& sink = {}) {
    const XcDataset& eval_data = eval_set ? *eval_set : train_;
    std::vector<MetricsRecord> records;
    double train_seconds = 0.0;
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    auto record = [&] {
      MetricsRecord r;
      r.iteration = adam_.global_step;
      r.wall_clock_s = cfg_.record_wall_clock ? train_seconds : 0.0;
      r.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
      const auto ev = evaluate(params_, eval_data, cfg_.eval_k, cfg_.eval_max_samples);
      r.p_at_1 = ev.p_at_1;
      r.p_at_k = ev.p_at_k;
      records.push_back(r);
      if (sink) sink(r);
      loss_sum = 0.0;
      loss_count = 0;
    };
    bool done = cfg_.max_iterations != 0 && adam_.global_step >= cfg_.max_iterations;
    for (std::size_t epoch = 0; epoch < cfg_.epochs && !done; ++epoch) {
      for (const auto& batch : epoch_batches(train_.size(), cfg_.batch_size, cfg_.seed, epoch)) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto stats = step(batch);
        train_seconds +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        loss_sum += stats.mean_loss;
        ++loss_count;
        if (cfg_.eval_every != 0 && adam_.global_step % cfg_.eval_every == 0) record();
        if (cfg_.max_iterations != 0 && adam_.global_step >= cfg_.max_iterations) {
          done = true;
          break;
        }
      }
    }
    if (loss_count > 0) record();
    return records;
  }

 private:
  struct Work {
    std::vector<double> e;
    ActiveSet active;
    LossAndGradient loss;
    SamplerStats stats;
  };

  // Log of the proposal probability, subtracted from logits when correcting.
  double log_proposal(ClassId c) const {
    const std::size_t n = params_.shape.num_classes;
    switch (cfg_.sampler) {
      case SamplerKind::uniform: return -std::log(static_cast<double>(n));
      case SamplerKind::log_uniform: return std::log(log_uniform_mass(rank_of_[c], n));
      case SamplerKind::frequency: {
        const double p = frequencies_.probability(c);
        return p > 0.0 ? std::log(p) : 0.0;
      }
      default: return 0.0;
    }
  }

  void compute(const Sample& s, Rng rng, Work& w) const {
    w.e = forward_embedding(s.x, params_);
    w.active = choose_active(s, w.e, rng, w.stats);
    auto logits = forward_output_active(w.e, w.active.ids, params_);
    if (cfg_.logit_correction) {
      for (std::size_t a = 0; a < logits.size(); ++a) logits[a] -= log_proposal(w.active.ids[a]);
    }
    w.loss = softmax_ce_active(logits, w.active.true_mask);
  }

  const XcDataset& train_;
  TrainerConfig cfg_;
  NetworkParams params_;
  AdamState adam_;
  UpdateSchedule schedule_;
  TouchedSet touched_;
  SparseGradient grad_;
  std::unique_ptr<LshTables> tables_;
  FrequencyTable frequencies_;
  std::vector<ClassId> class_of_rank_;
  std::vector<std::size_t> rank_of_;
  SamplerStats stats_;
};

}  // namespace lns
