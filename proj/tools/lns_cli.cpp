// lns: train, evaluate, probe and benchmark LSH negative-sampling softmax models.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lns/bench_eval.hpp"
#include "lns/checkpoint.hpp"
#include "lns/config.hpp"
#include "lns/metrics.hpp"
#include "lns/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using lns::RunConfig;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Flag overrides shared by the subcommands. Flags win over the config file.
struct Overrides {
  std::string config_path;
  std::string sampler, hash, dataset, train_path, test_path, corpus_path, out;
  int k = 0, l = 0;
  std::size_t m = 0, bucket_cap = 0, n_samples = 0, top_k = 0, hidden = 0, batch = 0,
              epochs = 0, iterations = 0, workers = 0, eval_every = 0, eval_k = 0,
              max_vocab = 0, window = 0;
  double lr = 0.0, gamma = 0.0, period = 0.0;
  std::uint64_t seed = 0;
  bool no_wall_clock = false;
  bool unit_norm = false;
  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    auto add = [&](const std::string& name, auto& target, const char* help) {
      opts[name.substr(name.find("--"))] = app->add_option(name, target, help);
    };
    add("--dataset", dataset, "dataset kind: xc, skipgram or planted");
    add("--train", train_path, "training file (xc)");
    add("--test", test_path, "test file (xc)");
    add("--corpus", corpus_path, "raw text corpus (skipgram)");
    add("--max-vocab", max_vocab, "skip-gram vocabulary cap");
    add("--window", window, "skip-gram context window");
    opts["--unit-norm"] = app->add_flag("--unit-norm", unit_norm, "scale feature vectors to unit L2 norm");
    add("--sampler", sampler,
        "full, lns_label, lns_embedding, uniform, log_uniform, frequency or top_k");
    add("--n-samples", n_samples, "negatives per input");
    add("--top-k", top_k, "classes kept by the top_k sampler");
    add("--hash", hash, "hash family: simhash or dwta");
    add("--k", k, "hash functions per table (K)");
    add("--l", l, "number of tables (L)");
    add("--m", m, "DWTA bin size");
    add("--bucket-cap", bucket_cap, "bucket capacity, 0 for unbounded");
    add("--hidden", hidden, "hidden layer width");
    add("--lr", lr, "Adam learning rate");
    add("--period", period, "initial table update period (iterations)");
    add("--gamma", gamma, "update period growth factor");
    add("--batch", batch, "batch size");
    add("--epochs", epochs, "epochs");
    add("--iterations", iterations, "stop after this many iterations (0: all epochs)");
    add("--workers", workers, "worker threads");
    add("--eval-every", eval_every, "evaluation cadence in iterations");
    add("--eval-k", eval_k, "k for P@k");
    add("--seed", seed, "master seed");
    add("-o,--out", out, "output directory");
    app->add_flag("--no-wall-clock", no_wall_clock,
                  "write 0 in the wall_clock_s column (byte-stable output)");
  }

  bool given(const std::string& name) const { return opts.at(name)->count() > 0; }

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : lns::load_run_config(config_path);
    auto& t = cfg.trainer;
    auto& d = cfg.dataset;
    if (given("--dataset")) d.kind = lns::parse_dataset_kind(dataset);
    if (given("--train")) d.train_path = train_path;
    if (given("--test")) d.test_path = test_path;
    if (given("--corpus")) d.corpus_path = corpus_path;
    if (given("--max-vocab")) d.max_vocab = max_vocab;
    if (given("--window")) d.window = window;
    if (given("--unit-norm")) d.unit_norm = true;
    if (given("--sampler")) t.sampler = lns::parse_sampler_kind(sampler);
    if (given("--n-samples")) t.n_samples = n_samples;
    if (given("--top-k")) t.top_k = top_k;
    if (given("--hash")) t.hash.family = lns::parse_hash_kind(hash);
    if (given("--k")) t.hash.k = k;
    if (given("--l")) t.hash.l = l;
    if (given("--m")) t.hash.bin_size = m;
    if (given("--bucket-cap")) {
      t.hash.bucket_capacity = bucket_cap == 0 ? lns::LshTables::kUnbounded : bucket_cap;
    }
    if (given("--hidden")) t.hidden_dim = hidden;
    if (given("--lr")) t.adam.learning_rate = lr;
    if (given("--period")) t.update_period = period;
    if (given("--gamma")) t.update_gamma = gamma;
    if (given("--batch")) t.batch_size = batch;
    if (given("--epochs")) t.epochs = epochs;
    if (given("--iterations")) t.max_iterations = iterations;
    if (given("--workers")) t.workers = workers;
    if (given("--eval-every")) t.eval_every = eval_every;
    if (given("--eval-k")) t.eval_k = eval_k;
    if (given("--seed")) t.seed = seed;
    if (given("--out")) cfg.output_dir = out;
    if (no_wall_clock) t.record_wall_clock = false;
    cfg.validate();
    if (t.hash.family == lns::HashKind::dwta && t.hash.bin_size > t.hidden_dim) {
      throw lns::ConfigError("DWTA bin size exceeds the hidden dimension");
    }
    return cfg;
  }
};

void print_row(const lns::MetricsRecord& r) {
  std::printf("iter %6llu  loss %.5f  P@1 %.4f  P@k %.4f  t %.2fs\n",
              static_cast<unsigned long long>(r.iteration), r.train_loss, r.p_at_1,
              r.p_at_k.value_or(0.0), r.wall_clock_s);
  std::fflush(stdout);
}

int cmd_train(const Overrides& ov, bool quiet) {
  const RunConfig cfg = ov.resolve();
  const auto data = lns::load_dataset(cfg.dataset, cfg.trainer.seed);
  fs::create_directories(cfg.output_dir);
  const fs::path dir(cfg.output_dir);
  {
    std::ofstream echo(dir / "config.json");
    echo << lns::to_json(cfg).dump(2) << '\n';
    if (!echo) throw std::runtime_error("cannot write resolved config");
  }
  lns::Trainer trainer(data.train, cfg.trainer);
  lns::MetricsWriter writer((dir / "metrics.csv").string());
  const auto records = trainer.train(data.has_test ? &data.test : nullptr,
                                     [&](const lns::MetricsRecord& r) {
                                       writer.write(r);
                                       if (!quiet) print_row(r);
                                     });
  lns::Checkpoint ck{trainer.params(), trainer.adam(), trainer.schedule(), cfg.trainer.seed,
                     trainer.iteration()};
  lns::save_checkpoint((dir / "checkpoint.bin").string(), ck);
  const auto& st = trainer.sampler_stats();
  std::printf("sampler %s: %llu iterations, final P@1 %.4f, training wall-clock %.2fs\n",
              lns::to_string(cfg.trainer.sampler).c_str(),
              static_cast<unsigned long long>(trainer.iteration()),
              records.empty() ? 0.0 : records.back().p_at_1,
              records.empty() ? 0.0 : records.back().wall_clock_s);
  if (st.queries > 0) {
    std::printf("LSH queries %llu, degenerate %llu, padded sets %llu\n",
                static_cast<unsigned long long>(st.queries),
                static_cast<unsigned long long>(st.degenerate_queries),
                static_cast<unsigned long long>(st.padded_sets));
  }
  std::printf("outputs in %s\n", dir.string().c_str());
  return 0;
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw lns::NotFoundError("checkpoint '" + path + "' does not exist");
}

lns::Checkpoint load_matching_checkpoint(const std::string& path, const lns::LoadedData& data) {
  auto ck = lns::load_checkpoint(path);
  if (ck.params.shape.input_dim != data.train.num_features ||
      ck.params.shape.num_classes != data.train.num_labels) {
    throw lns::ConfigError("checkpoint shape does not match the configured dataset");
  }
  return ck;
}

int cmd_eval(const Overrides& ov, const std::string& checkpoint, std::size_t max_samples) {
  const RunConfig cfg = ov.resolve();
  require_file(checkpoint);
  const auto data = lns::load_dataset(cfg.dataset, cfg.trainer.seed);
  const auto ck = load_matching_checkpoint(checkpoint, data);
  const auto& set = data.has_test ? data.test : data.train;
  const auto r = lns::evaluate(ck.params, set, cfg.trainer.eval_k, max_samples);
  std::printf("%s set: %zu samples, P@1 %.4f, P@%zu %.4f (iteration %llu)\n",
              data.has_test ? "test" : "train", r.evaluated, r.p_at_1, cfg.trainer.eval_k,
              r.p_at_k, static_cast<unsigned long long>(ck.iteration));
  return 0;
}

int cmd_probe(const Overrides& ov, const std::string& checkpoint, const std::string& csv,
              const std::string& probe_sampler) {
  const RunConfig cfg = ov.resolve();
  require_file(checkpoint);
  const auto data = lns::load_dataset(cfg.dataset, cfg.trainer.seed);
  const auto ck = load_matching_checkpoint(checkpoint, data);
  lns::ProbeConfig pc;
  pc.sampler = lns::parse_sampler_kind(probe_sampler);
  pc.n_samples = cfg.trainer.n_samples;
  pc.hash = cfg.trainer.hash;
  pc.draws_per_input = cfg.probe.draws;
  pc.seed = lns::derive_seed(cfg.trainer.seed, "probe");
  const auto& pool = data.has_test ? data.test.samples : data.train.samples;
  const std::size_t n_inputs = std::min(cfg.probe.inputs, pool.size());
  const auto rep = lns::adaptivity_probe(
      ck.params, std::span<const lns::Sample>(pool.data(), n_inputs), pc, ck.iteration);
  const std::string path = csv.empty() ? (fs::path(cfg.output_dir) / "adaptivity.csv").string() : csv;
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  lns::write_adaptivity_csv(rep, path);
  std::printf("iteration %llu, sampler %s, %zu inputs x %zu draws\n",
              static_cast<unsigned long long>(rep.iteration), probe_sampler.c_str(), n_inputs,
              pc.draws_per_input);
  std::printf("TV(empirical, uniform) %.4f\n", rep.tv_empirical_uniform);
  std::printf("TV(empirical, target)  %.4f\n", rep.tv_empirical_target);
  std::printf("TV(uniform, target)    %.4f\n", rep.tv_uniform_target);
  std::printf("report written to %s\n", path.c_str());
  return 0;
}

int cmd_bench_query(const Overrides& ov, std::vector<std::size_t> ns, std::size_t queries,
                    std::size_t dim, bool duplicates) {
  const RunConfig cfg = ov.resolve();
  lns::QueryScalingConfig qc;
  qc.dim = dim;
  qc.hash = cfg.trainer.hash;
  qc.queries = queries;
  qc.duplicate_vectors = duplicates;
  qc.seed = lns::derive_seed(cfg.trainer.seed, "bench-query");
  const auto rows = lns::query_cost_scaling(ns, qc);
  std::printf("%10s %14s %12s %14s %10s %8s\n", "N", "query_us", "hash_evals", "ids_examined",
              "build_s", "ratio");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const double ratio = i == 0 ? 1.0 : r.mean_query_seconds / rows[i - 1].mean_query_seconds;
    std::printf("%10zu %14.3f %12zu %14.1f %10.3f %8.3f\n", r.num_classes,
                r.mean_query_seconds * 1e6, r.hash_evaluations_per_query, r.mean_ids_examined,
                r.build_seconds, ratio);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LSH negative-sampling softmax trainer"};
  app.require_subcommand(1);

  Overrides train_ov, eval_ov, probe_ov, bench_ov;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "train a model, write metrics.csv and checkpoint.bin");
  train_ov.attach(train);
  train->add_flag("-q,--quiet", quiet, "no per-evaluation progress lines");

  std::string eval_ckpt;
  std::size_t eval_max = 0;
  auto* eval = app.add_subcommand("eval", "P@1 and P@k of a checkpoint with full scoring");
  eval_ov.attach(eval);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--max-samples", eval_max, "evaluate at most this many samples (0: all)");

  std::string probe_ckpt, probe_csv, probe_sampler = "lns_label";
  auto* probe = app.add_subcommand("probe", "compare sampler and softmax negative distributions");
  probe_ov.attach(probe);
  probe->add_option("--checkpoint", probe_ckpt, "checkpoint file")->required();
  probe->add_option("--csv", probe_csv, "report path (default: <out>/adaptivity.csv)");
  probe->add_option("--probe-sampler", probe_sampler, "lns_label, lns_embedding or uniform")
      ->capture_default_str();

  std::vector<std::size_t> ns = {1000, 10000, 100000};
  std::size_t queries = 10000, dim = 128;
  bool duplicates = false;
  auto* bench = app.add_subcommand("bench-query", "LSH query cost against the number of classes");
  bench_ov.attach(bench);
  bench->add_option("--ns", ns, "class counts")->capture_default_str();
  bench->add_option("--queries", queries, "queries per class count")->capture_default_str();
  bench->add_option("--dim", dim, "vector dimension")->capture_default_str();
  bench->add_flag("--duplicates", duplicates, "identical class vectors (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_ov, quiet);
    if (*eval) return cmd_eval(eval_ov, eval_ckpt, eval_max);
    if (*probe) return cmd_probe(probe_ov, probe_ckpt, probe_csv, probe_sampler);
    if (*bench) return cmd_bench_query(bench_ov, ns, queries, dim, duplicates);
  } catch (const lns::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const lns::NotFoundError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid argument: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
