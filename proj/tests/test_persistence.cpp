#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "lns/checkpoint.hpp"
#include "lns/config.hpp"
#include "lns/metrics.hpp"
#include "test_support.hpp"

using namespace lns;
using lns::testing::read_file;
using lns::testing::TempDir;

namespace {

Checkpoint trained_checkpoint() {
  PlantedClusterConfig pc;
  pc.num_classes = 20;
  pc.num_clusters = 4;
  pc.noise_features = 30;
  pc.train_samples = 300;
  pc.test_samples = 0;
  const auto data = make_planted_clusters(pc, 3);
  TrainerConfig cfg;
  cfg.n_samples = 5;
  cfg.hidden_dim = 12;
  cfg.hash.k = 3;
  cfg.hash.l = 4;
  cfg.batch_size = 32;
  cfg.update_period = 3;
  cfg.eval_every = 0;
  cfg.eval_max_samples = 10;
  Trainer t(data.train, cfg);
  t.train();
  return {t.params(), t.adam(), t.schedule(), cfg.seed, t.iteration()};
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary) << bytes;
}

}  // namespace

TEST(Metrics, ZeroRecordsIsHeaderOnly) {
  TempDir dir("m0");
  const auto path = dir.file("metrics.csv");
  emit_metrics({}, path);
  EXPECT_EQ(read_file(path), std::string(kMetricsHeader) + "\n");
  EXPECT_TRUE(read_metrics(path).empty());
}

TEST(Metrics, RoundTrip) {
  TempDir dir("m1");
  const auto path = dir.file("metrics.csv");
  std::vector<MetricsRecord> records{{10, 0.125, 2.5, 0.3, 0.2},
                                     {20, 0.25, 1.0 / 3.0, 0.45, std::nullopt},
                                     {30, 1e-7, 0.1, 1.0, 0.875}};
  emit_metrics(records, path);
  EXPECT_EQ(read_metrics(path), records);
}

TEST(Metrics, AppendKeepsSingleHeader) {
  TempDir dir("m2");
  const auto path = dir.file("metrics.csv");
  {
    MetricsWriter w(path, true);
    w.write({1, 0.0, 1.0, 0.5, 0.5});
  }
  {
    MetricsWriter w(path, true);
    w.write({2, 0.0, 0.5, 0.75, 0.25});
  }
  EXPECT_EQ(read_metrics(path).size(), 2u);
  const auto text = read_file(path);
  EXPECT_EQ(text.find(kMetricsHeader), 0u);
  EXPECT_EQ(text.find(kMetricsHeader, 1), std::string::npos);
}

TEST(Metrics, SeparateRunsDoNotInterleave) {
  TempDir dir("m3");
  MetricsWriter a(dir.file("a.csv")), b(dir.file("b.csv"));
  for (std::uint64_t i = 1; i <= 5; ++i) {
    a.write({i, 0.0, 1.0, 0.1, 0.1});
    b.write({i * 100, 0.0, 2.0, 0.2, 0.2});
  }
  for (const auto& r : read_metrics(dir.file("a.csv"))) EXPECT_LT(r.iteration, 100u);
  for (const auto& r : read_metrics(dir.file("b.csv"))) EXPECT_GE(r.iteration, 100u);
}

TEST(Metrics, Errors) {
  TempDir dir("m4");
  EXPECT_THROW(MetricsWriter(dir.file("missing/dir/m.csv")), std::runtime_error);
  write_bytes(dir.file("bad.csv"), "iteration,loss\n1,2\n");
  EXPECT_THROW(read_metrics(dir.file("bad.csv")), ParseError);
  write_bytes(dir.file("short.csv"), std::string(kMetricsHeader) + "\n1,2,3\n");
  EXPECT_THROW(read_metrics(dir.file("short.csv")), ParseError);
}

TEST(Checkpoint, RoundTrip) {
  TempDir dir("ck");
  const auto ck = trained_checkpoint();
  ASSERT_GT(ck.iteration, 0u);
  const auto path = dir.file("model.bin");
  save_checkpoint(path, ck);
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.params, ck.params);
  EXPECT_EQ(back.adam, ck.adam);
  EXPECT_EQ(back.schedule, ck.schedule);
  EXPECT_EQ(back.master_seed, ck.master_seed);
  EXPECT_EQ(back.iteration, ck.iteration);
  EXPECT_EQ(std::filesystem::file_size(path),
            8 + 4 + 8 * 8 + detail::payload_bytes(ck.params.shape));
}

TEST(Checkpoint, CorruptFilesRejected) {
  TempDir dir("ck_bad");
  const auto ck = trained_checkpoint();
  const auto good = dir.file("good.bin");
  save_checkpoint(good, ck);
  const std::string bytes = read_file(good);

  EXPECT_THROW(load_checkpoint(dir.file("absent.bin")), NotFoundError);

  write_bytes(dir.file("magic.bin"), "NOTACKPT" + bytes.substr(8));
  EXPECT_THROW(load_checkpoint(dir.file("magic.bin")), std::runtime_error);

  std::string version = bytes;
  version[8] = 9;
  write_bytes(dir.file("version.bin"), version);
  EXPECT_THROW(load_checkpoint(dir.file("version.bin")), std::runtime_error);

  write_bytes(dir.file("short.bin"), bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(load_checkpoint(dir.file("short.bin")), std::runtime_error);

  write_bytes(dir.file("long.bin"), bytes + "xx");
  EXPECT_THROW(load_checkpoint(dir.file("long.bin")), std::runtime_error);

  std::string huge = bytes;
  for (int i = 0; i < 8; ++i) huge[12 + i] = static_cast<char>(0xff);
  write_bytes(dir.file("huge.bin"), huge);
  EXPECT_THROW(load_checkpoint(dir.file("huge.bin")), std::runtime_error);

  write_bytes(dir.file("tiny.bin"), "LN");
  EXPECT_THROW(load_checkpoint(dir.file("tiny.bin")), std::runtime_error);
}

TEST(Checkpoint, ResumeContinuesIdentically) {
  // Training 2x iterations straight equals training x, saving, loading and training x more.
  PlantedClusterConfig pc;
  pc.num_classes = 20;
  pc.num_clusters = 4;
  pc.noise_features = 30;
  pc.train_samples = 256;
  pc.test_samples = 0;
  const auto data = make_planted_clusters(pc, 4);
  TrainerConfig cfg;
  cfg.n_samples = 5;
  cfg.hidden_dim = 8;
  cfg.hash.k = 3;
  cfg.hash.l = 4;
  cfg.batch_size = 32;
  cfg.update_period = 3;
  const auto batches = epoch_batches(data.train.size(), cfg.batch_size, cfg.seed, 0);

  Trainer straight(data.train, cfg);
  for (const auto& b : batches) straight.step(b);

  TempDir dir("resume");
  Trainer first(data.train, cfg);
  for (std::size_t i = 0; i < 4; ++i) first.step(batches[i]);
  save_checkpoint(dir.file("c.bin"), {first.params(), first.adam(), first.schedule(), cfg.seed,
                                      first.iteration()});
  auto ck = load_checkpoint(dir.file("c.bin"));
  Trainer second(data.train, cfg, ck.params, std::make_pair(ck.adam, ck.schedule));
  for (std::size_t i = 4; i < batches.size(); ++i) second.step(batches[i]);
  // tables are rebuilt at load, so LNS candidates may differ; the full sampler must match exactly
  cfg.sampler = SamplerKind::full;
  Trainer full_straight(data.train, cfg);
  for (const auto& b : batches) full_straight.step(b);
  Trainer full_first(data.train, cfg);
  for (std::size_t i = 0; i < 4; ++i) full_first.step(batches[i]);
  save_checkpoint(dir.file("f.bin"), {full_first.params(), full_first.adam(), full_first.schedule(),
                                      cfg.seed, full_first.iteration()});
  ck = load_checkpoint(dir.file("f.bin"));
  Trainer full_second(data.train, cfg, ck.params, std::make_pair(ck.adam, ck.schedule));
  for (std::size_t i = 4; i < batches.size(); ++i) full_second.step(batches[i]);
  EXPECT_EQ(full_second.params(), full_straight.params());
  EXPECT_EQ(second.iteration(), straight.iteration());
  EXPECT_EQ(second.schedule(), straight.schedule());
}

TEST(Config, JsonRoundTrip) {
  RunConfig cfg;
  cfg.dataset.kind = DatasetKind::xc;
  cfg.dataset.train_path = "train.txt";
  cfg.dataset.unit_norm = true;
  cfg.trainer.sampler = SamplerKind::lns_embedding;
  cfg.trainer.hash.family = HashKind::dwta;
  cfg.trainer.hash.k = 4;
  cfg.trainer.hash.bucket_capacity = LshTables::kUnbounded;
  cfg.trainer.adam.learning_rate = 3e-3;
  cfg.trainer.update_gamma = 1.1;
  cfg.trainer.record_wall_clock = false;
  cfg.probe.draws = 77;
  cfg.output_dir = "out/x";
  RunConfig back;
  apply_json(back, to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_EQ(back.trainer.hash.bucket_capacity, LshTables::kUnbounded);
  EXPECT_EQ(back.trainer.hash.family, HashKind::dwta);
  EXPECT_TRUE(back.dataset.unit_norm);
}

TEST(Config, PartialOverridesKeepDefaults) {
  RunConfig cfg;
  apply_json(cfg, nlohmann::json::parse(R"({"hash": {"K": 9}, "training": {"seed": 5}})"));
  EXPECT_EQ(cfg.trainer.hash.k, 9);
  EXPECT_EQ(cfg.trainer.hash.l, RunConfig{}.trainer.hash.l);
  EXPECT_EQ(cfg.trainer.seed, 5u);
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  RunConfig cfg;
  EXPECT_THROW(apply_json(cfg, nlohmann::json::parse(R"({"hsah": {}})")), ConfigError);
  EXPECT_THROW(apply_json(cfg, nlohmann::json::parse(R"({"hash": {"k": 3}})")), ConfigError);
  EXPECT_THROW(apply_json(cfg, nlohmann::json::parse(R"({"hash": {"K": "three"}})")), ConfigError);
  EXPECT_THROW(apply_json(cfg, nlohmann::json::parse(R"({"sampler": {"kind": "nce"}})")),
               ConfigError);
  EXPECT_THROW(apply_json(cfg, nlohmann::json::parse(R"({"dataset": 3})")), ConfigError);
  try {
    apply_json(cfg, nlohmann::json::parse(R"({"dataset": {"planted": {"classes": 3}}})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("dataset.planted.classes"), std::string::npos);
  }
}

TEST(Config, LoadErrorsAndValidation) {
  TempDir dir("cfg");
  EXPECT_THROW(load_run_config(dir.file("none.json")), ConfigError);
  EXPECT_THROW(load_run_config(dir.write("bad.json", "{ not json")), ConfigError);
  RunConfig cfg;
  cfg.dataset.kind = DatasetKind::xc;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.dataset.kind = DatasetKind::planted;
  cfg.trainer.hash.k = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Config, ShippedConfigsLoad) {
  std::size_t seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(LNS_SOURCE_DIR "/configs")) {
    if (entry.path().extension() != ".json") continue;
    ++seen;
    SCOPED_TRACE(entry.path().string());
    const auto cfg = load_run_config(entry.path().string());
    EXPECT_NO_THROW(cfg.validate());
  }
  EXPECT_GT(seen, 0u);
}
