#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>
#include <vector>

#include "lns/bench_eval.hpp"
#include "lns/lsh_tables.hpp"

using namespace lns;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.data()) x = rng.normal();
  return m;
}

std::string dump_of(const LshTables& t) {
  std::ostringstream out;
  t.dump(out);
  return out.str();
}

LshTables simhash_tables(std::size_t d, int k, int l, std::uint64_t seed,
                         std::size_t cap = LshTables::kUnbounded) {
  return LshTables(SimHashFamily(d, k, l, seed), cap, seed);
}

// Unit vector at cosine c to e0, otherwise random in the orthogonal complement.
std::vector<double> at_cosine(double c, std::size_t d, Rng& rng) {
  std::vector<double> v(d, 0.0);
  double n2 = 0.0;
  for (std::size_t i = 1; i < d; ++i) {
    v[i] = rng.normal();
    n2 += v[i] * v[i];
  }
  const double s = std::sqrt(1.0 - c * c) / std::sqrt(n2);
  for (std::size_t i = 1; i < d; ++i) v[i] *= s;
  v[0] = c;
  return v;
}

}  // namespace

TEST(LshTables, EmptyBuildReturnsNothing) {
  auto t = simhash_tables(8, 3, 4, 1);
  t.build(Matrix(0, 8));
  EXPECT_EQ(t.size(), 0u);
  const auto r = t.query(std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  EXPECT_TRUE(r.ids.empty());
  EXPECT_EQ(r.hash_evaluations, 12u);
  EXPECT_EQ(dump_of(t), "");
}

TEST(LshTables, SingleItemFindsItself) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto t = simhash_tables(16, 6, 10, static_cast<std::uint64_t>(trial));
    const Matrix m = random_matrix(1, 16, rng);
    t.build(m);
    EXPECT_EQ(t.query(m.row(0)).ids, std::vector<ClassId>{0});
  }
}

TEST(LshTables, ConservationWithoutCap) {
  Rng rng(3);
  auto t = simhash_tables(32, 4, 7, 9);
  t.build(random_matrix(100, 32, rng));
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(t.total_entries(i), 100u);
  EXPECT_TRUE(t.occupancy_consistent());
}

TEST(LshTables, DumpFormat) {
  SimHashFamily f(2, 1, 2, std::vector<double>{1, 0, 0, 1});
  LshTables t(f);
  t.insert(4, std::vector<double>{1.0, -1.0});  // codes 1, 0
  t.insert(2, std::vector<double>{1.0, 1.0});   // codes 1, 1
  EXPECT_EQ(dump_of(t), "0 1 2 4\n1 0 4\n1 1 2\n");
}

TEST(LshTables, RemovedIdNeverReturned) {
  Rng rng(4);
  auto t = simhash_tables(16, 4, 8, 5);
  const Matrix m = random_matrix(20, 16, rng);
  t.build(m);
  t.remove(7);
  EXPECT_FALSE(t.contains(7));
  for (std::size_t i = 0; i < 20; ++i) {
    const auto ids = t.query(m.row(i)).ids;
    EXPECT_FALSE(std::binary_search(ids.begin(), ids.end(), ClassId{7}));
  }
  EXPECT_THROW(t.remove(7), NotFoundError);
  EXPECT_THROW(t.remove(999), NotFoundError);
  EXPECT_THROW(t.update(7, m.row(7)), NotFoundError);
  EXPECT_TRUE(t.occupancy_consistent());
}

TEST(LshTables, RemoveReinsertRestoresBuckets) {
  Rng rng(5);
  auto t = simhash_tables(16, 3, 6, 6);
  const Matrix m = random_matrix(40, 16, rng);
  t.build(m);
  const std::string before = dump_of(t);
  for (ClassId id : {0u, 13u, 39u}) {
    t.remove(id);
    EXPECT_NE(dump_of(t), before);
    t.insert(id, m.row(id));
    EXPECT_EQ(dump_of(t), before);
  }
}

TEST(LshTables, UpdateSemantics) {
  Rng rng(6);
  auto t = simhash_tables(16, 5, 9, 7);
  const Matrix m = random_matrix(30, 16, rng);
  t.build(m);
  const std::string before = dump_of(t);
  t.update(3, m.row(3));
  EXPECT_EQ(dump_of(t), before);

  t.update(4, m.row(11));
  for (std::size_t table = 0; table < 9; ++table) {
    EXPECT_EQ(t.recorded_code(4, table), t.recorded_code(11, table));
  }
}

TEST(LshTables, UpdateChargesTwiceInsertCost) {
  Rng rng(7);
  auto t = simhash_tables(16, 6, 11, 8);
  const Matrix m = random_matrix(10, 16, rng);
  t.build(m);
  const auto charged = t.charged_operations();
  const auto evals = t.hash_evaluations();
  t.update(2, m.row(5));
  EXPECT_EQ(t.charged_operations() - charged, 2u * 6u * 11u);
  EXPECT_EQ(t.hash_evaluations() - evals, 6u * 11u);
}

TEST(LshTables, UpdatesMatchFreshBuild) {
  Rng rng(8);
  Matrix m = random_matrix(50, 12, rng);
  auto t = simhash_tables(12, 4, 10, 9);
  t.build(m);
  for (int round = 0; round < 30; ++round) {
    const auto id = static_cast<ClassId>(rng.below(50));
    for (double& x : m.row(id)) x = rng.normal();
    t.update(id, m.row(id));
  }
  auto fresh = simhash_tables(12, 4, 10, 9);
  fresh.build(m);
  EXPECT_EQ(dump_of(t), dump_of(fresh));
}

TEST(LshTables, DuplicateIdsRejected) {
  Rng rng(9);
  auto t = simhash_tables(8, 2, 2, 1);
  const Matrix m = random_matrix(3, 8, rng);
  t.insert(1, m.row(1));
  EXPECT_THROW(t.insert(1, m.row(2)), ArgumentError);
  const std::vector<ClassId> ids{0, 2, 0};
  EXPECT_THROW(t.build(ids, [&](ClassId id) { return m.row(id); }), ArgumentError);
}

TEST(LshTables, OccupancyConsistentUnderRandomInterleavings) {
  for (std::size_t cap : {std::size_t{2}, std::size_t{5}, LshTables::kUnbounded}) {
    Rng rng(10 + cap % 7);
    auto t = simhash_tables(6, 2, 5, 11, cap);
    Matrix m = random_matrix(60, 6, rng);
    std::set<ClassId> stored;
    for (int op = 0; op < 3000; ++op) {
      const auto id = static_cast<ClassId>(rng.below(60));
      const auto kind = rng.below(3);
      if (!stored.count(id)) {
        t.insert(id, m.row(id));
        stored.insert(id);
      } else if (kind == 0) {
        t.remove(id);
        stored.erase(id);
      } else {
        for (double& x : m.row(id)) x = rng.normal();
        t.update(id, m.row(id));
      }
      if (op % 100 == 0) {
        ASSERT_TRUE(t.occupancy_consistent());
      }
    }
    EXPECT_TRUE(t.occupancy_consistent());
    EXPECT_EQ(t.size(), stored.size());
    std::ostringstream out;
    t.dump(out);
    std::istringstream in(out.str());
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::size_t table, code, n = 0;
      ls >> table >> code;
      ClassId id;
      std::set<ClassId> seen;
      while (ls >> id) {
        ++n;
        EXPECT_TRUE(seen.insert(id).second);
        EXPECT_TRUE(stored.count(id));
      }
      EXPECT_LE(n, cap);
    }
  }
}

TEST(LshTables, ReservoirRetentionIsUniform) {
  // 20 identical vectors into buckets of capacity 4: each id kept w.p. 1/5
  const std::vector<double> v{1.0, 2.0, -0.5};
  std::vector<int> kept(20, 0);
  const int runs = 4000;
  for (int run = 0; run < runs; ++run) {
    LshTables t(SimHashFamily(3, 2, 1, 1), 4, static_cast<std::uint64_t>(run));
    for (ClassId id = 0; id < 20; ++id) t.insert(id, v);
    const auto ids = t.query(v).ids;
    ASSERT_EQ(ids.size(), 4u);
    for (ClassId id : ids) ++kept[id];
  }
  for (int c : kept) EXPECT_NEAR(static_cast<double>(c) / runs, 0.2, 0.03);
}

TEST(LshTables, QueryCostBounded) {
  Rng rng(12);
  const std::size_t cap = 3;
  auto t = simhash_tables(8, 2, 6, 13, cap);
  t.build(random_matrix(500, 8, rng));
  for (int q = 0; q < 50; ++q) {
    auto v = random_matrix(1, 8, rng);
    const auto r = t.query(v.row(0));
    EXPECT_EQ(r.hash_evaluations, 12u);
    EXPECT_LE(r.ids_examined, 6 * cap);
    EXPECT_TRUE(std::is_sorted(r.ids.begin(), r.ids.end()));
    EXPECT_EQ(std::adjacent_find(r.ids.begin(), r.ids.end()), r.ids.end());
  }
}

TEST(LshTables, RetrievalMatchesClosedForm) {
  // K=4, L=16 over 200 seeded builds; 20 items at each of cosine 0.95 and 0.0
  const std::size_t d = 32;
  const int builds = 200, per_level = 20;
  Rng rng(14);
  std::vector<double> q(d, 0.0);
  q[0] = 1.0;
  Matrix items(2 * per_level, d);
  for (int i = 0; i < 2 * per_level; ++i) {
    const auto v = at_cosine(i < per_level ? 0.95 : 0.0, d, rng);
    std::copy(v.begin(), v.end(), items.row(static_cast<std::size_t>(i)).begin());
  }
  double hits_close = 0, hits_far = 0;
  for (int b = 0; b < builds; ++b) {
    auto t = simhash_tables(d, 4, 16, derive_seed(99, "build", static_cast<std::uint64_t>(b)));
    t.build(items);
    for (ClassId id : t.query(q).ids) (id < per_level ? hits_close : hits_far) += 1;
  }
  const double n = builds * per_level;
  const double alpha_close = 1.0 - std::acos(0.95) / std::numbers::pi;
  EXPECT_NEAR(hits_close / n, retrieval_prob(alpha_close, 4, 16), 0.05);
  EXPECT_NEAR(hits_far / n, retrieval_prob(0.5, 4, 16), 0.05);
}

TEST(LshTables, RetrievalMonotoneInSimilarity) {
  const std::size_t d = 24;
  Rng rng(15);
  std::vector<double> q(d, 0.0);
  q[0] = 1.0;
  const int n_items = 12;
  Matrix items(n_items, d);
  std::vector<double> cosines;
  for (int i = 0; i < n_items; ++i) {
    const double c = -0.6 + 1.5 * i / (n_items - 1);
    cosines.push_back(c);
    const auto v = at_cosine(c, d, rng);
    std::copy(v.begin(), v.end(), items.row(static_cast<std::size_t>(i)).begin());
  }
  std::vector<double> freq(n_items, 0.0);
  for (int b = 0; b < 200; ++b) {
    auto t = simhash_tables(d, 3, 6, derive_seed(5, "monotone", static_cast<std::uint64_t>(b)));
    t.build(items);
    for (ClassId id : t.query(q).ids) freq[id] += 1.0;
  }
  EXPECT_GE(spearman(cosines, freq), 0.9);
}

TEST(LshTables, DwtaWithSparseBucketStore) {
  // 8^6 codes per table exceeds the direct-address limit
  Rng rng(16);
  LshTables t(DwtaFamily(64, 6, 12, 8, 3), 128, 3);
  Matrix m(80, 64);
  for (double& x : m.data()) x = rng.uniform() < 0.3 ? rng.uniform() : 0.0;
  for (std::size_t r = 0; r < 80; ++r) m(r, r % 64) = 2.0;
  t.build(m);
  EXPECT_TRUE(t.occupancy_consistent());
  for (std::size_t r = 0; r < 80; ++r) {
    const auto ids = t.query(m.row(r)).ids;
    EXPECT_TRUE(std::binary_search(ids.begin(), ids.end(), static_cast<ClassId>(r)));
  }
  t.remove(5);
  t.update(6, m.row(7));
  EXPECT_TRUE(t.occupancy_consistent());
}
