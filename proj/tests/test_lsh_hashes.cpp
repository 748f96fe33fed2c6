#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "lns/lsh_hashes.hpp"
#include "lns/random.hpp"
#include "test_support.hpp"

using namespace lns;
using lns::testing::brute_force_wta;

namespace {

std::vector<double> random_vector(std::size_t d, Rng& rng) {
  std::vector<double> v(d);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST(SimHash, PositiveDotSetsBit) {
  SimHashFamily f(2, 1, 1, std::vector<double>{1.0, 0.0});
  const std::vector<double> v{3.0, -1.0};
  EXPECT_EQ(f.codes(v), std::vector<BucketCode>{1});
  const std::vector<double> w{-3.0, 1.0};
  EXPECT_EQ(f.codes(w), std::vector<BucketCode>{0});
}

TEST(SimHash, BitLayoutFollowsPlaneIndex) {
  // table 0 uses planes 0,1; table 1 uses planes 2,3
  SimHashFamily f(2, 2, 2, std::vector<double>{1, 0, 0, 1, -1, 0, 1, 1});
  const std::vector<double> v{2.0, -1.0};
  // planes: +x (dot 2 > 0), +y (-1), -x (-2), x+y (1 > 0)
  EXPECT_EQ(f.codes(v), (std::vector<BucketCode>{0b01, 0b10}));
}

TEST(SimHash, NegationFlipsEveryBit) {
  Rng rng(3);
  SimHashFamily f(16, 8, 10, 99);
  for (int trial = 0; trial < 20; ++trial) {
    auto v = random_vector(16, rng);
    auto neg = v;
    for (double& x : neg) x = -x;
    const auto a = f.codes(v);
    const auto b = f.codes(neg);
    for (std::size_t t = 0; t < a.size(); ++t) EXPECT_EQ(a[t] ^ b[t], 0xffu);
  }
}

TEST(SimHash, AgreementAtSixtyDegrees) {
  const double theta = std::numbers::pi / 3;
  const std::vector<double> x{1.0, 0.0};
  const std::vector<double> y{std::cos(theta), std::sin(theta)};
  SimHashFamily f(2, 1, 100000, 2024);
  const auto cx = f.codes(x);
  const auto cy = f.codes(y);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < cx.size(); ++i) agree += cx[i] == cy[i];
  EXPECT_NEAR(static_cast<double>(agree) / 1e5, 2.0 / 3.0, 0.01);
}

TEST(SimHash, SparseMatchesDense) {
  Rng rng(5);
  SimHashFamily f(50, 4, 8, 17);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> dense(50, 0.0);
    for (int i = 0; i < 7; ++i) dense[rng.below(50)] = rng.normal();
    if (is_all_zero(dense)) continue;
    EXPECT_EQ(f.codes(dense), f.codes(SparseVector::from_dense(dense)));
  }
}

TEST(SimHash, ScaleInvariant) {
  Rng rng(8);
  SimHashFamily f(32, 6, 12, 4);
  for (int trial = 0; trial < 20; ++trial) {
    auto v = random_vector(32, rng);
    auto scaled = v;
    const double c = 0.01 + 100.0 * rng.uniform();
    for (double& x : scaled) x *= c;
    EXPECT_EQ(f.codes(v), f.codes(scaled));
  }
}

TEST(SimHash, SameSeedSameCodes) {
  Rng rng(1);
  const auto v = random_vector(24, rng);
  EXPECT_EQ(SimHashFamily(24, 6, 50, 77).codes(v), SimHashFamily(24, 6, 50, 77).codes(v));
  EXPECT_NE(SimHashFamily(24, 6, 50, 77).codes(v), SimHashFamily(24, 6, 50, 78).codes(v));
}

TEST(SimHash, Errors) {
  SimHashFamily f(3, 2, 2, 1);
  EXPECT_THROW(f.codes(std::vector<double>{1.0, 2.0}), ConfigError);
  EXPECT_THROW(f.codes(std::vector<double>{0.0, 0.0, 0.0}), DegenerateInputError);
  EXPECT_THROW(f.codes(SparseVector{}), DegenerateInputError);
  EXPECT_THROW(SimHashFamily(3, 0, 2, 1), ConfigError);
  EXPECT_THROW(SimHashFamily(3, 2, 0, 1), ConfigError);
}

TEST(CollisionProb, ClosedFormCases) {
  const std::vector<double> x{1.0, 2.0, 3.0};
  const std::vector<double> neg{-1.0, -2.0, -3.0};
  EXPECT_DOUBLE_EQ(simhash_collision_prob(x, x), 1.0);
  EXPECT_DOUBLE_EQ(simhash_collision_prob(x, neg), 0.0);
  EXPECT_DOUBLE_EQ(simhash_collision_prob(std::vector<double>{1, 0}, std::vector<double>{0, 5}),
                   0.5);
  EXPECT_THROW(simhash_collision_prob(x, std::vector<double>{0, 0, 0}), DegenerateInputError);
}

TEST(CollisionProb, ClampsRoundoff) {
  // cosine of a vector with itself can exceed 1 in floating point
  const std::vector<double> x{0.1, 0.7, 1e-9, 3.3};
  const double p = simhash_collision_prob(x, x);
  EXPECT_FALSE(std::isnan(p));
  EXPECT_DOUBLE_EQ(p, 1.0);
}

TEST(RetrievalProb, ClosedForm) {
  EXPECT_DOUBLE_EQ(retrieval_prob(0.5, 1, 1), 0.5);
  EXPECT_DOUBLE_EQ(retrieval_prob(1.0, 6, 400), 1.0);
  EXPECT_NEAR(retrieval_prob(0.9, 2, 3), 0.993141, 1e-6);
  EXPECT_THROW(retrieval_prob(1.5, 2, 3), ArgumentError);
  EXPECT_THROW(retrieval_prob(-0.1, 2, 3), ArgumentError);
}

TEST(RetrievalProb, MonteCarloAgrees) {
  // L groups of K Bernoulli(alpha) trials; retrieved if any group is all ones
  Rng rng(12);
  const int trials = 200000;
  int hits = 0;
  for (int i = 0; i < trials; ++i) {
    bool any = false;
    for (int t = 0; t < 3; ++t) {
      bool all = true;
      for (int j = 0; j < 2; ++j) all = all && rng.uniform() < 0.9;
      any = any || all;
    }
    hits += any;
  }
  EXPECT_NEAR(static_cast<double>(hits) / trials, retrieval_prob(0.9, 2, 3), 0.002);
}

TEST(RetrievalProb, Monotone) {
  for (int k = 1; k <= 8; ++k) {
    for (int l = 1; l <= 64; l *= 2) {
      double prev = -1.0;
      for (double a = 0.0; a <= 1.0; a += 0.05) {
        const double p = retrieval_prob(a, k, l);
        EXPECT_GE(p, prev);
        prev = p;
        EXPECT_GE(retrieval_prob(a, k, l * 2), p);
        if (a < 1.0) {
          EXPECT_LE(retrieval_prob(a, k + 1, l), p);
        }
      }
    }
  }
}

TEST(Dwta, HandTraceIdentityPermutation) {
  DwtaFamily f(4, 1, 2, 2, {{0, 1, 2, 3}}, DensifyHash{3, 5, 7});
  const std::vector<double> v{0.1, 0.9, 0.0, 0.5};
  const auto sv = SparseVector::from_dense(v);
  EXPECT_EQ(f.raw_symbols(sv), (std::vector<std::int32_t>{1, 1}));
  EXPECT_EQ(f.codes(sv), (std::vector<BucketCode>{1, 1}));
}

TEST(Dwta, LoneNonzeroLeavesEmptyBin) {
  DwtaFamily f(4, 1, 2, 2, {{0, 1, 2, 3}}, DensifyHash{3, 5, 7});
  const auto sv = SparseVector::from_pairs({{0, 2.0}});
  EXPECT_EQ(f.raw_symbols(sv), (std::vector<std::int32_t>{0, kEmptyBin}));
  // the only donor is bin 0
  EXPECT_EQ(f.symbols(sv), (std::vector<std::uint32_t>{0, 0}));
}

TEST(Dwta, TiesGoToLowerPosition) {
  DwtaFamily g(4, 1, 1, 4, {{3, 2, 1, 0}}, DensifyHash{});
  const auto sv = SparseVector::from_pairs({{1, 2.0}, {3, 2.0}});
  // coordinate 3 sits at position 0, coordinate 1 at position 2
  EXPECT_EQ(g.raw_symbols(sv), (std::vector<std::int32_t>{0}));
}

TEST(Dwta, RejectsTooFewPermutations) {
  // K*L = 2 bins but each permutation of 4 coordinates holds one bin of 4
  EXPECT_THROW(DwtaFamily(4, 2, 1, 4, {{0, 1, 2, 3}}, DensifyHash{}), ConfigError);
  EXPECT_THROW(DwtaFamily(4, 1, 1, 2, {{0, 1, 1, 3}}, DensifyHash{}), ConfigError);
}

TEST(Dwta, MatchesBruteForceWtaOnDenseInputs) {
  Rng rng(31);
  for (auto [d, k, l, m] : {std::tuple{64, 4, 10, 8}, std::tuple{100, 3, 20, 7},
                            std::tuple{37, 2, 16, 5}}) {
    DwtaFamily f(static_cast<std::size_t>(d), k, l, static_cast<std::size_t>(m), 1234);
    for (int trial = 0; trial < 100; ++trial) {
      auto v = random_vector(static_cast<std::size_t>(d), rng);
      const auto sv = SparseVector::from_dense(v);
      const auto raw = f.raw_symbols(sv);
      ASSERT_EQ(std::count(raw.begin(), raw.end(), kEmptyBin), 0);
      EXPECT_EQ(f.codes(sv), brute_force_wta(f, v));
      EXPECT_EQ(f.codes(v), brute_force_wta(f, v));
    }
  }
}

TEST(Dwta, SparseCodesDeterministicAndScaleInvariant) {
  Rng rng(41);
  DwtaFamily f(200, 4, 30, 8, 9);
  DwtaFamily same(200, 4, 30, 8, 9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<std::uint32_t, double>> pairs;
    for (int i = 0; i < 6; ++i) pairs.emplace_back(rng.below(200), 0.1 + rng.uniform());
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end(),
                            [](auto& a, auto& b) { return a.first == b.first; }),
                pairs.end());
    const auto sv = SparseVector::from_pairs(pairs);
    auto scaled = sv;
    const double c = 0.001 + 50.0 * rng.uniform();
    for (double& x : scaled.values) x *= c;
    const auto codes = f.codes(sv);
    EXPECT_EQ(codes, f.codes(sv));
    EXPECT_EQ(codes, same.codes(sv));
    EXPECT_EQ(codes, f.codes(scaled));
    for (BucketCode c2 : codes) EXPECT_LT(c2, f.num_buckets());
  }
}

TEST(Dwta, PermutationsAreBijectionsAndCoverBins) {
  for (auto [d, k, l, m] : {std::tuple{128, 6, 50, 8}, std::tuple{100, 5, 7, 3},
                            std::tuple{10, 4, 9, 3}}) {
    DwtaFamily f(static_cast<std::size_t>(d), k, l, static_cast<std::size_t>(m), 5);
    const std::size_t bpp = static_cast<std::size_t>(d / m);
    const std::size_t need = static_cast<std::size_t>(k * l);
    EXPECT_EQ(f.bins_per_permutation(), bpp);
    EXPECT_EQ(f.num_permutations(), (need + bpp - 1) / bpp);
    EXPECT_GE(f.num_permutations() * bpp, need);
    for (std::size_t p = 0; p < f.num_permutations(); ++p) {
      auto perm = f.permutation(p);
      std::vector<std::uint32_t> sorted(perm.begin(), perm.end());
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
    }
  }
}

TEST(Dwta, Errors) {
  EXPECT_THROW(DwtaFamily(10, 2, 2, 1, 1), ConfigError);
  EXPECT_THROW(DwtaFamily(10, 2, 2, 11, 1), ConfigError);
  EXPECT_THROW(DwtaFamily(64, 12, 2, 8, 1), ConfigError);  // 8^12 >= 2^32
  DwtaFamily f(10, 2, 2, 2, 1);
  EXPECT_THROW(f.codes(SparseVector{}), DegenerateInputError);
  EXPECT_THROW(f.codes(std::vector<double>(9, 1.0)), ConfigError);
  EXPECT_THROW(f.codes(std::vector<double>(10, 0.0)), DegenerateInputError);
}

TEST(Densify, CompleteInputUnchanged) {
  const std::vector<std::int32_t> s{2, 0, 1, 3, 1};
  EXPECT_EQ(densify(s, DensifyHash::from_seed(4)), (std::vector<std::uint32_t>{2, 0, 1, 3, 1}));
}

TEST(Densify, SingleDonorFillsAll) {
  std::vector<std::int32_t> s(9, kEmptyBin);
  s[6] = 4;
  EXPECT_EQ(densify(s, DensifyHash::from_seed(8)), std::vector<std::uint32_t>(9, 4));
}

TEST(Densify, FourBinTrace) {
  // delta(b, attempt) = ((3b + 5*attempt + 7) mod (2^61-1)) mod 4
  // bin 1: attempt 1 -> 15 mod 4 = 3 -> probe (1+3) mod 4 = 0 (nonempty)
  // bin 3: attempt 1 -> 21 mod 4 = 1 -> probe (3+1) mod 4 = 0 (nonempty)
  const std::vector<std::int32_t> s{1, kEmptyBin, 0, kEmptyBin};
  const DensifyHash h{3, 5, 7};
  const auto out = densify(s, h);
  EXPECT_EQ(out, (std::vector<std::uint32_t>{1, 1, 0, 1}));
  EXPECT_EQ(densify(s, h), out);
}

TEST(Densify, FallbackScanWhenProbesMiss) {
  // a = b = c = 0 makes every probe land on the empty bin itself
  std::vector<std::int32_t> s(5, kEmptyBin);
  s[3] = 2;
  s[0] = 1;
  const auto out = densify(s, DensifyHash{0, 0, 0});
  EXPECT_EQ(out, (std::vector<std::uint32_t>{1, 2, 2, 2, 1}));
}

TEST(Densify, AllEmptyIsDegenerate) {
  EXPECT_THROW(densify(std::vector<std::int32_t>(4, kEmptyBin), DensifyHash{}),
               DegenerateInputError);
}

TEST(HashFamily, WrapsBothKinds) {
  auto s = HashFamily::make(HashKind::simhash, 16, 3, 5, 4, 1);
  auto d = HashFamily::make(HashKind::dwta, 16, 3, 5, 4, 1);
  EXPECT_EQ(s.kind(), HashKind::simhash);
  EXPECT_EQ(d.kind(), HashKind::dwta);
  EXPECT_EQ(s.num_buckets(), 8u);
  EXPECT_EQ(d.num_buckets(), 64u);
  EXPECT_EQ(s.evaluations_per_code(), 15u);
  EXPECT_EQ(parse_hash_kind("dwta"), HashKind::dwta);
  EXPECT_THROW(parse_hash_kind("minhash"), ConfigError);
}
