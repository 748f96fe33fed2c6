#pragma once

#include <boost/math/distributions/chi_squared.hpp>
#include <unistd.h>

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <span>
#include <vector>

#include "lns/lsh_hashes.hpp"
#include "lns/random.hpp"
#include "lns/vectors.hpp"

namespace lns::testing {

/// Upper-tail p-value of Pearson's statistic for observed counts against expected counts.
inline double chi_square_p(std::span<const double> observed, std::span<const double> expected) {
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double d = observed[i] - expected[i];
    stat += d * d / expected[i];
  }
  boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

inline double chi_square_uniform_p(std::span<const double> observed) {
  double total = 0.0;
  for (double o : observed) total += o;
  std::vector<double> expected(observed.size(), total / static_cast<double>(observed.size()));
  return chi_square_p(observed, expected);
}

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.data()) x = rng.normal();
  return m;
}

/// Unit vector whose cosine with e0 is exactly c.
inline std::vector<double> unit_at_cosine(double c, std::size_t d, Rng& rng) {
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

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("lns_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

  std::string write(const std::string& name, const std::string& content) const {
    std::ofstream(file(name), std::ios::binary) << content;
    return file(name);
  }

 private:
  std::filesystem::path path_;
};

// Plain WTA over the family's permutations, no densification.
inline std::vector<BucketCode> brute_force_wta(const DwtaFamily& f, const std::vector<double>& v) {
  const std::size_t m = f.bin_size();
  const std::size_t bpp = f.bins_per_permutation();
  std::vector<std::size_t> sym(f.num_bins());
  for (std::size_t b = 0; b < sym.size(); ++b) {
    const auto perm = f.permutation(b / bpp);
    const std::size_t start = (b % bpp) * m;
    std::size_t best = 0;
    for (std::size_t j = 1; j < m; ++j) {
      if (v[perm[start + j]] > v[perm[start + best]]) best = j;
    }
    sym[b] = best;
  }
  std::vector<BucketCode> codes;
  for (int t = 0; t < f.l(); ++t) {
    std::uint64_t code = 0, place = 1;
    for (int j = 0; j < f.k(); ++j) {
      code += sym[static_cast<std::size_t>(t * f.k() + j)] * place;
      place *= m;
    }
    codes.push_back(static_cast<BucketCode>(code));
  }
  return codes;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace lns::testing
