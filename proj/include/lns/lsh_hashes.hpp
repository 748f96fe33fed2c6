#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lns/error.hpp"
#include "lns/random.hpp"
#include "lns/vectors.hpp"

namespace lns {

// A table's bucket code. The table index is the position in a code sequence.
using BucketCode = std::uint32_t;

/**
 * Signed random projections. Plane t*K + j decides bit j of table t's code:
 * the bit is set iff the projection onto the plane is strictly positive.
 * Planes have i.i.d. standard normal entries.
 */
class SimHashFamily {
 public:
  SimHashFamily(std::size_t dim, int k, int l, std::uint64_t seed)
      : dim_(dim), k_(k), l_(l), seed_(seed) {
    if (dim == 0) throw ConfigError("simhash: dimension must be positive");
    if (k < 1 || k > 31) throw ConfigError("simhash: K must be in [1, 31]");
    if (l < 1) throw ConfigError("simhash: L must be positive");
    Rng rng(seed);
    planes_.resize(num_functions() * dim_);
    for (double& w : planes_) w = rng.normal();
  }

  /// Explicit planes, row-major: plane f occupies [f*dim, (f+1)*dim).
  SimHashFamily(std::size_t dim, int k, int l, std::vector<double> planes)
      : SimHashFamily(dim, k, l, std::uint64_t{0}) {
    if (planes.size() != num_functions() * dim_) {
      throw ConfigError("simhash: expected K*L*dim plane entries");
    }
    planes_ = std::move(planes);
  }

  std::size_t dim() const noexcept { return dim_; }
  int k() const noexcept { return k_; }
  int l() const noexcept { return l_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t num_functions() const noexcept {
    return static_cast<std::size_t>(k_) * static_cast<std::size_t>(l_);
  }
  std::uint64_t num_buckets() const noexcept { return std::uint64_t{1} << k_; }

  std::span<const double> plane(std::size_t f) const {
    return {planes_.data() + f * dim_, dim_};
  }

  std::vector<BucketCode> codes(std::span<const double> v) const {
    if (v.size() != dim_) {
      throw ConfigError("simhash: vector dimension " + std::to_string(v.size()) +
                        " != family dimension " + std::to_string(dim_));
    }
    if (is_all_zero(v)) throw DegenerateInputError("simhash: all-zero vector");
    return assemble([&](std::size_t f) { return dot(plane(f), v) > 0.0; });
  }

  // Iterates the nonzeros only.
  std::vector<BucketCode> codes(const SparseVector& v) const {
    if (!v.empty() && v.indices.back() >= dim_) {
      throw ConfigError("simhash: sparse index beyond family dimension");
    }
    if (v.empty()) throw DegenerateInputError("simhash: all-zero vector");
    return assemble([&](std::size_t f) { return dot(v, plane(f)) > 0.0; });
  }

 private:
  template <class BitFn>
  std::vector<BucketCode> assemble(BitFn bit) const {
    std::vector<BucketCode> out(static_cast<std::size_t>(l_), 0);
    for (int t = 0; t < l_; ++t) {
      BucketCode code = 0;
      for (int j = 0; j < k_; ++j) {
        if (bit(static_cast<std::size_t>(t * k_ + j))) code |= BucketCode{1} << j;
      }
      out[static_cast<std::size_t>(t)] = code;
    }
    return out;
  }

  std::size_t dim_;
  int k_;
  int l_;
  std::uint64_t seed_;
  std::vector<double> planes_;
};

/// Universal hash over (bin, attempt) driving densification probes.
struct DensifyHash {
  static constexpr std::uint64_t kPrime = (std::uint64_t{1} << 61) - 1;
  std::uint64_t a = 1;
  std::uint64_t b = 1;
  std::uint64_t c = 0;

  static DensifyHash from_seed(std::uint64_t seed) {
    Rng rng(seed);
    DensifyHash h;
    h.a = 1 + rng.below(kPrime - 1);
    h.b = 1 + rng.below(kPrime - 1);
    h.c = rng.below(kPrime);
    return h;
  }

  /// Probe offset in [0, total_bins).
  std::uint64_t delta(std::uint64_t bin, std::uint64_t attempt,
                      std::uint64_t total_bins) const {
    unsigned __int128 x = static_cast<unsigned __int128>(a) * bin +
                          static_cast<unsigned __int128>(b) * attempt + c;
    return static_cast<std::uint64_t>(x % kPrime) % total_bins;
  }
};

inline constexpr std::int32_t kEmptyBin = -1;

/**
 * Fills every empty bin (kEmptyBin) with the symbol of a nonempty donor bin.
 * Empty bin b probes (b + delta(b, attempt)) mod n for attempt = 1, 2, ...
 * and takes the first originally-nonempty bin it hits. After
 * `kMaxProbes` misses it falls back to scanning forward from b + 1, so the
 * result is always defined and depends only on the input and the hash.
 */
inline std::vector<std::uint32_t> densify(std::span<const std::int32_t> symbols,
                                          const DensifyHash& hash) {
  constexpr std::uint64_t kMaxProbes = 64;
  const std::size_t n = symbols.size();
  std::vector<std::uint32_t> out(n, 0);
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (symbols[i] != kEmptyBin) {
      out[i] = static_cast<std::uint32_t>(symbols[i]);
      any = true;
    }
  }
  if (!any) throw DegenerateInputError("densify: every bin is empty");
  for (std::size_t b = 0; b < n; ++b) {
    if (symbols[b] != kEmptyBin) continue;
    bool filled = false;
    for (std::uint64_t attempt = 1; attempt <= kMaxProbes; ++attempt) {
      const std::size_t probe = (b + hash.delta(b, attempt, n)) % n;
      if (symbols[probe] != kEmptyBin) {
        out[b] = static_cast<std::uint32_t>(symbols[probe]);
        filled = true;
        break;
      }
    }
    for (std::size_t step = 1; !filled && step < n; ++step) {
      const std::size_t probe = (b + step) % n;
      if (symbols[probe] != kEmptyBin) {
        out[b] = static_cast<std::uint32_t>(symbols[probe]);
        filled = true;
      }
    }
  }
  return out;
}

/**
 * Densified winner-take-all hashing.
 *
 * Each seeded Fisher-Yates permutation of {0..d-1} is cut into floor(d/m)
 * bins of m consecutive positions; the first K*L bins across permutations
 * are used. A bin's symbol is the within-bin position of its largest nonzero
 * coordinate (ties to the lower position). Bins with no nonzero coordinate
 * are filled by `densify`. Symbols are grouped K per table and packed
 * little-endian in base m.
 */
class DwtaFamily {
 public:
  DwtaFamily(std::size_t dim, int k, int l, std::size_t bin_size, std::uint64_t seed)
      : dim_(dim), k_(k), l_(l), bin_size_(bin_size), seed_(seed) {
    if (k < 1 || l < 1) throw ConfigError("dwta: K and L must be positive");
    if (bin_size < 2) throw ConfigError("dwta: bin size m must be >= 2");
    if (bin_size > dim) throw ConfigError("dwta: bin size m must not exceed the dimension");
    const double buckets = std::pow(static_cast<double>(bin_size), k);
    if (buckets >= 4294967295.0) throw ConfigError("dwta: m^K must be < 2^32");
    num_buckets_ = 1;
    for (int i = 0; i < k; ++i) num_buckets_ *= bin_size;

    bins_per_perm_ = dim / bin_size;
    const std::size_t bins = num_bins();
    num_perms_ = (bins + bins_per_perm_ - 1) / bins_per_perm_;

    Rng rng(derive_seed(seed, "dwta-permutations"));
    permutations_.resize(num_perms_ * dim);
    std::vector<std::uint32_t> perm(dim);
    for (std::size_t p = 0; p < num_perms_; ++p) {
      for (std::size_t i = 0; i < dim; ++i) perm[i] = static_cast<std::uint32_t>(i);
      shuffle(std::span<std::uint32_t>(perm), rng);
      std::copy(perm.begin(), perm.end(), permutations_.begin() + static_cast<std::ptrdiff_t>(p * dim));
    }
    index_slots();
    densify_hash_ = DensifyHash::from_seed(derive_seed(seed, "dwta-densify"));
  }

  /// Caller-supplied permutations (at least the required count) and probe hash.
  DwtaFamily(std::size_t dim, int k, int l, std::size_t bin_size,
             const std::vector<std::vector<std::uint32_t>>& permutations, DensifyHash densify_hash)
      : DwtaFamily(dim, k, l, bin_size, std::uint64_t{0}) {
    if (permutations.size() < num_perms_) throw ConfigError("dwta: too few permutations");
    for (std::size_t p = 0; p < num_perms_; ++p) {
      const auto& perm = permutations[p];
      std::vector<bool> seen(dim, false);
      if (perm.size() != dim) throw ConfigError("dwta: permutation has the wrong length");
      for (std::uint32_t c : perm) {
        if (c >= dim || seen[c]) throw ConfigError("dwta: not a permutation");
        seen[c] = true;
      }
      std::copy(perm.begin(), perm.end(), permutations_.begin() + static_cast<std::ptrdiff_t>(p * dim));
    }
    index_slots();
    densify_hash_ = densify_hash;
  }

  std::size_t dim() const noexcept { return dim_; }
  int k() const noexcept { return k_; }
  int l() const noexcept { return l_; }
  std::size_t bin_size() const noexcept { return bin_size_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t bins_per_permutation() const noexcept { return bins_per_perm_; }
  std::size_t num_permutations() const noexcept { return num_perms_; }
  std::size_t num_bins() const noexcept {
    return static_cast<std::size_t>(k_) * static_cast<std::size_t>(l_);
  }
  std::size_t num_functions() const noexcept { return num_bins(); }
  std::uint64_t num_buckets() const noexcept { return num_buckets_; }
  const DensifyHash& densify_hash() const noexcept { return densify_hash_; }

  std::span<const std::uint32_t> permutation(std::size_t p) const {
    return {permutations_.data() + p * dim_, dim_};
  }

  /// Per-bin symbols before densification; kEmptyBin where no nonzero landed.
  std::vector<std::int32_t> raw_symbols(const SparseVector& v) const {
    if (!v.empty() && v.indices.back() >= dim_) {
      throw ConfigError("dwta: sparse index beyond family dimension");
    }
    std::vector<std::int32_t> symbol(num_bins(), kEmptyBin);
    std::vector<double> best(num_bins(), 0.0);
    for (std::size_t i = 0; i < v.nnz(); ++i) {
      const std::uint32_t coord = v.indices[i];
      const double value = v.values[i];
      for (std::size_t s = slot_offsets_[coord]; s < slot_offsets_[coord + 1]; ++s) {
        const std::uint32_t bin = slot_bin_[s];
        const auto pos = static_cast<std::int32_t>(slot_pos_[s]);
        if (symbol[bin] == kEmptyBin || value > best[bin] ||
            (value == best[bin] && pos < symbol[bin])) {
          symbol[bin] = pos;
          best[bin] = value;
        }
      }
    }
    return symbol;
  }

  std::vector<std::uint32_t> symbols(const SparseVector& v) const {
    if (v.empty()) throw DegenerateInputError("dwta: all-zero vector");
    return densify(raw_symbols(v), densify_hash_);
  }

  std::vector<BucketCode> codes(const SparseVector& v) const {
    const auto sym = symbols(v);
    std::vector<BucketCode> out(static_cast<std::size_t>(l_), 0);
    for (int t = 0; t < l_; ++t) {
      std::uint64_t code = 0;
      std::uint64_t place = 1;
      for (int j = 0; j < k_; ++j) {
        code += sym[static_cast<std::size_t>(t * k_ + j)] * place;
        place *= bin_size_;
      }
      out[static_cast<std::size_t>(t)] = static_cast<BucketCode>(code);
    }
    return out;
  }

  /// Dense input: zero coordinates are treated as absent.
  std::vector<BucketCode> codes(std::span<const double> v) const {
    if (v.size() != dim_) {
      throw ConfigError("dwta: vector dimension " + std::to_string(v.size()) +
                        " != family dimension " + std::to_string(dim_));
    }
    return codes(SparseVector::from_dense(v));
  }

 private:
  // Per-coordinate list of (bin, position) slots, stored CSR.
  void index_slots() {
    const std::size_t bins = num_bins();
    std::vector<std::size_t> counts(dim_ + 1, 0);
    for (std::size_t p = 0; p < num_perms_; ++p) {
      for (std::size_t pos = 0; pos < bins_per_perm_ * bin_size_; ++pos) {
        const std::size_t bin = p * bins_per_perm_ + pos / bin_size_;
        if (bin < bins) ++counts[permutations_[p * dim_ + pos] + 1];
      }
    }
    for (std::size_t i = 0; i < dim_; ++i) counts[i + 1] += counts[i];
    slot_offsets_ = counts;
    slot_bin_.resize(counts[dim_]);
    slot_pos_.resize(counts[dim_]);
    std::vector<std::size_t> fill(counts.begin(), counts.end() - 1);
    for (std::size_t p = 0; p < num_perms_; ++p) {
      for (std::size_t pos = 0; pos < bins_per_perm_ * bin_size_; ++pos) {
        const std::size_t bin = p * bins_per_perm_ + pos / bin_size_;
        if (bin >= bins) continue;
        const std::uint32_t coord = permutations_[p * dim_ + pos];
        slot_bin_[fill[coord]] = static_cast<std::uint32_t>(bin);
        slot_pos_[fill[coord]] = static_cast<std::uint32_t>(pos % bin_size_);
        ++fill[coord];
      }
    }
  }

  std::size_t dim_;
  int k_;
  int l_;
  std::size_t bin_size_;
  std::uint64_t seed_;
  std::uint64_t num_buckets_ = 0;
  std::size_t bins_per_perm_ = 0;
  std::size_t num_perms_ = 0;
  std::vector<std::uint32_t> permutations_;
  std::vector<std::size_t> slot_offsets_;
  std::vector<std::uint32_t> slot_bin_;
  std::vector<std::uint32_t> slot_pos_;
  DensifyHash densify_hash_;
};

enum class HashKind { simhash, dwta };

inline std::string to_string(HashKind kind) {
  return kind == HashKind::simhash ? "simhash" : "dwta";
}

inline HashKind parse_hash_kind(const std::string& s) {
  if (s == "simhash") return HashKind::simhash;
  if (s == "dwta") return HashKind::dwta;
  throw ConfigError("unknown hash family '" + s + "' (expected simhash or dwta)");
}

/// Either family behind one interface; immutable after construction.
class HashFamily {
 public:
  HashFamily(SimHashFamily f) : family_(std::move(f)) {}  // NOLINT(google-explicit-constructor)
  HashFamily(DwtaFamily f) : family_(std::move(f)) {}     // NOLINT(google-explicit-constructor)

  static HashFamily make(HashKind kind, std::size_t dim, int k, int l,
                         std::size_t bin_size, std::uint64_t seed) {
    if (kind == HashKind::simhash) return SimHashFamily(dim, k, l, seed);
    return DwtaFamily(dim, k, l, bin_size, seed);
  }

  HashKind kind() const noexcept {
    return std::holds_alternative<SimHashFamily>(family_) ? HashKind::simhash
                                                          : HashKind::dwta;
  }
  int k() const {
    return std::visit([](const auto& f) { return f.k(); }, family_);
  }
  int l() const {
    return std::visit([](const auto& f) { return f.l(); }, family_);
  }
  std::size_t dim() const {
    return std::visit([](const auto& f) { return f.dim(); }, family_);
  }
  std::uint64_t num_buckets() const {
    return std::visit([](const auto& f) { return f.num_buckets(); }, family_);
  }
  /// Single hash-function evaluations per code computation (K*L).
  std::size_t evaluations_per_code() const {
    return static_cast<std::size_t>(k()) * static_cast<std::size_t>(l());
  }

  std::vector<BucketCode> codes(std::span<const double> v) const {
    return std::visit([&](const auto& f) { return f.codes(v); }, family_);
  }
  std::vector<BucketCode> codes(const SparseVector& v) const {
    return std::visit([&](const auto& f) { return f.codes(v); }, family_);
  }

  const SimHashFamily* simhash() const { return std::get_if<SimHashFamily>(&family_); }
  const DwtaFamily* dwta() const { return std::get_if<DwtaFamily>(&family_); }

 private:
  std::variant<SimHashFamily, DwtaFamily> family_;
};

/// Cosine collision probability 1 - theta/pi.
inline double simhash_collision_prob(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ConfigError("simhash_collision_prob: dimension mismatch");
  const double nx = norm(x);
  const double ny = norm(y);
  if (nx == 0.0 || ny == 0.0) {
    throw DegenerateInputError("simhash_collision_prob: zero vector");
  }
  const double cosine = std::clamp(dot(x, y) / (nx * ny), -1.0, 1.0);
  return 1.0 - std::acos(cosine) / std::numbers::pi;
}

/// Probability that a (K, L) index retrieves an item whose per-function
/// collision probability with the query is `alpha`: 1 - (1 - alpha^K)^L.
inline double retrieval_prob(double alpha, int k, int l) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ArgumentError("retrieval_prob: alpha must be in [0, 1]");
  }
  if (k < 1 || l < 1) throw ArgumentError("retrieval_prob: K and L must be >= 1");
  return 1.0 - std::pow(1.0 - std::pow(alpha, k), l);
}

}  // namespace lns
