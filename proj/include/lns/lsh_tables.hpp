#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lns/error.hpp"
#include "lns/lsh_hashes.hpp"
#include "lns/random.hpp"
#include "lns/vectors.hpp"

namespace lns {

/// Deduplicated union of probed buckets, sorted ascending.
using CandidateSet = std::vector<ClassId>;

struct QueryResult {
  CandidateSet ids;
  std::size_t hash_evaluations = 0;
  std::size_t ids_examined = 0;
};

struct Bucket {
  std::vector<ClassId> ids;
  std::uint64_t arrivals = 0;
};

namespace detail {

// Direct-addressed buckets up to kDirectLimit codes per table; beyond that
// (large DWTA m^K) the table is a hash map keyed by code.
class BucketStore {
 public:
  static constexpr std::uint64_t kDirectLimit = std::uint64_t{1} << 16;

  explicit BucketStore(std::uint64_t num_buckets) : direct_mode_(num_buckets <= kDirectLimit) {
    if (direct_mode_) direct_.resize(num_buckets);
  }

  const Bucket* find(BucketCode code) const {
    if (direct_mode_) return &direct_[code];
    auto it = sparse_.find(code);
    return it == sparse_.end() ? nullptr : &it->second;
  }
  Bucket* find(BucketCode code) {
    if (direct_mode_) return &direct_[code];
    auto it = sparse_.find(code);
    return it == sparse_.end() ? nullptr : &it->second;
  }
  Bucket& get(BucketCode code) { return direct_mode_ ? direct_[code] : sparse_[code]; }

  void clear() {
    if (direct_mode_) {
      for (auto& b : direct_) b = Bucket{};
    } else {
      sparse_.clear();
    }
  }

  /// Visits nonempty buckets in ascending code order.
  template <class Fn>
  void for_each(Fn fn) const {
    if (direct_mode_) {
      for (std::size_t c = 0; c < direct_.size(); ++c) {
        if (!direct_[c].ids.empty()) fn(static_cast<BucketCode>(c), direct_[c]);
      }
      return;
    }
    std::vector<BucketCode> codes;
    codes.reserve(sparse_.size());
    for (const auto& [code, bucket] : sparse_) {
      if (!bucket.ids.empty()) codes.push_back(code);
    }
    std::sort(codes.begin(), codes.end());
    for (BucketCode c : codes) fn(c, sparse_.at(c));
  }

 private:
  bool direct_mode_;
  std::vector<Bucket> direct_;
  std::unordered_map<BucketCode, Bucket> sparse_;
};

}  // namespace detail

/**
 * L hash tables of class ids keyed by meta-hash codes.
 *
 * Lifecycle: build once, query many times, then remove/re-insert (update)
 * classes whose vectors changed. Each stored id keeps an occupancy record of
 * its L codes so removal never rehashes the (possibly overwritten) old vector.
 *
 * Buckets hold at most `bucket_capacity` ids. On overflow an arriving id
 * replaces a uniformly random slot with probability capacity / arrivals
 * (reservoir sampling); evicted or rejected ids are recorded as absent from
 * that table.
 *
 * Queries are const and may run concurrently; every mutating call needs
 * exclusive access.
 */
class LshTables {
 public:
  static constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();
  static constexpr BucketCode kAbsent = std::numeric_limits<BucketCode>::max();

  explicit LshTables(HashFamily family, std::size_t bucket_capacity = 128,
                     std::uint64_t seed = 0)
      : family_(std::move(family)),
        capacity_(bucket_capacity),
        rng_(derive_seed(seed, "reservoir")) {
    if (bucket_capacity == 0) throw ConfigError("bucket capacity must be positive");
    tables_.reserve(static_cast<std::size_t>(l()));
    for (int t = 0; t < l(); ++t) tables_.emplace_back(family_.num_buckets());
  }

  const HashFamily& family() const noexcept { return family_; }
  int k() const { return family_.k(); }
  int l() const { return family_.l(); }
  std::size_t bucket_capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return stored_count_; }

  bool contains(ClassId id) const noexcept { return id < stored_.size() && stored_[id]; }

  void insert(ClassId id, std::span<const double> v) { insert_codes(id, family_.codes(v)); }
  void insert(ClassId id, const SparseVector& v) { insert_codes(id, family_.codes(v)); }

  /// Places `id` using precomputed codes (one per table).
  void insert_codes(ClassId id, std::span<const BucketCode> codes) {
    if (codes.size() != static_cast<std::size_t>(l())) {
      throw ArgumentError("insert: expected one code per table");
    }
    if (contains(id)) throw ArgumentError("insert: duplicate id " + std::to_string(id));
    hash_evaluations_ += family_.evaluations_per_code();
    charged_operations_ += family_.evaluations_per_code();
    ensure_id(id);
    stored_[id] = 1;
    ++stored_count_;
    for (std::size_t t = 0; t < codes.size(); ++t) {
      Bucket& bucket = tables_[t].get(codes[t]);
      ++bucket.arrivals;
      BucketCode& slot = occupancy_[static_cast<std::size_t>(id) * codes.size() + t];
      if (bucket.ids.size() < capacity_) {
        bucket.ids.push_back(id);
        slot = codes[t];
        continue;
      }
      const std::uint64_t j = rng_.below(bucket.arrivals);
      if (j < capacity_) {
        const ClassId evicted = bucket.ids[j];
        occupancy_[static_cast<std::size_t>(evicted) * codes.size() + t] = kAbsent;
        bucket.ids[j] = id;
        slot = codes[t];
      } else {
        slot = kAbsent;
      }
    }
  }

  /// Removes `id` using its occupancy record. Throws NotFoundError if absent.
  void remove(ClassId id) {
    if (!contains(id)) throw NotFoundError("remove: id " + std::to_string(id) + " not stored");
    charged_operations_ += family_.evaluations_per_code();
    const auto tables = static_cast<std::size_t>(l());
    for (std::size_t t = 0; t < tables; ++t) {
      BucketCode& slot = occupancy_[static_cast<std::size_t>(id) * tables + t];
      if (slot == kAbsent) continue;
      Bucket* bucket = tables_[t].find(slot);
      auto it = std::find(bucket->ids.begin(), bucket->ids.end(), id);
      *it = bucket->ids.back();
      bucket->ids.pop_back();
      bucket->arrivals = std::max<std::uint64_t>(bucket->arrivals - 1, bucket->ids.size());
      slot = kAbsent;
    }
    stored_[id] = 0;
    --stored_count_;
  }

  /// remove(id) followed by insert(id, v); charged 2*K*L operations.
  template <class Vec>
  void update(ClassId id, const Vec& v) {
    if (!contains(id)) throw NotFoundError("update: id " + std::to_string(id) + " not stored");
    auto codes = family_.codes(v);
    remove(id);
    insert_codes(id, codes);
  }

  void clear() {
    for (auto& t : tables_) t.clear();
    std::fill(stored_.begin(), stored_.end(), 0);
    std::fill(occupancy_.begin(), occupancy_.end(), kAbsent);
    stored_count_ = 0;
  }

  /// Clears, then inserts rows 0..rows-1 of `vectors` as class ids.
  void build(const Matrix& vectors) {
    clear();
    for (std::size_t r = 0; r < vectors.rows(); ++r) {
      insert(static_cast<ClassId>(r), vectors.row(r));
    }
  }

  /// Clears, then inserts (ids[i], vector_of(ids[i])). Duplicate ids throw.
  template <class VectorOf>
  void build(std::span<const ClassId> ids, VectorOf&& vector_of) {
    std::vector<ClassId> sorted(ids.begin(), ids.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ArgumentError("build: duplicate class id");
    }
    clear();
    for (ClassId id : ids) insert(id, vector_of(id));
  }

  template <class Vec>
  QueryResult query(const Vec& v) const {
    return query_codes(family_.codes(v));
  }

  QueryResult query_codes(std::span<const BucketCode> codes) const {
    QueryResult result;
    result.hash_evaluations = family_.evaluations_per_code();
    for (std::size_t t = 0; t < codes.size(); ++t) {
      const Bucket* bucket = tables_[t].find(codes[t]);
      if (bucket == nullptr) continue;
      result.ids.insert(result.ids.end(), bucket->ids.begin(), bucket->ids.end());
    }
    result.ids_examined = result.ids.size();
    std::sort(result.ids.begin(), result.ids.end());
    result.ids.erase(std::unique(result.ids.begin(), result.ids.end()), result.ids.end());
    return result;
  }

  std::span<const ClassId> bucket(std::size_t table, BucketCode code) const {
    const Bucket* b = tables_.at(table).find(code);
    if (b == nullptr) return {};
    return b->ids;
  }

  /// The code recorded for `id` in `table`; nullopt if stored but evicted there.
  std::optional<BucketCode> recorded_code(ClassId id, std::size_t table) const {
    if (!contains(id)) throw NotFoundError("recorded_code: id not stored");
    const BucketCode c = occupancy_[static_cast<std::size_t>(id) * static_cast<std::size_t>(l()) + table];
    if (c == kAbsent) return std::nullopt;
    return c;
  }

  /// Compares the occupancy record against a full scan of every bucket.
  bool occupancy_consistent() const {
    const auto tables = static_cast<std::size_t>(l());
    std::vector<BucketCode> scanned(occupancy_.size(), kAbsent);
    for (std::size_t t = 0; t < tables; ++t) {
      bool ok = true;
      tables_[t].for_each([&](BucketCode code, const Bucket& b) {
        if (b.ids.size() > capacity_) ok = false;
        for (ClassId id : b.ids) {
          if (!contains(id)) {
            ok = false;
            continue;
          }
          BucketCode& s = scanned[static_cast<std::size_t>(id) * tables + t];
          if (s != kAbsent) ok = false;  // id twice in one table
          s = code;
        }
      });
      if (!ok) return false;
    }
    for (std::size_t id = 0; id < stored_.size(); ++id) {
      for (std::size_t t = 0; t < tables; ++t) {
        const BucketCode expect = stored_[id] ? occupancy_[id * tables + t] : kAbsent;
        if (scanned[id * tables + t] != expect) return false;
      }
    }
    return true;
  }

  /// Diagnostic text dump: "table code id id ..." per nonempty bucket, ids sorted.
  void dump(std::ostream& out) const {
    for (std::size_t t = 0; t < tables_.size(); ++t) {
      tables_[t].for_each([&](BucketCode code, const Bucket& b) {
        std::vector<ClassId> ids = b.ids;
        std::sort(ids.begin(), ids.end());
        out << t << ' ' << code;
        for (ClassId id : ids) out << ' ' << id;
        out << '\n';
      });
    }
  }

  std::size_t total_entries(std::size_t table) const {
    std::size_t n = 0;
    tables_.at(table).for_each([&](BucketCode, const Bucket& b) { n += b.ids.size(); });
    return n;
  }

  std::uint64_t hash_evaluations() const noexcept { return hash_evaluations_; }
  std::uint64_t charged_operations() const noexcept { return charged_operations_; }

 private:
  void ensure_id(ClassId id) {
    const std::size_t need = static_cast<std::size_t>(id) + 1;
    if (stored_.size() >= need) return;
    const std::size_t grown = std::max(need, stored_.size() * 2);
    stored_.resize(grown, 0);
    occupancy_.resize(grown * static_cast<std::size_t>(l()), kAbsent);
  }

  HashFamily family_;
  std::size_t capacity_;
  Rng rng_;
  std::vector<detail::BucketStore> tables_;
  std::vector<std::uint8_t> stored_;
  std::vector<BucketCode> occupancy_;
  std::size_t stored_count_ = 0;
  std::uint64_t hash_evaluations_ = 0;
  std::uint64_t charged_operations_ = 0;
};

}  // namespace lns
