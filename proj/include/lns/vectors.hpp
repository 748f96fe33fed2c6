#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lns/error.hpp"

namespace lns {

using ClassId = std::uint32_t;

/// Sorted, duplicate-free set of class ids.
using LabelSet = std::vector<ClassId>;

/// Index/value pairs with strictly increasing indices and nonzero values.
struct SparseVector {
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  std::size_t nnz() const noexcept { return indices.size(); }
  bool empty() const noexcept { return indices.empty(); }

  /// Sorts by index and drops explicit zeros. Duplicate indices are an error.
  static SparseVector from_pairs(std::vector<std::pair<std::uint32_t, double>> pairs) {
    std::sort(pairs.begin(), pairs.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    SparseVector v;
    v.indices.reserve(pairs.size());
    v.values.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (i > 0 && pairs[i].first == pairs[i - 1].first) {
        throw ArgumentError("duplicate sparse index " + std::to_string(pairs[i].first));
      }
      if (pairs[i].second == 0.0) continue;
      v.indices.push_back(pairs[i].first);
      v.values.push_back(pairs[i].second);
    }
    return v;
  }

  static SparseVector from_dense(std::span<const double> dense) {
    SparseVector v;
    for (std::size_t i = 0; i < dense.size(); ++i) {
      if (dense[i] != 0.0) {
        v.indices.push_back(static_cast<std::uint32_t>(i));
        v.values.push_back(dense[i]);
      }
    }
    return v;
  }

  std::vector<double> to_dense(std::size_t dim) const {
    std::vector<double> out(dim, 0.0);
    for (std::size_t i = 0; i < nnz(); ++i) out[indices[i]] = values[i];
    return out;
  }

  /// Throws ArgumentError unless every invariant holds for dimension `dim`.
  void validate(std::size_t dim) const {
    if (indices.size() != values.size()) {
      throw ArgumentError("sparse vector has mismatched index/value lengths");
    }
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= dim) {
        throw ArgumentError("sparse index " + std::to_string(indices[i]) +
                            " out of range for dimension " + std::to_string(dim));
      }
      if (i > 0 && indices[i] <= indices[i - 1]) {
        throw ArgumentError("sparse indices must be strictly increasing");
      }
      if (values[i] == 0.0 || !std::isfinite(values[i])) {
        throw ArgumentError("sparse values must be finite and nonzero");
      }
    }
  }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

/// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Four partial sums so the compiler can pipeline and vectorize the loop.
inline double dot(std::span<const double> a, std::span<const double> b) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= a.size(); i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < a.size(); ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline double dot(const SparseVector& a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.nnz(); ++i) s += a.values[i] * b[a.indices[i]];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool is_all_zero(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double x) { return x == 0.0; });
}

inline bool contains(const LabelSet& set, ClassId id) {
  return std::binary_search(set.begin(), set.end(), id);
}

inline LabelSet make_label_set(std::vector<ClassId> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

}  // namespace lns
