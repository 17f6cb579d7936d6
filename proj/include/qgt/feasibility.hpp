#pragma once

// Exhaustive enumeration of the integer vectors consistent with a reduced
// instance, plus the posterior statistics the query strategies consume.

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "qgt/core.hpp"

namespace qgt {

inline constexpr std::uint64_t kDefaultEnumerationCap = std::uint64_t{1} << 20;

// Feasible vectors stored row-major, one row per vector, in lexicographic order.
class FeasibleSet {
 public:
  FeasibleSet() = default;
  explicit FeasibleSet(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return count_; }
  bool empty() const { return size() == 0; }

  std::span<const int> row(std::size_t r) const { return {data_.data() + r * dim_, dim_}; }
  HiddenVector vector(std::size_t r) const {
    auto s = row(r);
    return HiddenVector{{s.begin(), s.end()}};
  }

  void push_back(std::span<const int> v) {
    if (v.size() != dim_) throw DimensionError("row length does not match feasible-set dimension");
    data_.insert(data_.end(), v.begin(), v.end());
    ++count_;
  }

  bool contains(const HiddenVector& h) const {
    if (h.dim() != dim_) return false;
    for (std::size_t r = 0; r < size(); ++r)
      if (std::equal(h.v.begin(), h.v.end(), row(r).begin())) return true;
    return false;
  }

  // Keeps only rows whose answer to `record` matches.
  FeasibleSet filtered(const QueryRecord& record) const {
    check_mask(record.mask, dim_);
    FeasibleSet out(dim_);
    for (std::size_t r = 0; r < size(); ++r)
      if (inner_answer(row(r), record.mask) == record.answer) out.push_back(row(r));
    return out;
  }

  friend bool operator==(const FeasibleSet& a, const FeasibleSet& b) {
    return a.dim_ == b.dim_ && a.size() == b.size() && a.data_ == b.data_;
  }

 private:
  std::size_t dim_ = 0;
  std::size_t count_ = 0;
  std::vector<int> data_;
};

// All vectors in the box [0, u], lexicographic (last coordinate fastest).
inline FeasibleSet enumerate_box(const BoundsVector& bounds, std::uint64_t cap = kDefaultEnumerationCap) {
  if (bounds.box_size() > cap)
    throw CapacityExceeded("box of " + std::to_string(bounds.box_size()) + " vectors exceeds enumeration cap " +
                           std::to_string(cap));
  const std::size_t d = bounds.dim();
  FeasibleSet fs(d);
  std::vector<int> v(d, 0);
  while (true) {
    fs.push_back(v);
    std::size_t i = d;
    while (i > 0) {
      --i;
      if (v[i] < bounds[i]) {
        ++v[i];
        break;
      }
      v[i] = 0;
      if (i == 0) return fs;
    }
    if (d == 0) return fs;
  }
}

inline FeasibleSet enumerate_feasible(const ReducedInstance& instance, std::uint64_t cap = kDefaultEnumerationCap) {
  FeasibleSet fs = enumerate_box(instance.bounds(), cap);
  for (const auto& rec : instance.history()) fs = fs.filtered(rec);
  if (fs.empty()) throw InconsistentHistory("no integer vector is consistent with the query history");
  return fs;
}

inline bool is_identified(const FeasibleSet& fs) { return fs.size() == 1; }

// Empirical distribution of the answer to `mask` over the feasible set.
inline std::map<int, double> answer_histogram(const FeasibleSet& fs, const Mask& mask) {
  check_mask(mask, fs.dim());
  std::map<int, std::size_t> counts;
  for (std::size_t r = 0; r < fs.size(); ++r) ++counts[inner_answer(fs.row(r), mask)];
  std::map<int, double> hist;
  const double n = static_cast<double>(fs.size());
  for (auto [a, c] : counts) hist[a] = static_cast<double>(c) / n;
  return hist;
}

// Shannon entropy in bits.
inline double entropy_bits(const std::map<int, double>& hist) {
  double h = 0.0;
  for (auto [a, p] : hist)
    if (p > 0.0) h -= p * std::log2(p);
  return h;
}

struct Moments {
  std::vector<double> mean;
  std::vector<double> cov;  // d x d, row-major
  std::size_t dim = 0;

  double at(std::size_t i, std::size_t j) const { return cov[i * dim + j]; }

  double quadratic_form(const Mask& mask) const {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      if (!mask[i]) continue;
      for (std::size_t j = 0; j < dim; ++j)
        if (mask[j]) s += at(i, j);
    }
    return s;
  }
};

inline Moments centered_covariance(const FeasibleSet& fs) {
  if (fs.empty()) throw InconsistentHistory("covariance of an empty feasible set");
  const std::size_t d = fs.dim();
  const double n = static_cast<double>(fs.size());
  Moments m{std::vector<double>(d, 0.0), std::vector<double>(d * d, 0.0), d};
  for (std::size_t r = 0; r < fs.size(); ++r) {
    auto v = fs.row(r);
    for (std::size_t i = 0; i < d; ++i) m.mean[i] += v[i];
  }
  for (auto& x : m.mean) x /= n;
  for (std::size_t r = 0; r < fs.size(); ++r) {
    auto v = fs.row(r);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) m.cov[i * d + j] += (v[i] - m.mean[i]) * (v[j] - m.mean[j]);
  }
  for (auto& x : m.cov) x /= n;
  return m;
}

// Uncentered second moment N^T N / |N|.
inline Moments gram_matrix(const FeasibleSet& fs) {
  if (fs.empty()) throw InconsistentHistory("gram matrix of an empty feasible set");
  const std::size_t d = fs.dim();
  const double n = static_cast<double>(fs.size());
  Moments m{std::vector<double>(d, 0.0), std::vector<double>(d * d, 0.0), d};
  for (std::size_t r = 0; r < fs.size(); ++r) {
    auto v = fs.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      m.mean[i] += v[i];
      for (std::size_t j = 0; j < d; ++j) m.cov[i * d + j] += static_cast<double>(v[i]) * v[j];
    }
  }
  for (auto& x : m.mean) x /= n;
  for (auto& x : m.cov) x /= n;
  return m;
}

// Caches the current feasible set of one episode and narrows it as records
// arrive instead of re-enumerating from the bounds.
class FeasibilityOracle {
 public:
  explicit FeasibilityOracle(BoundsVector bounds, std::uint64_t cap = kDefaultEnumerationCap)
      : instance_(std::move(bounds)), feasible_(enumerate_box(instance_.bounds(), cap)) {}

  void add(QueryRecord record) {
    FeasibleSet next = feasible_.filtered(record);
    if (next.empty()) throw InconsistentHistory("query record contradicts every remaining candidate");
    instance_.add(std::move(record));
    feasible_ = std::move(next);
  }

  const FeasibleSet& feasible() const { return feasible_; }
  const ReducedInstance& instance() const { return instance_; }
  bool identified() const { return is_identified(feasible_); }

 private:
  ReducedInstance instance_;
  FeasibleSet feasible_;
};

}  // namespace qgt
