#pragma once

// Domain types for quantitative group testing and the reduced integer-vector
// recovery problem produced by binary splitting.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qgt {

using Rng = std::mt19937_64;

// A query pool over the coordinates of a reduced instance. Entries are 0 or 1.
using Mask = std::vector<std::uint8_t>;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidParameters : public Error {
 public:
  using Error::Error;
};

class InfeasibleInstance : public Error {
 public:
  using Error::Error;
};

class InconsistentHistory : public Error {
 public:
  using Error::Error;
};

class AlreadyIdentified : public Error {
 public:
  using Error::Error;
};

class CapacityExceeded : public Error {
 public:
  using Error::Error;
};

class CorruptedState : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Types

// Hidden length-n binary vector with exactly k ones.
class IncidenceVector {
 public:
  IncidenceVector() = default;

  explicit IncidenceVector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto b : bits_) {
      if (b > 1) throw InvalidParameters("incidence vector entries must be 0 or 1");
      k_ += b;
    }
    if (bits_.empty()) throw InvalidParameters("incidence vector must be non-empty");
    if (k_ == 0) throw InvalidParameters("incidence vector must contain at least one defective");
  }

  // Uniform draw from the vectors of length n with exactly k ones.
  static IncidenceVector sample(std::size_t n, std::size_t k, Rng& rng) {
    if (k == 0 || k > n) throw InvalidParameters("need 1 <= k <= n");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // partial Fisher-Yates
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    std::vector<std::uint8_t> bits(n, 0);
    for (std::size_t i = 0; i < k; ++i) bits[idx[i]] = 1;
    return IncidenceVector(std::move(bits));
  }

  std::size_t n() const { return bits_.size(); }
  std::size_t k() const { return k_; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  std::uint8_t operator[](std::size_t i) const { return bits_[i]; }

  // Defectives inside [begin, end).
  int count_range(std::size_t begin, std::size_t end) const {
    int c = 0;
    for (std::size_t i = begin; i < end; ++i) c += bits_[i];
    return c;
  }

  friend bool operator==(const IncidenceVector&, const IncidenceVector&) = default;

 private:
  std::vector<std::uint8_t> bits_;
  std::size_t k_ = 0;
};

// Per-coordinate upper bounds of a reduced instance.
class BoundsVector {
 public:
  BoundsVector() = default;
  explicit BoundsVector(std::vector<int> u) : u_(std::move(u)) {
    for (int v : u_)
      if (v < 0) throw InvalidParameters("bounds must be non-negative");
  }

  std::size_t dim() const { return u_.size(); }
  int operator[](std::size_t i) const { return u_[i]; }
  const std::vector<int>& values() const { return u_; }
  int total() const { return std::accumulate(u_.begin(), u_.end(), 0); }

  // Number of integer vectors in the box [0, u].
  std::uint64_t box_size() const {
    std::uint64_t s = 1;
    for (int v : u_) s *= static_cast<std::uint64_t>(v) + 1;
    return s;
  }

  friend bool operator==(const BoundsVector&, const BoundsVector&) = default;

 private:
  std::vector<int> u_;
};

// Integer vector to be recovered in a reduced instance.
struct HiddenVector {
  std::vector<int> v;

  std::size_t dim() const { return v.size(); }
  int operator[](std::size_t i) const { return v[i]; }

  bool respects(const BoundsVector& bounds) const {
    if (v.size() != bounds.dim()) return false;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] < 0 || v[i] > bounds[i]) return false;
    return true;
  }

  friend bool operator==(const HiddenVector&, const HiddenVector&) = default;
};

struct QueryRecord {
  Mask mask;
  int answer = 0;

  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

inline void check_mask(const Mask& mask, std::size_t dim) {
  if (mask.size() != dim)
    throw DimensionError("mask length " + std::to_string(mask.size()) + " does not match dimension " +
                         std::to_string(dim));
  for (auto b : mask)
    if (b > 1) throw InvalidParameters("mask entries must be 0 or 1");
}

// Largest answer a mask can produce under the given bounds.
inline int max_answer(const BoundsVector& bounds, const Mask& mask) {
  int s = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) s += bounds[i];
  return s;
}

class ReducedInstance {
 public:
  explicit ReducedInstance(BoundsVector bounds) : bounds_(std::move(bounds)) {}

  ReducedInstance(BoundsVector bounds, std::vector<QueryRecord> history) : bounds_(std::move(bounds)) {
    for (auto& r : history) add(std::move(r));
  }

  void add(QueryRecord record) {
    check_mask(record.mask, bounds_.dim());
    if (record.answer < 0 || record.answer > max_answer(bounds_, record.mask))
      throw InconsistentHistory("answer " + std::to_string(record.answer) + " exceeds the mask's bound");
    history_.push_back(std::move(record));
  }

  const BoundsVector& bounds() const { return bounds_; }
  const std::vector<QueryRecord>& history() const { return history_; }
  std::size_t dim() const { return bounds_.dim(); }

 private:
  BoundsVector bounds_;
  std::vector<QueryRecord> history_;
};

// ---------------------------------------------------------------------------
// Operations

inline int inner_answer(std::span<const int> hidden, const Mask& mask) {
  if (hidden.size() != mask.size())
    throw DimensionError("hidden vector of length " + std::to_string(hidden.size()) + " queried with mask of length " +
                         std::to_string(mask.size()));
  int s = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) s += hidden[i];
  return s;
}

inline int inner_answer(const HiddenVector& hidden, const Mask& mask) {
  return inner_answer(std::span<const int>(hidden.v), mask);
}

// Number of marked items in a draw of `draws` items without replacement from
// a population of `size` items of which `marked` are marked.
inline int sample_hypergeometric(int size, int marked, int draws, Rng& rng) {
  int hits = 0;
  int remaining = size;
  int remaining_marked = marked;
  for (int j = 0; j < draws; ++j) {
    std::uniform_int_distribution<int> pick(0, remaining - 1);
    if (pick(rng) < remaining_marked) {
      ++hits;
      --remaining_marked;
    }
    --remaining;
  }
  return hits;
}

// Left-half defective counts of groups that were split. Coordinate i holds
// how many of the u_i defectives of a group of group_sizes[i] items fall into
// its first left_sizes[i] items.
inline HiddenVector sample_hidden_split(const BoundsVector& bounds, std::span<const int> group_sizes,
                                        std::span<const int> left_sizes, Rng& rng) {
  const std::size_t d = bounds.dim();
  if (group_sizes.size() != d || left_sizes.size() != d)
    throw DimensionError("group sizes must match the bounds dimension");
  HiddenVector h{std::vector<int>(d, 0)};
  for (std::size_t i = 0; i < d; ++i) {
    if (bounds[i] > group_sizes[i])
      throw InfeasibleInstance("group " + std::to_string(i) + " holds " + std::to_string(bounds[i]) +
                               " defectives but only " + std::to_string(group_sizes[i]) + " items");
    if (left_sizes[i] <= 0 || left_sizes[i] > group_sizes[i])
      throw InvalidParameters("left size must lie in (0, group size]");
    // Place the u_i defectives among the group's positions; count those landing left.
    h.v[i] = sample_hypergeometric(group_sizes[i], left_sizes[i], bounds[i], rng);
  }
  return h;
}

// Large-population limit of sample_hidden_split with equal halves.
inline HiddenVector sample_hidden_binomial(const BoundsVector& bounds, Rng& rng) {
  HiddenVector h{std::vector<int>(bounds.dim(), 0)};
  for (std::size_t i = 0; i < bounds.dim(); ++i) {
    std::binomial_distribution<int> coin(bounds[i], 0.5);
    h.v[i] = coin(rng);
  }
  return h;
}

// Seeds a per-trial generator from a run seed and a trial index so that
// results do not depend on how trials are spread over workers.
inline Rng trial_rng(std::uint64_t seed, std::uint64_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
  return Rng(seq);
}

}  // namespace qgt
