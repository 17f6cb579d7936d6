#pragma once

// Adaptive query policies for the reduced recovery problem and the episode
// runner that plays a policy against an instance until identification.

#include <bit>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qgt/core.hpp"
#include "qgt/feasibility.hpp"
#include "qgt/rtg.hpp"

namespace qgt {

enum class StrategyId { Random, CovarianceMax, EntropyMax, External };

struct StrategyKind {
  StrategyId id = StrategyId::EntropyMax;
  std::string label;  // External only

  static StrategyKind random() { return {StrategyId::Random, {}}; }
  static StrategyKind covariance() { return {StrategyId::CovarianceMax, {}}; }
  static StrategyKind entropy() { return {StrategyId::EntropyMax, {}}; }
  static StrategyKind external(std::string label) { return {StrategyId::External, std::move(label)}; }

  std::string name() const {
    switch (id) {
      case StrategyId::Random: return "random";
      case StrategyId::CovarianceMax: return "covariance";
      case StrategyId::EntropyMax: return "entropy";
      case StrategyId::External: return label.empty() ? "external" : "external:" + label;
    }
    return "unknown";
  }

  static StrategyKind parse(std::string_view s) {
    if (s == "random") return random();
    if (s == "covariance" || s == "cov") return covariance();
    if (s == "entropy" || s == "ent") return entropy();
    if (s == "external") return external({});
    if (s.starts_with("external:")) return external(std::string(s.substr(9)));
    throw InvalidParameters("unknown strategy '" + std::string(s) + "'");
  }

  friend bool operator==(const StrategyKind&, const StrategyKind&) = default;
};

enum class CovarianceMode {
  Centered,  // covariance of the feasible rows about their mean
  Gram,      // N^T N without centering
};

struct StrategyOptions {
  bool random_exclude_zero = false;
  CovarianceMode covariance_mode = CovarianceMode::Centered;
};

// Where each reduced coordinate sits in the fixed-width k-slot vector seen by
// external agents and written to datasets. Slots without a coordinate hold a
// zero bound and a zero action bit.
struct EpisodeLayout {
  int k = 0;
  std::vector<int> positions;

  static EpisodeLayout identity(std::size_t d) {
    EpisodeLayout l{static_cast<int>(d), std::vector<int>(d)};
    for (std::size_t i = 0; i < d; ++i) l.positions[i] = static_cast<int>(i);
    return l;
  }

  std::size_t dim() const { return positions.size(); }

  template <typename T>
  std::vector<T> pad(const std::vector<T>& reduced) const {
    if (reduced.size() != positions.size()) throw DimensionError("cannot pad: dimension mismatch");
    std::vector<T> out(static_cast<std::size_t>(k), T{0});
    for (std::size_t i = 0; i < positions.size(); ++i) out[static_cast<std::size_t>(positions[i])] = reduced[i];
    return out;
  }

  template <typename T>
  std::vector<T> project(const std::vector<T>& padded) const {
    if (padded.size() != static_cast<std::size_t>(k)) throw DimensionError("cannot project: expected length k");
    std::vector<T> out(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) out[i] = padded[static_cast<std::size_t>(positions[i])];
    return out;
  }

  void validate() const {
    std::vector<bool> seen(static_cast<std::size_t>(std::max(k, 0)), false);
    for (int p : positions) {
      if (p < 0 || p >= k || seen[static_cast<std::size_t>(p)]) throw InvalidParameters("invalid episode layout");
      seen[static_cast<std::size_t>(p)] = true;
    }
  }

  friend bool operator==(const EpisodeLayout&, const EpisodeLayout&) = default;
};

struct Step {
  int rtg = 0;
  int state = 0;
  Mask action;

  friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
  BoundsVector bounds;
  EpisodeLayout layout;
  std::vector<Step> steps;
  HiddenVector target;
  HiddenVector recovered;  // the surviving feasible vector when solved
  bool solved = false;
  std::string failure;  // set when an external agent broke the episode

  bool failed() const { return !failure.empty(); }
  std::size_t length() const { return steps.size(); }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// Raised by policies whose query source is outside the process (agent gone,
// malformed reply, timeout). run_episode turns it into a failed trajectory.
class AgentFailure : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Mask helpers. Candidate masks are enumerated as integers whose most
// significant of d bits is coordinate 0, so ascending integers are ascending
// lexicographic masks.

inline Mask mask_from_bits(std::uint32_t bits, std::size_t d) {
  Mask m(d, 0);
  for (std::size_t i = 0; i < d; ++i) m[i] = static_cast<std::uint8_t>((bits >> (d - 1 - i)) & 1u);
  return m;
}

inline std::uint32_t bits_from_mask(const Mask& m) {
  std::uint32_t b = 0;
  for (auto x : m) b = (b << 1) | (x ? 1u : 0u);
  return b;
}

inline constexpr std::size_t kMaxExhaustiveDim = 20;

inline void check_search_dim(std::size_t d) {
  if (d == 0) throw InvalidParameters("cannot choose a query over zero coordinates");
  if (d > kMaxExhaustiveDim) throw CapacityExceeded("exhaustive mask search limited to 20 coordinates");
}

// Ties closer than this are treated as equal so that floating noise never
// decides between symmetric masks.
inline constexpr double kScoreTolerance = 1e-9;

// ---------------------------------------------------------------------------
// Strategy primitives

inline Mask random_query(std::size_t d, Rng& rng, bool exclude_zero = false) {
  check_search_dim(d);
  const std::uint32_t hi = (std::uint32_t{1} << d) - 1;
  std::uniform_int_distribution<std::uint32_t> pick(exclude_zero ? 1u : 0u, hi);
  return mask_from_bits(pick(rng), d);
}

inline Mask covariance_query(const FeasibleSet& fs, CovarianceMode mode = CovarianceMode::Centered) {
  if (fs.empty()) throw InconsistentHistory("covariance query on an empty feasible set");
  if (is_identified(fs)) throw AlreadyIdentified("feasible set is a singleton; no query needed");
  const std::size_t d = fs.dim();
  check_search_dim(d);

  const Moments centered = centered_covariance(fs);
  const Moments scores = mode == CovarianceMode::Centered ? centered : gram_matrix(fs);

  std::uint32_t best = 0;
  double best_score = -1.0;
  const std::uint32_t end = std::uint32_t{1} << d;
  for (std::uint32_t bits = 1; bits < end; ++bits) {
    const Mask m = mask_from_bits(bits, d);
    // A mask whose answer cannot vary tells nothing; only reachable in Gram mode.
    if (mode == CovarianceMode::Gram && centered.quadratic_form(m) <= kScoreTolerance) continue;
    const double s = scores.quadratic_form(m);
    if (s > best_score + kScoreTolerance) {
      best_score = s;
      best = bits;
    }
  }
  return mask_from_bits(best, d);
}

// Entropy (bits) of the answer to every nonzero mask, indexed by mask bits.
// Answers for all masks of one row come from a subset-sum table so the whole
// sweep costs O(|fs| * 2^d).
inline std::vector<double> answer_entropies(const FeasibleSet& fs) {
  const std::size_t d = fs.dim();
  check_search_dim(d);
  const std::size_t masks = std::size_t{1} << d;

  int max_sum = 0;
  for (std::size_t r = 0; r < fs.size(); ++r) {
    int s = 0;
    for (int x : fs.row(r)) s += x;
    max_sum = std::max(max_sum, s);
  }
  const std::size_t width = static_cast<std::size_t>(max_sum) + 1;

  std::vector<std::uint32_t> counts(masks * width, 0);
  std::vector<int> sums(masks, 0);
  for (std::size_t r = 0; r < fs.size(); ++r) {
    auto v = fs.row(r);
    for (std::size_t bits = 1; bits < masks; ++bits) {
      const std::size_t low = bits & (~bits + 1);
      const auto b = static_cast<std::size_t>(std::countr_zero(bits));
      sums[bits] = sums[bits ^ low] + v[d - 1 - b];
      ++counts[bits * width + static_cast<std::size_t>(sums[bits])];
    }
  }

  const double n = static_cast<double>(fs.size());
  const double log_n = std::log2(n);
  std::vector<double> h(masks, 0.0);
  for (std::size_t bits = 1; bits < masks; ++bits) {
    double acc = 0.0;
    for (std::size_t a = 0; a < width; ++a) {
      const double c = counts[bits * width + a];
      if (c > 1.0) acc += c * std::log2(c);
    }
    h[bits] = log_n - acc / n;
  }
  return h;
}

inline Mask entropy_query(const FeasibleSet& fs) {
  if (fs.empty()) throw InconsistentHistory("entropy query on an empty feasible set");
  if (is_identified(fs)) throw AlreadyIdentified("feasible set is a singleton; no query needed");
  const std::size_t d = fs.dim();
  const auto h = answer_entropies(fs);
  std::uint32_t best = 0;
  double best_h = -1.0;
  for (std::uint32_t bits = 1; bits < h.size(); ++bits) {
    if (h[bits] > best_h + kScoreTolerance) {
      best_h = h[bits];
      best = bits;
    }
  }
  return mask_from_bits(best, d);
}

// ---------------------------------------------------------------------------
// Policies

// What a policy may look at when choosing the next query.
struct PolicyView {
  const BoundsVector& bounds;
  const EpisodeLayout& layout;
  const FeasibleSet& feasible;
  const std::vector<QueryRecord>& history;
};

class QueryPolicy {
 public:
  virtual ~QueryPolicy() = default;
  virtual void begin(const BoundsVector& /*bounds*/, const EpisodeLayout& /*layout*/) {}
  virtual Mask next_query(const PolicyView& view, Rng& rng) = 0;
  virtual void finish(const PolicyView& /*view*/, bool /*solved*/) {}
};

class RandomPolicy final : public QueryPolicy {
 public:
  explicit RandomPolicy(bool exclude_zero = false) : exclude_zero_(exclude_zero) {}
  Mask next_query(const PolicyView& view, Rng& rng) override {
    return random_query(view.bounds.dim(), rng, exclude_zero_);
  }

 private:
  bool exclude_zero_;
};

class CovariancePolicy final : public QueryPolicy {
 public:
  explicit CovariancePolicy(CovarianceMode mode = CovarianceMode::Centered) : mode_(mode) {}
  Mask next_query(const PolicyView& view, Rng&) override { return covariance_query(view.feasible, mode_); }

 private:
  CovarianceMode mode_;
};

class EntropyPolicy final : public QueryPolicy {
 public:
  Mask next_query(const PolicyView& view, Rng&) override { return entropy_query(view.feasible); }
};

inline std::unique_ptr<QueryPolicy> make_policy(const StrategyKind& kind, const StrategyOptions& opts = {}) {
  switch (kind.id) {
    case StrategyId::Random: return std::make_unique<RandomPolicy>(opts.random_exclude_zero);
    case StrategyId::CovarianceMax: return std::make_unique<CovariancePolicy>(opts.covariance_mode);
    case StrategyId::EntropyMax: return std::make_unique<EntropyPolicy>();
    case StrategyId::External: break;
  }
  throw InvalidParameters("external strategy requires a connected agent-bridge session");
}

// ---------------------------------------------------------------------------
// Episode runner

using Answerer = std::function<int(const Mask&)>;

struct EpisodeOptions {
  int max_steps = 0;                // 0 selects 2k
  std::optional<EpisodeLayout> layout;
  Answerer answerer;                // defaults to inner_answer against the target
  std::uint64_t enumeration_cap = kDefaultEnumerationCap;
};

inline Trajectory run_episode(const BoundsVector& bounds, const HiddenVector& hidden, QueryPolicy& policy, Rng& rng,
                              const EpisodeOptions& opts = {}) {
  if (!hidden.respects(bounds)) throw InvalidParameters("hidden vector violates its bounds");
  Trajectory traj;
  traj.bounds = bounds;
  traj.layout = opts.layout ? *opts.layout : EpisodeLayout::identity(bounds.dim());
  if (traj.layout.dim() != bounds.dim()) throw DimensionError("layout does not match bounds dimension");
  traj.layout.validate();
  traj.target = hidden;

  const int max_steps = opts.max_steps > 0 ? opts.max_steps : 2 * traj.layout.k;
  FeasibilityOracle oracle(bounds, opts.enumeration_cap);
  std::vector<QueryRecord> history;
  auto view = [&]() { return PolicyView{bounds, traj.layout, oracle.feasible(), history}; };

  try {
    policy.begin(bounds, traj.layout);
    while (!oracle.identified() && static_cast<int>(traj.steps.size()) < max_steps) {
      Mask mask = policy.next_query(view(), rng);
      check_mask(mask, bounds.dim());
      const int answer = opts.answerer ? opts.answerer(mask) : inner_answer(hidden, mask);
      const int state = history.empty() ? traj.layout.k : history.back().answer;
      traj.steps.push_back(Step{0, state, mask});
      history.push_back(QueryRecord{mask, answer});
      oracle.add(history.back());
    }
    policy.finish(view(), oracle.identified());
  } catch (const AgentFailure& e) {
    traj.failure = e.what();
  }

  traj.solved = oracle.identified();
  if (traj.solved) {
    traj.recovered = oracle.feasible().vector(0);
    if (traj.recovered != hidden) throw CorruptedState("identified vector differs from the hidden target");
  }

  const auto rtg = compute_rtg(static_cast<int>(traj.steps.size()));
  for (std::size_t t = 0; t < traj.steps.size(); ++t) traj.steps[t].rtg = rtg[t];
  return traj;
}

inline Trajectory run_episode(const BoundsVector& bounds, const HiddenVector& hidden, const StrategyKind& strategy,
                              Rng& rng, const EpisodeOptions& opts = {}, const StrategyOptions& sopts = {}) {
  auto policy = make_policy(strategy, sopts);
  return run_episode(bounds, hidden, *policy, rng, opts);
}

}  // namespace qgt
