#pragma once

// End-to-end QGT solver by binary splitting. The n items are cut into k
// groups whose defective counts are measured directly; afterwards every stage
// halves each group that still holds defectives, recovers the left-half
// counts as a reduced integer-vector problem and infers the right halves by
// subtraction, until every defective sits in a group of one item.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "qgt/core.hpp"
#include "qgt/strategies.hpp"

namespace qgt {

struct Group {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  int count = 0;

  std::size_t size() const { return end - begin; }
  std::size_t left_size() const { return (size() + 1) / 2; }
  std::size_t mid() const { return begin + left_size(); }

  friend bool operator==(const Group&, const Group&) = default;
};

struct GroupState {
  std::vector<Group> groups;
  std::vector<std::size_t> located;  // items known to be defective
  int stage = 0;

  int total_count() const {
    int s = static_cast<int>(located.size());
    for (const auto& g : groups) s += g.count;
    return s;
  }

  bool done() const { return groups.empty(); }
};

struct QueryLog {
  int initial_queries = 0;
  std::vector<int> per_stage;
  int total = 0;

  void add_stage(int queries) {
    per_stage.push_back(queries);
    total += queries;
  }
};

struct ItemRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// The physical test: a pool is a union of item ranges and its outcome is the
// number of defectives it contains. Every call is one query.
class PooledTester {
 public:
  explicit PooledTester(const IncidenceVector& x) : x_(x) {}

  int test(std::span<const ItemRange> pool) {
    ++queries_;
    int c = 0;
    for (const auto& r : pool) {
      if (r.end > x_.n() || r.begin > r.end) throw InvalidParameters("pool range outside the item set");
      c += x_.count_range(r.begin, r.end);
    }
    return c;
  }

  int queries() const { return queries_; }

 private:
  const IncidenceVector& x_;
  int queries_ = 0;
};

struct DriverConfig {
  bool prune_saturated = false;
  bool shuffle_coordinates = true;
  int max_steps = 0;  // per stage; 0 lets the episode run until identified
  StrategyOptions strategy_options;
  bool keep_trajectories = false;
};

inline GroupState initial_partition(std::size_t n, std::size_t k) {
  if (k == 0 || k > n) throw InvalidParameters("initial partition needs 1 <= k <= n");
  GroupState st;
  const std::size_t base = n / k;
  const std::size_t extra = n % k;
  std::size_t at = 0;
  for (std::size_t g = 0; g < k; ++g) {
    const std::size_t len = base + (g < extra ? 1 : 0);
    st.groups.push_back(Group{at, at + len, 0});
    at += len;
  }
  return st;
}

// One query per group; returns the defective count of each.
inline std::vector<int> measure_groups(PooledTester& tester, const GroupState& state) {
  std::vector<int> counts;
  counts.reserve(state.groups.size());
  for (const auto& g : state.groups) {
    const ItemRange r{g.begin, g.end};
    counts.push_back(tester.test(std::span<const ItemRange>(&r, 1)));
  }
  return counts;
}

inline std::vector<int> measure_groups(const IncidenceVector& x, const GroupState& state) {
  PooledTester tester(x);
  return measure_groups(tester, state);
}

// Moves single-item groups into the located list and drops empty groups.
inline void settle_groups(GroupState& state) {
  std::vector<Group> keep;
  for (const auto& g : state.groups) {
    if (g.count < 0 || static_cast<std::size_t>(g.count) > g.size())
      throw CorruptedState("group count outside [0, group size]");
    if (g.count == 0) continue;
    if (g.size() == 1) {
      state.located.push_back(g.begin);
      continue;
    }
    keep.push_back(g);
  }
  state.groups = std::move(keep);
}

struct StageResult {
  GroupState next;
  int queries = 0;
  Trajectory trajectory;
};

// Ground-truth left-half counts; only used to label the episode target and
// to verify what the queries recovered.
inline HiddenVector true_left_counts(const IncidenceVector& x, std::span<const Group> active) {
  HiddenVector h;
  for (const auto& g : active) h.v.push_back(x.count_range(g.begin, g.mid()));
  return h;
}

inline StageResult run_stage(PooledTester& tester, const IncidenceVector& x, const GroupState& state,
                             QueryPolicy& policy, std::size_t k, Rng& rng, const DriverConfig& config = {}) {
  StageResult out;
  out.next.located = state.located;
  out.next.stage = state.stage + 1;

  std::vector<Group> active;
  for (const auto& g : state.groups) {
    if (g.count <= 0 || g.size() < 2) throw CorruptedState("stage input holds a settled group");
    const bool saturated = static_cast<std::size_t>(g.count) == g.size();
    if (saturated && config.prune_saturated) {
      out.next.groups.push_back(Group{g.begin, g.mid(), static_cast<int>(g.left_size())});
      out.next.groups.push_back(Group{g.mid(), g.end, g.count - static_cast<int>(g.left_size())});
      continue;
    }
    active.push_back(g);
  }
  if (active.size() > k) throw CorruptedState("more active groups than defectives");
  if (config.shuffle_coordinates) std::shuffle(active.begin(), active.end(), rng);

  if (!active.empty()) {
    std::vector<int> u;
    for (const auto& g : active) u.push_back(g.count);
    const BoundsVector bounds(u);

    const int before = tester.queries();
    EpisodeOptions opts;
    opts.max_steps = config.max_steps > 0 ? config.max_steps : std::numeric_limits<int>::max();
    EpisodeLayout layout = EpisodeLayout::identity(active.size());
    layout.k = static_cast<int>(k);
    opts.layout = layout;
    opts.answerer = [&](const Mask& mask) {
      std::vector<ItemRange> pool;
      for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) pool.push_back(ItemRange{active[i].begin, active[i].mid()});
      return tester.test(pool);
    };

    out.trajectory = run_episode(bounds, true_left_counts(x, active), policy, rng, opts);
    out.queries = tester.queries() - before;
    if (out.trajectory.failed()) throw AgentFailure(out.trajectory.failure);
    if (!out.trajectory.solved) throw CorruptedState("stage ended before the left-half counts were identified");

    for (std::size_t i = 0; i < active.size(); ++i) {
      const auto& g = active[i];
      const int left = out.trajectory.recovered[i];
      const int right = g.count - left;
      if (right < 0 || static_cast<std::size_t>(right) > g.size() - g.left_size() ||
          static_cast<std::size_t>(left) > g.left_size())
        throw CorruptedState("recovered half counts are inconsistent with the group count");
      out.next.groups.push_back(Group{g.begin, g.mid(), left});
      out.next.groups.push_back(Group{g.mid(), g.end, right});
    }
  }

  std::sort(out.next.groups.begin(), out.next.groups.end(),
            [](const Group& a, const Group& b) { return a.begin < b.begin; });
  settle_groups(out.next);
  if (out.next.total_count() != state.total_count()) throw CorruptedState("defective count not conserved");
  return out;
}

struct SolveResult {
  IncidenceVector recovered;
  QueryLog log;
  std::vector<int> stage_dims;
  std::vector<Trajectory> trajectories;  // filled when keep_trajectories is set
};

inline SolveResult solve_qgt(const IncidenceVector& x, QueryPolicy& policy, Rng& rng, const DriverConfig& config = {}) {
  const std::size_t n = x.n();
  const std::size_t k = x.k();
  PooledTester tester(x);

  GroupState state = initial_partition(n, k);
  const auto counts = measure_groups(tester, state);
  for (std::size_t i = 0; i < counts.size(); ++i) state.groups[i].count = counts[i];

  SolveResult res;
  res.log.initial_queries = tester.queries();
  res.log.total = res.log.initial_queries;
  settle_groups(state);

  while (!state.done()) {
    StageResult stage = run_stage(tester, x, state, policy, k, rng, config);
    res.log.add_stage(stage.queries);
    res.stage_dims.push_back(static_cast<int>(stage.trajectory.bounds.dim()));
    if (config.keep_trajectories && stage.trajectory.bounds.dim() > 0) res.trajectories.push_back(stage.trajectory);
    state = std::move(stage.next);
  }

  if (res.log.total != tester.queries()) throw CorruptedState("query log disagrees with the tester");
  std::vector<std::uint8_t> bits(n, 0);
  for (auto i : state.located) bits[i] = 1;
  res.recovered = IncidenceVector(std::move(bits));
  return res;
}

inline SolveResult solve_qgt(const IncidenceVector& x, const StrategyKind& strategy, Rng& rng,
                             const DriverConfig& config = {}) {
  auto policy = make_policy(strategy, config.strategy_options);
  return solve_qgt(x, *policy, rng, config);
}

}  // namespace qgt
