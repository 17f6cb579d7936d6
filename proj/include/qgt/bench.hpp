#pragma once

// Query-count bounds and Monte Carlo benchmarks of the query strategies, both
// on standalone reduced instances (one splitting stage) and end to end.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qgt/bridge.hpp"
#include "qgt/core.hpp"
#include "qgt/dataset.hpp"
#include "qgt/parallel.hpp"
#include "qgt/splitting.hpp"
#include "qgt/strategies.hpp"

namespace qgt {

class RecoveryMismatch : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Bounds (all logarithms base 2)

// Non-adaptive lower bound (2k / log k) log(n / k).
inline double bound_m0(double n, double k) {
  if (k < 2) throw InvalidParameters("m0 is undefined for k < 2 (log k = 0)");
  if (n <= k) throw InvalidParameters("m0 needs n > k");
  return 2.0 * k / std::log2(k) * std::log2(n / k);
}

inline double bound_adaptive(double n, double k) { return bound_m0(n, k) / 2.0; }

inline double per_stage_lower_bound(int k) {
  if (k < 1) throw InvalidParameters("k must be at least 1");
  return k / std::log2(k + 1.0);
}

inline double baseline_per_stage(int k) { return 2.0 * per_stage_lower_bound(k); }

// Average-case counting floor for uniform x: log C(n, k) bits of uncertainty,
// at most log(k + 1) bits per answer.
inline double counting_lower_bound(double n, double k) {
  const double log2_binom = (std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1)) / std::log(2.0);
  return log2_binom / std::log2(k + 1);
}

inline double round2(double x) { return std::round(x * 100.0) / 100.0; }

// ---------------------------------------------------------------------------
// Statistics

struct RunningStats {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }

  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double stddev() const { return std::sqrt(variance()); }
  double ci95() const { return n > 0 ? 1.96 * stddev() / std::sqrt(static_cast<double>(n)) : 0.0; }
};

// ---------------------------------------------------------------------------
// Reports

struct BoundsRow {
  std::optional<double> m0;
  std::optional<double> adaptive_lb;
  double per_stage_lb = 0.0;
  double baseline = 0.0;
};

inline BoundsRow bounds_row(int k, std::optional<std::size_t> n = std::nullopt) {
  BoundsRow b;
  b.per_stage_lb = per_stage_lower_bound(k);
  b.baseline = baseline_per_stage(k);
  if (n && k >= 2 && *n > static_cast<std::size_t>(k)) {
    b.m0 = bound_m0(static_cast<double>(*n), k);
    b.adaptive_lb = *b.m0 / 2.0;
  }
  return b;
}

struct BenchReport {
  std::string strategy;
  int k = 0;
  std::optional<std::size_t> n;
  std::size_t trials = 0;
  double mean_queries = 0.0;
  double stddev = 0.0;
  double ci95 = 0.0;
  std::vector<double> per_stage_means;
  BoundsRow bounds;
  double solve_rate = 0.0;
  std::size_t failures = 0;
  bool degraded = false;
};

inline nlohmann::json to_json(const BenchReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j = {
      {"strategy", r.strategy},
      {"k", r.k},
      {"n", r.n ? nlohmann::json(*r.n) : nlohmann::json(nullptr)},
      {"trials", r.trials},
      {"mean_queries", r.mean_queries},
      {"stddev", r.stddev},
      {"ci95", r.ci95},
      {"per_stage_means", r.per_stage_means},
      {"bounds",
       {{"m0", opt(r.bounds.m0)},
        {"adaptive_lb", opt(r.bounds.adaptive_lb)},
        {"per_stage_lb", r.bounds.per_stage_lb},
        {"baseline", r.bounds.baseline}}},
      {"solve_rate", r.solve_rate},
      {"failures", r.failures},
      {"degraded", r.degraded},
  };
  return j;
}

// ---------------------------------------------------------------------------
// Runs

struct BenchOptions {
  unsigned workers = 1;
  int max_steps = 256;  // per episode; generous so Random rarely stops early
  StrategyOptions strategy_options;
  DriverConfig driver;
  std::optional<std::string> agent_cmd;  // required for StrategyKind::External
  BridgeOptions bridge;
  double degraded_failure_rate = 0.01;
};

namespace detail {

inline std::vector<std::unique_ptr<QueryPolicy>> make_worker_policies(const StrategyKind& strategy,
                                                                      const BenchOptions& opts, unsigned workers) {
  std::vector<std::unique_ptr<QueryPolicy>> out;
  for (unsigned w = 0; w < workers; ++w) {
    if (strategy.id == StrategyId::External) {
      if (!opts.agent_cmd) throw InvalidParameters("external strategy needs an agent command");
      out.push_back(std::make_unique<ExternalPolicy>(child_process_factory(*opts.agent_cmd), opts.bridge));
    } else {
      out.push_back(make_policy(strategy, opts.strategy_options));
    }
  }
  return out;
}

}  // namespace detail

inline BenchReport bench_per_stage(int k, const StrategyKind& strategy, std::size_t trials, std::uint64_t seed,
                                   const BenchOptions& opts = {}) {
  if (trials < 1) throw InvalidParameters("need at least one trial");
  const unsigned workers = std::max(1u, opts.workers);
  auto policies = detail::make_worker_policies(strategy, opts, workers);

  std::vector<int> lengths(trials, 0);
  std::vector<std::uint8_t> solved(trials, 0);
  std::vector<std::uint8_t> failed(trials, 0);
  parallel_for(trials, workers, [&](unsigned w, std::size_t i) {
    Rng rng = trial_rng(seed, i);
    const auto inst = sample_standalone_instance(k, rng);
    EpisodeOptions eo;
    eo.max_steps = opts.max_steps;
    eo.layout = inst.layout;
    const auto traj = run_episode(inst.bounds, inst.hidden, *policies[w], rng, eo);
    lengths[i] = static_cast<int>(traj.length());
    solved[i] = traj.solved;
    failed[i] = traj.failed();
  });
  for (auto& p : policies)
    if (auto* ext = dynamic_cast<ExternalPolicy*>(p.get())) ext->close();

  BenchReport r;
  r.strategy = strategy.name();
  r.k = k;
  r.trials = trials;
  r.bounds = bounds_row(k);
  RunningStats stats;
  std::size_t n_solved = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    if (failed[i]) {
      ++r.failures;
      continue;
    }
    stats.add(lengths[i]);
    n_solved += solved[i];
  }
  r.mean_queries = stats.mean;
  r.stddev = stats.stddev();
  r.ci95 = stats.ci95();
  r.solve_rate = static_cast<double>(n_solved) / static_cast<double>(trials);
  r.degraded = static_cast<double>(r.failures) > opts.degraded_failure_rate * static_cast<double>(trials);
  return r;
}

inline BenchReport bench_end_to_end(std::size_t n, int k, const StrategyKind& strategy, std::size_t trials,
                                    std::uint64_t seed, const BenchOptions& opts = {}) {
  if (trials < 1) throw InvalidParameters("need at least one trial");
  if (k < 1 || n < static_cast<std::size_t>(k)) throw InvalidParameters("need 1 <= k <= n");
  const unsigned workers = std::max(1u, opts.workers);
  auto policies = detail::make_worker_policies(strategy, opts, workers);

  std::vector<int> totals(trials, 0);
  std::vector<std::vector<int>> stages(trials);
  std::vector<std::uint8_t> failed(trials, 0);
  parallel_for(trials, workers, [&](unsigned w, std::size_t i) {
    Rng rng = trial_rng(seed, i);
    const auto x = IncidenceVector::sample(n, static_cast<std::size_t>(k), rng);
    try {
      const auto res = solve_qgt(x, *policies[w], rng, opts.driver);
      if (!(res.recovered == x))
        throw RecoveryMismatch("trial " + std::to_string(i) + " recovered the wrong defective set");
      totals[i] = res.log.total;
      stages[i] = res.log.per_stage;
    } catch (const AgentFailure&) {
      failed[i] = 1;
    }
  });
  for (auto& p : policies)
    if (auto* ext = dynamic_cast<ExternalPolicy*>(p.get())) ext->close();

  BenchReport r;
  r.strategy = strategy.name();
  r.k = k;
  r.n = n;
  r.trials = trials;
  r.bounds = bounds_row(k, n);
  RunningStats stats;
  std::vector<double> stage_sum;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    if (failed[i]) {
      ++r.failures;
      continue;
    }
    ++ok;
    stats.add(totals[i]);
    if (stages[i].size() > stage_sum.size()) stage_sum.resize(stages[i].size(), 0.0);
    for (std::size_t s = 0; s < stages[i].size(); ++s) stage_sum[s] += stages[i][s];
  }
  for (double s : stage_sum) r.per_stage_means.push_back(ok ? s / static_cast<double>(ok) : 0.0);
  r.mean_queries = stats.mean;
  r.stddev = stats.stddev();
  r.ci95 = stats.ci95();
  r.solve_rate = static_cast<double>(ok) / static_cast<double>(trials);
  r.degraded = static_cast<double>(r.failures) > opts.degraded_failure_rate * static_cast<double>(trials);
  return r;
}

}  // namespace qgt
