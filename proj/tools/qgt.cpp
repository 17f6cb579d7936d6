// qgt: bounds, benchmarks, dataset export and single-instance traces for
// adaptive quantitative group testing.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "qgt/qgt.hpp"

namespace {

using nlohmann::json;

struct CommonStrategyFlags {
  std::string strategy = "entropy";
  bool exclude_zero = false;
  bool gram = false;

  qgt::StrategyOptions options() const {
    qgt::StrategyOptions o;
    o.random_exclude_zero = exclude_zero;
    o.covariance_mode = gram ? qgt::CovarianceMode::Gram : qgt::CovarianceMode::Centered;
    return o;
  }
};

void add_strategy_flags(CLI::App* cmd, CommonStrategyFlags& f) {
  cmd->add_option("--strategy", f.strategy, "random | covariance | entropy | external")->capture_default_str();
  cmd->add_flag("--exclude-zero", f.exclude_zero, "random strategy never draws the empty pool");
  cmd->add_flag("--gram", f.gram, "covariance strategy scores with the uncentered N^T N");
}

std::string fmt2(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

int cmd_bounds(std::optional<std::size_t> n, std::optional<int> k, bool table, bool as_json) {
  json out = json::array();
  auto row = [&](int kk) {
    json r = {{"k", kk},
              {"per_stage_lb", qgt::round2(qgt::per_stage_lower_bound(kk))},
              {"baseline", qgt::round2(qgt::baseline_per_stage(kk))}};
    if (n) {
      r["n"] = *n;
      if (kk >= 2 && *n > static_cast<std::size_t>(kk)) {
        r["m0"] = qgt::bound_m0(static_cast<double>(*n), kk);
        r["adaptive_lb"] = qgt::bound_adaptive(static_cast<double>(*n), kk);
        r["counting_lb"] = qgt::counting_lower_bound(static_cast<double>(*n), kk);
      } else {
        r["m0"] = nullptr;
        r["adaptive_lb"] = nullptr;
      }
    }
    out.push_back(r);
  };
  if (table || !k) {
    for (int kk = 2; kk <= 8; ++kk) row(kk);
  } else {
    row(*k);
  }
  if (as_json) {
    std::cout << (out.size() == 1 ? out[0] : out).dump(2) << '\n';
    return 0;
  }
  std::printf("%4s %14s %10s", "k", "per-stage LB", "baseline");
  if (n) std::printf(" %10s %12s", "m0", "adaptive LB");
  std::printf("\n");
  for (const auto& r : out) {
    std::printf("%4d %14s %10s", r["k"].get<int>(), fmt2(r["per_stage_lb"]).c_str(), fmt2(r["baseline"]).c_str());
    if (n) {
      if (r["m0"].is_null())
        std::printf(" %10s %12s", "undefined", "undefined");
      else
        std::printf(" %10s %12s", fmt2(r["m0"]).c_str(), fmt2(r["adaptive_lb"]).c_str());
    }
    std::printf("\n");
  }
  return 0;
}

void print_report(const qgt::BenchReport& r, bool as_json) {
  if (as_json) {
    std::cout << qgt::to_json(r).dump(2) << '\n';
    return;
  }
  std::printf("strategy      %s\n", r.strategy.c_str());
  std::printf("k             %d\n", r.k);
  if (r.n) std::printf("n             %zu\n", *r.n);
  std::printf("trials        %zu (failures %zu%s)\n", r.trials, r.failures, r.degraded ? ", DEGRADED" : "");
  std::printf("mean queries  %.4f +/- %.4f (sd %.4f)\n", r.mean_queries, r.ci95, r.stddev);
  std::printf("solve rate    %.4f\n", r.solve_rate);
  if (!r.per_stage_means.empty()) {
    std::printf("per stage    ");
    for (double m : r.per_stage_means) std::printf(" %.3f", m);
    std::printf("\n");
  }
  std::printf("per-stage LB  %.2f   baseline %.2f\n", r.bounds.per_stage_lb, r.bounds.baseline);
  if (r.bounds.m0) std::printf("m0            %.2f   adaptive LB %.2f\n", *r.bounds.m0, *r.bounds.adaptive_lb);
}

json trajectory_json(const qgt::Trajectory& t) {
  json steps = json::array();
  for (const auto& s : t.steps) steps.push_back({{"rtg", s.rtg}, {"state", s.state}, {"action", s.action}});
  return {{"bounds", t.bounds.values()}, {"steps", steps}, {"target", t.target.v}, {"solved", t.solved}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive quantitative group testing workbench"};
  app.require_subcommand(1);

  // bounds
  auto* bounds = app.add_subcommand("bounds", "Information-theoretic bounds and per-stage reference rows");
  std::optional<std::size_t> b_n;
  std::optional<int> b_k;
  bool b_table = false;
  bool b_json = false;
  bounds->add_option("--n", b_n, "number of items");
  bounds->add_option("--k", b_k, "number of defectives");
  bounds->add_flag("--table", b_table, "print rows for k = 2..8");
  bounds->add_flag("--json", b_json, "machine-readable output");

  // bench
  auto* bench = app.add_subcommand("bench", "Benchmark a strategy per stage, or end to end with --n");
  CommonStrategyFlags bench_flags;
  int bench_k = 2;
  std::size_t bench_trials = 0;
  std::uint64_t bench_seed = 1;
  std::optional<std::size_t> bench_n;
  std::optional<std::string> agent_cmd;
  unsigned workers = qgt::default_workers();
  int max_steps = 256;
  bool prune_saturated = false;
  int timeout_ms = 10000;
  std::optional<int> initial_rtg;
  bool bench_json = false;
  bench->add_option("--k", bench_k, "number of defectives")->required();
  add_strategy_flags(bench, bench_flags);
  bench->add_option("--trials", bench_trials, "trials (default 100000 per stage, 10000 end to end)");
  bench->add_option("--seed", bench_seed)->capture_default_str();
  bench->add_option("--n", bench_n, "number of items; switches to end-to-end mode");
  bench->add_option("--agent-cmd", agent_cmd, "shell command of an external agent (implies --strategy external)");
  bench->add_option("--workers", workers)->capture_default_str();
  bench->add_option("--max-steps", max_steps, "per-episode query cap in per-stage mode")->capture_default_str();
  bench->add_flag("--prune-saturated", prune_saturated, "skip querying groups whose items are all defective");
  bench->add_option("--timeout-ms", timeout_ms, "external agent reply timeout")->capture_default_str();
  bench->add_option("--initial-rtg", initial_rtg, "return-to-go fed to external agents at the first step");
  bench->add_flag("--json", bench_json);

  // gen-dataset
  auto* gen = app.add_subcommand("gen-dataset", "Write expert trajectories as JSONL");
  CommonStrategyFlags gen_flags;
  int gen_k = 2;
  std::size_t episodes = 1000;
  std::string out_path;
  std::uint64_t gen_seed = 1;
  bool gzip = false;
  bool include_unsolved = false;
  bool final_reward_zero = false;
  int gen_max_steps = 256;
  unsigned gen_workers = qgt::default_workers();
  bool gen_json = false;
  gen->add_option("--k", gen_k)->required();
  add_strategy_flags(gen, gen_flags);
  gen->add_option("--episodes", episodes)->capture_default_str();
  gen->add_option("--out", out_path, "output file ('-' for stdout)")->required();
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_flag("--gzip", gzip, "gzip-compress the output");
  gen->add_flag("--include-unsolved", include_unsolved, "keep episodes that hit the step cap");
  gen->add_flag("--final-reward-zero", final_reward_zero, "the identifying query earns 0 instead of -1");
  gen->add_option("--max-steps", gen_max_steps)->capture_default_str();
  gen->add_option("--workers", gen_workers)->capture_default_str();
  gen->add_flag("--json", gen_json, "print the summary as JSON");

  // solve
  auto* solve = app.add_subcommand("solve", "Solve one random instance and dump its trace");
  CommonStrategyFlags solve_flags;
  std::size_t solve_n = 64;
  int solve_k = 2;
  std::uint64_t solve_seed = 1;
  bool solve_json = false;
  bool solve_prune = false;
  std::optional<std::string> solve_agent;
  solve->add_option("--n", solve_n)->required();
  solve->add_option("--k", solve_k)->required();
  add_strategy_flags(solve, solve_flags);
  solve->add_option("--seed", solve_seed)->capture_default_str();
  solve->add_option("--agent-cmd", solve_agent, "shell command of an external agent");
  solve->add_flag("--prune-saturated", solve_prune);
  solve->add_flag("--json", solve_json);

  // agent
  auto* agent = app.add_subcommand("agent", "Serve an in-process strategy over the agent protocol on stdin/stdout");
  CommonStrategyFlags agent_flags;
  std::uint64_t agent_seed = 0;
  add_strategy_flags(agent, agent_flags);
  agent->add_option("--seed", agent_seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*bounds) return cmd_bounds(b_n, b_k, b_table, b_json);

    if (*bench) {
      auto strategy = agent_cmd ? qgt::StrategyKind::external("agent") : qgt::StrategyKind::parse(bench_flags.strategy);
      qgt::BenchOptions opts;
      opts.workers = workers;
      opts.max_steps = max_steps;
      opts.strategy_options = bench_flags.options();
      opts.driver.strategy_options = bench_flags.options();
      opts.driver.prune_saturated = prune_saturated;
      opts.agent_cmd = agent_cmd;
      opts.bridge.timeout = std::chrono::milliseconds(timeout_ms);
      opts.bridge.initial_rtg = initial_rtg;
      qgt::BenchReport report;
      if (bench_n) {
        report = qgt::bench_end_to_end(*bench_n, bench_k, strategy, bench_trials ? bench_trials : 10000, bench_seed,
                                       opts);
      } else {
        report = qgt::bench_per_stage(bench_k, strategy, bench_trials ? bench_trials : 100000, bench_seed, opts);
      }
      print_report(report, bench_json);
      return report.degraded ? 3 : 0;
    }

    if (*gen) {
      qgt::DatasetOptions opts;
      opts.strategy_options = gen_flags.options();
      opts.max_steps = gen_max_steps;
      opts.include_unsolved = include_unsolved;
      opts.final_reward = final_reward_zero ? qgt::FinalReward::Zero : qgt::FinalReward::MinusOne;
      opts.workers = gen_workers;
      const auto strategy = qgt::StrategyKind::parse(gen_flags.strategy);
      qgt::DatasetSummary sum;
      if (out_path == "-") {
        qgt::StreamSink sink(std::cout);
        sum = qgt::generate_dataset(gen_k, strategy, episodes, gen_seed, sink, opts);
      } else {
        qgt::FileSink sink(out_path, gzip);
        sum = qgt::generate_dataset(gen_k, strategy, episodes, gen_seed, sink, opts);
      }
      json j = {{"episodes", sum.episodes},
                {"written", sum.written},
                {"mean_length", sum.mean_length},
                {"solve_rate", sum.solve_rate}};
      if (gen_json)
        std::cerr << j.dump() << '\n';
      else
        std::fprintf(stderr, "episodes %zu  written %zu  mean length %.4f  solve rate %.4f\n", sum.episodes,
                     sum.written, sum.mean_length, sum.solve_rate);
      return 0;
    }

    if (*solve) {
      qgt::Rng rng = qgt::trial_rng(solve_seed, 0);
      const auto x = qgt::IncidenceVector::sample(solve_n, static_cast<std::size_t>(solve_k), rng);
      qgt::DriverConfig cfg;
      cfg.strategy_options = solve_flags.options();
      cfg.prune_saturated = solve_prune;
      cfg.keep_trajectories = true;
      std::unique_ptr<qgt::QueryPolicy> policy;
      if (solve_agent)
        policy = std::make_unique<qgt::ExternalPolicy>(qgt::child_process_factory(*solve_agent));
      else
        policy = qgt::make_policy(qgt::StrategyKind::parse(solve_flags.strategy), cfg.strategy_options);
      const auto res = qgt::solve_qgt(x, *policy, rng, cfg);
      if (auto* ext = dynamic_cast<qgt::ExternalPolicy*>(policy.get())) ext->close();

      std::vector<std::size_t> defectives;
      for (std::size_t i = 0; i < x.n(); ++i)
        if (x[i]) defectives.push_back(i);
      std::vector<std::size_t> found;
      for (std::size_t i = 0; i < res.recovered.n(); ++i)
        if (res.recovered[i]) found.push_back(i);
      const bool ok = res.recovered == x;
      if (solve_json) {
        json stages = json::array();
        for (const auto& t : res.trajectories) stages.push_back(trajectory_json(t));
        json j = {{"n", solve_n},
                  {"k", solve_k},
                  {"defectives", defectives},
                  {"recovered", found},
                  {"correct", ok},
                  {"initial_queries", res.log.initial_queries},
                  {"per_stage", res.log.per_stage},
                  {"total", res.log.total},
                  {"stages", stages}};
        std::cout << j.dump(2) << '\n';
      } else {
        std::printf("defectives:");
        for (auto i : defectives) std::printf(" %zu", i);
        std::printf("\ninitial group queries: %d\n", res.log.initial_queries);
        std::size_t t_idx = 0;
        for (std::size_t s = 0; s < res.log.per_stage.size(); ++s) {
          std::printf("stage %zu: %d queries", s + 1, res.log.per_stage[s]);
          if (res.stage_dims[s] > 0 && t_idx < res.trajectories.size()) {
            const auto& t = res.trajectories[t_idx++];
            std::printf("  u=%s  left=%s", json(t.bounds.values()).dump().c_str(), json(t.target.v).dump().c_str());
            for (const auto& st : t.steps) std::printf("  %s", json(st.action).dump().c_str());
          }
          std::printf("\n");
        }
        std::printf("total queries: %d\nrecovered:", res.log.total);
        for (auto i : found) std::printf(" %zu", i);
        std::printf("\n%s\n", ok ? "recovery correct" : "RECOVERY MISMATCH");
      }
      return ok ? 0 : 2;
    }

    if (*agent) {
      return qgt::run_reference_agent(std::cin, std::cout, qgt::StrategyKind::parse(agent_flags.strategy),
                                      agent_flags.options(), agent_seed);
    }
  } catch (const qgt::RecoveryMismatch& e) {
    std::fprintf(stderr, "recovery mismatch: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
