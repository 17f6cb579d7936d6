#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <memory>

#include "oracles.hpp"
#include "qgt/bench.hpp"

using namespace qgt;

namespace {

const std::string kCli = QGT_CLI_PATH;

struct CommandResult {
  int status = -1;
  std::string out;
};

CommandResult run(const std::string& args) {
  CommandResult r;
  FILE* p = ::popen((kCli + " " + args + " 2>/dev/null").c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int st = ::pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

}  // namespace

TEST(Bounds, M0Examples) {
  EXPECT_DOUBLE_EQ(bound_m0(1024, 2), 36.0);
  EXPECT_DOUBLE_EQ(bound_m0(4096, 4), 40.0);
  EXPECT_DOUBLE_EQ(bound_adaptive(1024, 2), 18.0);
  EXPECT_THROW(bound_m0(1024, 1), InvalidParameters);
  EXPECT_THROW(bound_m0(4, 4), InvalidParameters);
}

TEST(Bounds, TableRowsWithinOneHundredth) {
  const std::array<double, 7> lower{1.26, 1.50, 1.72, 1.93, 2.14, 2.33, 2.52};
  const std::array<double, 7> base{2.52, 3.00, 3.45, 3.87, 4.28, 4.67, 5.05};
  for (int k = 2; k <= 8; ++k) {
    EXPECT_DOUBLE_EQ(round2(per_stage_lower_bound(k)), lower[k - 2]) << "k=" << k;
    EXPECT_NEAR(baseline_per_stage(k), base[k - 2], 0.01) << "k=" << k;
  }
  // the published k=6 baseline is twice the rounded lower bound
  EXPECT_DOUBLE_EQ(round2(baseline_per_stage(6)), 4.27);
}

TEST(Bounds, CountingBoundAtHeadlinePoint) {
  // log2 C(1024,2) / log2 3
  EXPECT_NEAR(counting_lower_bound(1024, 2), std::log2(1024.0 * 1023.0 / 2.0) / std::log2(3.0), 1e-9);
}

TEST(RunningStats, MatchesTwoPassFormulas) {
  RunningStats s;
  const std::vector<double> xs{1, 2, 2, 3, 7};
  for (double x : xs) s.add(x);
  EXPECT_DOUBLE_EQ(s.mean, 3.0);
  EXPECT_NEAR(s.variance(), 5.5, 1e-12);
  EXPECT_NEAR(s.ci95(), 1.96 * std::sqrt(5.5 / 5), 1e-12);
}

TEST(ExactOracle, EntropyAtK2IsOnePointTwoFive) {
  EXPECT_NEAR(oracle::standalone_expectation(2, oracle::entropy_argmax), 1.25, 1e-12);
}

// Per-stage means agree with the exact expectation of the same deterministic
// expert, computed by a decision-tree recursion over the standalone model.
TEST(BenchPerStage, ExpertsMatchExactExpectation) {
  for (int k = 2; k <= 4; ++k) {
    const double exact_ent = oracle::standalone_expectation(k, oracle::entropy_argmax);
    const double exact_cov = oracle::standalone_expectation(k, oracle::variance_argmax);
    const auto ent = bench_per_stage(k, StrategyKind::entropy(), 40000, 100 + k);
    const auto cov = bench_per_stage(k, StrategyKind::covariance(), 40000, 200 + k);
    EXPECT_NEAR(ent.mean_queries, exact_ent, 4 * ent.stddev / std::sqrt(40000.0)) << "k=" << k;
    EXPECT_NEAR(cov.mean_queries, exact_cov, 4 * cov.stddev / std::sqrt(40000.0)) << "k=" << k;
    EXPECT_DOUBLE_EQ(ent.solve_rate, 1.0);
  }
}

TEST(BenchPerStage, DeterministicAndWorkerInvariant) {
  BenchOptions one, three;
  three.workers = 3;
  const auto a = bench_per_stage(4, StrategyKind::random(), 3000, 5, one);
  const auto b = bench_per_stage(4, StrategyKind::random(), 3000, 5, one);
  const auto c = bench_per_stage(4, StrategyKind::random(), 3000, 5, three);
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_DOUBLE_EQ(a.mean_queries, c.mean_queries);
  EXPECT_DOUBLE_EQ(a.stddev, c.stddev);
}

TEST(BenchPerStage, OrderingRandomCovarianceEntropy) {
  for (int k = 3; k <= 5; ++k) {
    const auto r = bench_per_stage(k, StrategyKind::random(), 10000, 1);
    const auto c = bench_per_stage(k, StrategyKind::covariance(), 10000, 1);
    const auto e = bench_per_stage(k, StrategyKind::entropy(), 10000, 1);
    EXPECT_GE(r.mean_queries, c.mean_queries);
    EXPECT_GE(c.mean_queries, e.mean_queries - 3 * e.ci95);
    EXPECT_GE(e.mean_queries, per_stage_lower_bound(k) - 3 * e.ci95);
  }
}

TEST(BenchPerStage, ExternalAgentThroughChildProcess) {
  BenchOptions opts;
  opts.agent_cmd = kCli + " agent --strategy entropy";
  const auto ext = bench_per_stage(3, StrategyKind::external("agent"), 300, 9, opts);
  const auto in = bench_per_stage(3, StrategyKind::entropy(), 300, 9);
  EXPECT_EQ(ext.failures, 0u);
  EXPECT_FALSE(ext.degraded);
  EXPECT_DOUBLE_EQ(ext.mean_queries, in.mean_queries);
}

TEST(BenchPerStage, BrokenAgentMarksReportDegraded) {
  BenchOptions opts;
  opts.agent_cmd = "exit 0";
  const auto r = bench_per_stage(2, StrategyKind::external("broken"), 20, 1, opts);
  EXPECT_EQ(r.failures, 20u);
  EXPECT_TRUE(r.degraded);
}

TEST(BenchEndToEnd, NEqualsKIsExactlyK) {
  const auto r = bench_end_to_end(4, 4, StrategyKind::entropy(), 50, 1);
  EXPECT_DOUBLE_EQ(r.mean_queries, 4.0);
  EXPECT_DOUBLE_EQ(r.stddev, 0.0);
  EXPECT_TRUE(r.per_stage_means.empty());
}

TEST(BenchEndToEnd, AllStrategiesRecoverAndReportStages) {
  for (auto s : {StrategyKind::random(), StrategyKind::covariance(), StrategyKind::entropy()}) {
    const auto r = bench_end_to_end(256, 3, s, 300, 17);
    EXPECT_DOUBLE_EQ(r.solve_rate, 1.0);
    double sum = 3.0;
    for (double m : r.per_stage_means) sum += m;
    EXPECT_NEAR(sum, r.mean_queries, 1e-9);
    EXPECT_GE(r.mean_queries, counting_lower_bound(256, 3));
  }
}

TEST(Cli, BoundsJson) {
  const auto r = run("bounds --n 1024 --k 2 --json");
  ASSERT_EQ(r.status, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_DOUBLE_EQ(j.at("m0").get<double>(), 36.0);
  EXPECT_DOUBLE_EQ(j.at("adaptive_lb").get<double>(), 18.0);
  EXPECT_DOUBLE_EQ(j.at("per_stage_lb").get<double>(), 1.26);
  EXPECT_DOUBLE_EQ(j.at("baseline").get<double>(), 2.52);
}

TEST(Cli, BenchJsonHasReportFields) {
  const auto r = run("bench --k 3 --strategy entropy --trials 500 --seed 4 --json");
  ASSERT_EQ(r.status, 0);
  const auto j = nlohmann::json::parse(r.out);
  for (const char* f : {"strategy", "k", "n", "trials", "mean_queries", "stddev", "ci95", "per_stage_means", "bounds"})
    EXPECT_TRUE(j.contains(f)) << f;
  EXPECT_EQ(j.at("trials").get<int>(), 500);
  EXPECT_DOUBLE_EQ(j.at("mean_queries").get<double>(), bench_per_stage(3, StrategyKind::entropy(), 500, 4).mean_queries);
}

TEST(Cli, BrokenAgentExitsNonzero) {
  EXPECT_NE(run("bench --k 2 --trials 5 --seed 1 --agent-cmd 'exit 0' --json").status, 0);
}

TEST(Cli, SolveAndGenDataset) {
  const auto s = run("solve --n 64 --k 3 --strategy covariance --seed 2 --json");
  ASSERT_EQ(s.status, 0);
  EXPECT_TRUE(nlohmann::json::parse(s.out).at("correct").get<bool>());

  const auto d = run("gen-dataset --k 2 --strategy entropy --episodes 20 --out - --seed 1");
  ASSERT_EQ(d.status, 0);
  std::istringstream in(d.out);
  EXPECT_EQ(read_jsonl(in).size(), 20u);
}

TEST(Cli, BadArgumentsFail) {
  EXPECT_NE(run("bench --k 2 --strategy nonsense --trials 5").status, 0);
}

TEST(Cli, M0UndefinedForSingleDefectiveIsReportedAsNull) {
  const auto r = run("bounds --n 8 --k 1 --json");
  ASSERT_EQ(r.status, 0);
  EXPECT_TRUE(nlohmann::json::parse(r.out).at("m0").is_null());
}
