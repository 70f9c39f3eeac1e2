// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <unistd.h>

#include "sqd/config.hpp"
#include "sqd/extrapolation.hpp"
#include "sqd/orchestrator.hpp"
#include "sqd/timeline.hpp"

using namespace sqd;
namespace fs = std::filesystem;

namespace {

std::string data(const std::string& name) { return std::string(SQD_TEST_DATA) + "/" + name; }

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("sqd-test-" + std::to_string(::getpid()) + "-" + name);
  fs::remove_all(d);
  return d;
}

RunConfig small_config(const std::string& fcidump, const fs::path& out, int pops, int walkers, int iters) {
  RunConfig c;
  c.fcidump = data(fcidump);
  c.output_dir = out;
  c.seed = 3;
  c.max_iterations = iters;
  c.sampler.shots = 2000;
  c.sampler.noise = 0.01;
  c.sampler.magnitude = 0.3;
  c.sampler.shot_time_us = 10.0;
  c.subsample = 300;
  c.recovery_rounds = 2;
  c.de.populations = pops;
  c.de.walkers = walkers;
  c.compute_variance = true;
  return c;
}

std::vector<double> trace_energies(const RunState& s) {
  std::vector<double> e;
  for (const auto& r : s.de_trace) e.push_back(r.energy);
  return e;
}

std::size_t count_files(const fs::path& dir) {
  return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}));
}

}  // namespace

TEST(RunConfig, ParsesResolvesAndValidates) {
  const auto j = nlohmann::json::parse(R"({
    "fcidump": "h6_chain.fcidump", "output_dir": "out", "max_iterations": 3,
    "sampler": {"shots": 100, "noise": 0.02, "init": "random", "magnitude": 0.1},
    "de": {"walkers": 4, "F": 0.25, "CR": 0.7, "index_mode": "strict", "bounds": [-1, 1]},
    "partition": {"b_alpha": 2, "t": 2}, "cooperative_start": 1, "recovery_rounds": 3})");
  auto c = run_config_from_json(j, SQD_TEST_DATA);
  EXPECT_EQ(c.fcidump, fs::path(SQD_TEST_DATA) / "h6_chain.fcidump");
  EXPECT_EQ(c.max_iterations, 3);
  EXPECT_EQ(c.sampler.shots, 100u);
  EXPECT_EQ(c.de.index_mode, IndexMode::strict);
  ASSERT_TRUE(c.de.bounds);
  EXPECT_EQ(c.partition.rank_count(), 4);
  EXPECT_EQ(c.recovery_rounds, 3);
  EXPECT_NO_THROW(c.validate());
  const auto round = run_config_from_json(to_json(c));
  EXPECT_EQ(to_json(round), to_json(c));

  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"fcidump": "x", "shotz": 1})")), ParseError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"max_iterations": 1})")), ParseError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"fcidump": "x", "sampler": {"init": "magic"}})")), ParseError);
  auto missing = run_config_from_json(nlohmann::json::parse(R"({"fcidump": "nope.fcidump"})"), SQD_TEST_DATA);
  EXPECT_THROW(missing.validate(), ContractViolation);
  c.carryover_ratio = 1.5;
  EXPECT_THROW(c.validate(), ContractViolation);
}

TEST(RunConfig, PartitionCapAndEnvironment) {
  const auto p = cap_partition({2, 2, 4, 2, true}, 4);
  EXPECT_LE(p.rank_count(), 4);
  EXPECT_EQ(p.b_alpha, 2);
  EXPECT_EQ(p.b_beta, 2);
  EXPECT_EQ(cap_partition({2, 2, 4, 2, true}, 0).rank_count(), 32);
  ::setenv("SQD_THREADS", "3", 1);
  EXPECT_EQ(thread_cap_from_env(), 3);
  ::setenv("SQD_THREADS", "zero", 1);
  EXPECT_THROW(thread_cap_from_env(), ContractViolation);
  ::unsetenv("SQD_THREADS");
  EXPECT_EQ(thread_cap_from_env(), 0);
}

TEST(Extrapolation, ExactLine) {
  std::vector<VariancePoint> pts;
  for (double x : {0.1, 0.2, 0.4, 0.8}) pts.push_back({-1.0 + 2.0 * x, x});
  const auto e = extrapolate_zero_variance(pts);
  EXPECT_NEAR(e.intercept, -1.0, 1e-14);
  EXPECT_NEAR(e.slope, 2.0, 1e-13);
  EXPECT_NEAR(e.sigma, 0.0, 1e-14);
}

TEST(Extrapolation, DegenerateInputsRejected) {
  EXPECT_THROW(extrapolate_zero_variance({{-1.0, 0.5}}), ContractViolation);
  EXPECT_THROW(extrapolate_zero_variance({{-1.0, 0.5}, {-1.1, 0.5}, {-0.9, 0.5}}), ContractViolation);
  EXPECT_THROW(extrapolate_zero_variance({{-1.0, -0.5}, {-1.1, 0.5}}), ContractViolation);
}

TEST(Extrapolation, InterceptStandardErrorMatchesClosedForm) {
  // Hand-computed OLS: x = 0, 1, 2, y = 1, 2, 4 -> slope 1.5, intercept 5/6, SSR 1/6, s^2 = 1/6.
  const auto e = extrapolate_zero_variance({{1.0, 0.0}, {2.0, 1.0}, {4.0, 2.0}});
  EXPECT_NEAR(e.slope, 1.5, 1e-14);
  EXPECT_NEAR(e.intercept, 5.0 / 6.0, 1e-14);
  EXPECT_NEAR(e.sigma, std::sqrt(1.0 / 6.0 * (1.0 / 3.0 + 1.0 / 2.0)), 1e-14);
}

TEST(Extrapolation, MonteCarloCoverage) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> noise(0.0, 2e-3);
  std::uniform_real_distribution<double> var(0.005, 0.05);
  const double e0 = -327.1, slope = 4.0;
  int covered = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<VariancePoint> pts;
    for (int i = 0; i < 20; ++i) {
      const double x = var(rng);
      pts.push_back({e0 + slope * x + noise(rng), x});
    }
    const auto e = extrapolate_zero_variance(pts);
    if (std::abs(e.intercept - e0) <= 2.0 * e.sigma) ++covered;
  }
  EXPECT_GE(covered, 90);
}

TEST(Extrapolation, CsvRoundTrip) {
  std::vector<VariancePoint> pts{{-1.5, 0.25, 100, 2, 1, 3}, {-1.25, 0.5, 64, 3, 0, 1}};
  std::stringstream ss;
  write_variance_points(ss, pts);
  const auto back = read_variance_points(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].energy, -1.5);
  EXPECT_EQ(back[1].dimension, 64u);
  EXPECT_EQ(back[0].walker, 3);
  std::stringstream bare("energy,variance\n-1.0,0.1\n-1.2,0.2\n");
  EXPECT_EQ(read_variance_points(bare).size(), 2u);
  std::stringstream bad("-1.0;0.1\n");
  EXPECT_THROW(read_variance_points(bad), ParseError);
}

TEST(Timeline, IdleFractionOnHandFixture) {
  // sampler busy [0,4) and [6,10); classical busy [3,7); span [0,10).
  const std::vector<TimingRecord> r{{Phase::quantum_execution, 0, 0, 0, 0.0, 4.0},
                                    {Phase::diagonalization, 0, 0, 0, 3.0, 7.0},
                                    {Phase::quantum_execution, 1, 0, 0, 6.0, 10.0}};
  const auto u = resource_usage(r);
  ASSERT_EQ(u.size(), 2u);
  EXPECT_EQ(u[0].resource, "sampler");
  EXPECT_DOUBLE_EQ(u[0].busy, 8.0);
  EXPECT_DOUBLE_EQ(u[0].idle_fraction, 0.2);
  EXPECT_DOUBLE_EQ(u[1].idle_fraction, 0.6);
  EXPECT_TRUE(sampler_overlaps_classical(r, 1, 0));
  EXPECT_FALSE(sampler_overlaps_classical(r, 0, 1));
  EXPECT_DOUBLE_EQ(covered_length({{0, 2}, {1, 3}, {5, 6}}), 4.0);
}

TEST(Timeline, EmptyRecordsGiveHeadersOnly) {
  std::stringstream ss;
  write_timeline_csv(ss, {});
  EXPECT_EQ(ss.str(), std::string("# sqd-timeline v1\n") + kTimelineHeader + "\n");
  const auto j = timeline_json({});
  EXPECT_TRUE(j["records"].empty());
  EXPECT_TRUE(resource_usage({}).empty());
}

TEST(Timeline, ScheduleViolationsDetected) {
  std::vector<TimingRecord> ok{{Phase::diagonalization, 0, 0, 0, 0.0, 1.0},
                               {Phase::diagonalization, 1, 0, 0, 1.0, 2.0},
                               {Phase::quantum_execution, 0, 0, 1, 1.0, 3.0}};
  EXPECT_TRUE(schedule_violations(ok).empty());
  auto bad = ok;
  bad.push_back({Phase::preprocessing, 1, 1, 0, 0.5, 0.9});
  bad.push_back({Phase::quantum_execution, 1, 0, 1, 1.5, 2.5});
  EXPECT_EQ(schedule_violations(bad).size(), 2u);
}

TEST(ClosedLoop, MinimalRunProducesArtifacts) {
  const auto dir = scratch("minimal");
  auto cfg = small_config("h2_sto3g.fcidump", dir, 2, 1, 1);
  const auto s = run_closed_loop(cfg);
  EXPECT_EQ(s.status, "completed");
  EXPECT_EQ(count_files(dir / "samples"), 2u);
  EXPECT_EQ(count_files(dir / "davidson"), 2u);
  for (const char* f : {"config.json", "checkpoint.json", "de_trace.csv", "timeline.csv", "timeline.json",
                        "variance_points.csv", "summary.json", "run.log"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  std::set<Phase> phases;
  for (const auto& r : s.timeline) phases.insert(r.phase);
  EXPECT_EQ(phases.size(), 5u);
  EXPECT_NEAR(s.best_energy(), -1.1372838344885023, 1e-8);
  fs::remove_all(dir);
}

TEST(ClosedLoop, SelectionMonotoneAndScheduleFaithful) {
  const auto dir = scratch("h6");
  auto cfg = small_config("h6_chain.fcidump", dir, 2, 4, 4);
  cfg.cooperative_start = 2;
  const auto s = run_closed_loop(cfg);
  ASSERT_EQ(s.best_trace.size(), 4u);
  for (std::size_t i = 1; i < s.best_trace.size(); ++i) EXPECT_LE(s.best_trace[i], s.best_trace[i - 1]);
  for (const auto& p : s.populations)
    for (const auto& w : p.walkers) {
      double best = std::numeric_limits<double>::infinity();
      for (double e : w.history) best = std::min(best, e);
      EXPECT_EQ(w.energy, best);
    }
  EXPECT_TRUE(schedule_violations(s.timeline).empty());
  EXPECT_TRUE(sampler_overlaps_classical(s.timeline, 1, 0));
  EXPECT_GE(s.best_energy(), -3.1517291411254598 - 1e-9);
  EXPECT_EQ(s.variance_points.size(), 32u);
  for (const auto& v : s.variance_points) EXPECT_GE(v.variance, 0.0);
  fs::remove_all(dir);
}

TEST(ClosedLoop, ResumeReproducesTrajectory) {
  const auto a = scratch("resume-a"), b = scratch("resume-b");
  auto cfg = small_config("h4_chain.fcidump", a, 2, 2, 3);
  const auto full = run_closed_loop(cfg);
  cfg.output_dir = b;
  cfg.max_iterations = 1;
  run_closed_loop(cfg);
  cfg.max_iterations = 3;
  RunOptions opts;
  opts.resume = b;
  const auto resumed = run_closed_loop(cfg, opts);
  EXPECT_EQ(trace_energies(resumed), trace_energies(full));
  EXPECT_EQ(resumed.best_trace, full.best_trace);
  EXPECT_TRUE(schedule_violations(resumed.timeline).empty());
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(ClosedLoop, WarmStart) {
  const auto prior = scratch("warm-prior"), next = scratch("warm-next"), wrong = scratch("warm-wrong");
  auto cfg = small_config("h6_chain.fcidump", prior, 2, 2, 2);
  cfg.subsample = 40;
  const auto p = run_closed_loop(cfg);

  auto zero = cfg;
  zero.output_dir = next;
  zero.warm_start = prior;
  zero.max_iterations = 0;
  const auto same = run_closed_loop(zero);
  EXPECT_EQ(to_json(same)["populations"], to_json(p)["populations"]);

  auto bigger = zero;
  fs::remove_all(next);
  bigger.max_iterations = 1;
  bigger.subsample = 400;
  run_closed_loop(bigger);
  for (int pop = 0; pop < 2; ++pop)
    for (int w = 0; w < 2; ++w) {
      std::ifstream in(next / "davidson" / ("i0_p" + std::to_string(pop) + "_w" + std::to_string(w) + ".json"));
      const auto j = nlohmann::json::parse(in);
      std::set<std::string> halves;
      for (const auto& h : j["alpha_halves"]) halves.insert(h.get<std::string>());
      for (const auto& e : p.populations[pop].walkers[w].carryover.alpha)
        EXPECT_TRUE(halves.count(to_bitstring(e.half, 6))) << "carryover half missing from the first subspace";
    }

  auto mismatch = small_config("h4_chain.fcidump", wrong, 2, 2, 1);
  mismatch.warm_start = prior;
  EXPECT_THROW(run_closed_loop(mismatch), ContractViolation);
  for (const auto& d : {prior, next, wrong}) fs::remove_all(d);
}

TEST(ClosedLoop, CooperativeExchangeHandsOverBestCarryover) {
  const auto dir = scratch("coop");
  auto cfg = small_config("h6_chain.fcidump", dir, 2, 2, 2);
  cfg.cooperative_start = 0;
  const auto s = run_closed_loop(cfg);
  for (int p = 0; p < 2; ++p) {
    const auto& other = s.populations[static_cast<std::size_t>(1 - p)].walkers;
    const auto& best = other[0].energy <= other[1].energy ? other[0] : other[1];
    EXPECT_EQ(s.populations[static_cast<std::size_t>(p)].shared.alpha, best.carryover.alpha);
    EXPECT_EQ(s.populations[static_cast<std::size_t>(p)].shared.beta, best.carryover.beta);
  }
  fs::remove_all(dir);
}

TEST(ClosedLoop, SamplerRetriesThenAborts) {
  const auto ok = scratch("retry-ok"), bad = scratch("retry-bad");
  auto cfg = small_config("h2_sto3g.fcidump", ok, 2, 1, 2);
  cfg.sampler.fail_attempts = 1;
  cfg.sampler.max_retries = 2;
  EXPECT_EQ(run_closed_loop(cfg).status, "completed");
  std::ifstream log(ok / "run.log");
  std::string text((std::istreambuf_iterator<char>(log)), {});
  EXPECT_NE(text.find("retrying"), std::string::npos);

  cfg.output_dir = bad;
  cfg.sampler.fail_attempts = 100;
  cfg.sampler.max_retries = 1;
  EXPECT_THROW(run_closed_loop(cfg), SamplerError);
  EXPECT_TRUE(fs::exists(bad / "checkpoint.json"));
  EXPECT_EQ(nlohmann::json::parse(std::ifstream(bad / "summary.json"))["status"], "aborted");
  fs::remove_all(ok);
  fs::remove_all(bad);
}

TEST(ClosedLoop, DistributedPartitionMatchesSerial) {
  const auto a = scratch("serial"), b = scratch("dist");
  auto cfg = small_config("h4_chain.fcidump", a, 2, 2, 2);
  cfg.orbital.enabled = false;
  const auto serial = run_closed_loop(cfg);
  cfg.output_dir = b;
  cfg.partition = {2, 1, 2, 1, true};
  const auto dist = run_closed_loop(cfg);
  const auto ea = trace_energies(serial), eb = trace_energies(dist);
  ASSERT_EQ(ea.size(), eb.size());
  for (std::size_t i = 0; i < ea.size(); ++i) EXPECT_NEAR(ea[i], eb[i], 1e-9);
  fs::remove_all(a);
  fs::remove_all(b);
}
