// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "qdd/harness.hpp"

using namespace qdd;

namespace {

ExperimentSpec small_spec(QuantizerMethod method, int levels, std::int64_t trials = 4096) {
  ExperimentSpec s;
  s.scenario.levels = levels;
  s.method = method;
  s.fusion = method == QuantizerMethod::NonQuantized ? FusionMode::DdtNonQuantized : FusionMode::DdtQuantized;
  s.trials = trials;
  s.seed = 11;
  if (method == QuantizerMethod::MAE || method == QuantizerMethod::MJD) {
    std::vector<double> cuts;
    for (int i = 1; i < levels; ++i) cuts.push_back(-1.0 + 2.0 * i / levels);
    s.thresholds = ThresholdVector(cuts);
  }
  return s;
}

std::string csv(const RocCurve& c) {
  std::ostringstream os;
  write_roc_csv(os, std::span<const RocCurve>(&c, 1));
  return os.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(QDD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Calibration, Examples) {
  const std::vector<double> s = {1, 2, 3, 4};
  auto np = calibrate_sorted(s, 0.25);
  EXPECT_EQ(np.threshold, 4.0);
  EXPECT_EQ(np.boundary_prob, 1.0);
  EXPECT_DOUBLE_EQ(exceedance(s, np), 0.25);

  np = calibrate_sorted(s, 0.0);
  EXPECT_GT(np.threshold, 4.0);
  EXPECT_EQ(np.boundary_prob, 0.0);
  EXPECT_EQ(exceedance(s, np), 0.0);

  np = calibrate_sorted(s, 1.0);
  EXPECT_EQ(exceedance(s, np), 1.0);

  const std::vector<double> ties = {0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
  np = calibrate_sorted(ties, 0.5);
  EXPECT_EQ(np.threshold, 1.0);
  EXPECT_DOUBLE_EQ(np.boundary_prob, 0.25);
  EXPECT_DOUBLE_EQ(exceedance(ties, np), 0.5);

  EXPECT_THROW(calibrate_sorted(std::vector<double>{}, 0.1), ConfigError);
  EXPECT_THROW(calibrate_sorted(s, 1.5), ConfigError);
}

TEST(Calibration, ExactOnEmpiricalDistribution) {
  std::mt19937_64 rng(1);
  std::binomial_distribution<int> count(25, 0.1);
  std::vector<double> s(10001);
  for (auto& x : s) x = count(rng);
  const auto np = calibrate_threshold(s, 0.1);
  std::sort(s.begin(), s.end());
  EXPECT_NEAR(exceedance(s, np), 0.1, 1e-12);
}

TEST(Calibration, CountStatisticOnFreshDraws) {
  // K = 3 binary sensors with alarm probability 0.2: calibrate at 0.4 and
  // check against the enumerated Binomial(3, 0.2) distribution.
  std::mt19937_64 rng(2);
  std::binomial_distribution<int> count(3, 0.2);
  std::vector<double> h0(100000);
  for (auto& x : h0) x = count(rng);
  const auto np = calibrate_threshold(h0, 0.4);
  EXPECT_EQ(np.threshold, 1.0);
  double exact = np.boundary_prob * oracle::binomial_pmf(3, 1, 0.2);
  for (int k = 2; k <= 3; ++k) exact += oracle::binomial_pmf(3, k, 0.2);
  EXPECT_NEAR(exact, 0.4, 0.005);

  std::vector<double> fresh(100000);
  for (auto& x : fresh) x = count(rng);
  std::sort(fresh.begin(), fresh.end());
  EXPECT_NEAR(exceedance(fresh, np), 0.4, 0.005);
}

TEST(ExperimentSpec, Validation) {
  auto s = small_spec(QuantizerMethod::MAE, 2);
  EXPECT_NO_THROW(s.validate());

  auto bad = s;
  bad.fusion = FusionMode::FadingOptimal;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad.channel = ChannelParams::from_channel_snr_db(10.0, 3);
  EXPECT_THROW(bad.validate(), ConfigError);
  bad.channel = ChannelParams::from_channel_snr_db(10.0, 2);
  EXPECT_NO_THROW(bad.validate());

  bad = s;
  bad.channel = ChannelParams::from_channel_snr_db(10.0, 2);
  EXPECT_THROW(bad.validate(), ConfigError);

  bad = small_spec(QuantizerMethod::KthRoot, 3);
  EXPECT_THROW(bad.validate(), ConfigError);

  bad = s;
  bad.method = QuantizerMethod::NonQuantized;
  EXPECT_THROW(bad.validate(), ConfigError);

  bad = s;
  bad.pfa_grid = {0.1, 1.2};
  EXPECT_THROW(bad.validate(), ConfigError);

  bad = s;
  bad.thresholds = ThresholdVector({0.0, 1.0});
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ParseMethod, Names) {
  EXPECT_EQ(parse_method("mae"), QuantizerMethod::MAE);
  EXPECT_EQ(parse_method("mjd"), QuantizerMethod::MJD);
  EXPECT_EQ(parse_method("kthroot"), QuantizerMethod::KthRoot);
  EXPECT_EQ(parse_method("none"), QuantizerMethod::NonQuantized);
  EXPECT_THROW(parse_method("lloyd"), ConfigError);
}

TEST(RunRoc, UnitFalseAlarmGivesUnitDetection) {
  auto s = small_spec(QuantizerMethod::MAE, 3);
  s.pfa_grid = {0.5, 1.0};
  const auto c = run_roc(s);
  EXPECT_EQ(c.points.back().pd, 1.0);
}

TEST(RunRoc, MonotoneAndBounded) {
  for (auto method : {QuantizerMethod::MAE, QuantizerMethod::KthRoot, QuantizerMethod::NonQuantized}) {
    auto s = small_spec(method, 2);
    s.pfa_grid = {0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.7};
    const auto c = run_roc(s);
    double prev = 0.0;
    for (const auto& p : c.points) {
      EXPECT_GE(p.pd, prev);
      EXPECT_LE(p.pd, 1.0);
      prev = p.pd;
    }
  }
}

TEST(RunRoc, DetectionExceedsFalseAlarm) {
  auto s = small_spec(QuantizerMethod::MAE, 2, 20000);
  const auto c = run_roc(s);
  for (const auto& p : c.points) EXPECT_GT(p.pd, p.pfa);
}

TEST(RunRoc, FadingModesRun) {
  for (auto fusion : {FusionMode::FadingOptimal, FusionMode::FadingSubOptimal}) {
    auto s = small_spec(QuantizerMethod::MAE, 3);
    s.fusion = fusion;
    s.channel = ChannelParams::from_channel_snr_db(10.0, 3);
    const auto c = run_roc(s);
    EXPECT_EQ(c.channel, "rayleigh");
    EXPECT_EQ(c.fusion, to_string(fusion));
    for (const auto& p : c.points) EXPECT_GT(p.pd, p.pfa);
  }
}

TEST(RunRoc, CsvIsReproducible) {
  auto s = small_spec(QuantizerMethod::MJD, 3, 10000);
  s.workers = 1;
  const std::string one = csv(run_roc(s));
  EXPECT_EQ(one, csv(run_roc(s)));
  s.workers = 3;
  EXPECT_EQ(one, csv(run_roc(s)));
  s.seed = 12;
  EXPECT_NE(one, csv(run_roc(s)));
  EXPECT_EQ(one.substr(0, one.find('\n')), "pfa,pd,pd_stderr,method,levels,channel,fusion,trials,seed");
}

TEST(RunRoc, NonQuantizedCurveHasZeroLevels) {
  const auto c = run_roc(small_spec(QuantizerMethod::NonQuantized, 2));
  EXPECT_EQ(c.levels, 0);
  EXPECT_EQ(c.method, "none");
  EXPECT_NE(csv(c).find(",none,0,ddt,ddt-nonquantized,4096,11\n"), std::string::npos);
}

TEST(ThresholdCache, RoundTrip) {
  ThresholdCache cache;
  cache.put({{"mae", 3, 0.0, 10.0}, {-0.255, 0.63}, 1.5472, 0x1234});
  cache.put({{"mjd", 2, 0.0, 10.0}, {0.3325}, 0.1936, 0});
  cache.put({{"mae", 3, 0.0, 10.0}, {-0.25, 0.6}, 1.5, 7});
  EXPECT_EQ(cache.records().size(), 2u);

  std::stringstream io;
  cache.write(io);
  const auto back = ThresholdCache::parse(io);
  ASSERT_EQ(back.records().size(), 2u);
  const auto& r = back.require({"mae", 3, 0.0, 10.0});
  EXPECT_EQ(r.cuts, (std::vector<double>{-0.25, 0.6}));
  EXPECT_EQ(r.objective, 1.5);
  EXPECT_EQ(r.settings_hash, 7u);

  try {
    back.require({"mjd", 6, 0.0, 10.0});
    FAIL() << "expected CacheMiss";
  } catch (const CacheMiss& e) {
    EXPECT_NE(std::string(e.what()).find("method=mjd, levels=6"), std::string::npos);
    EXPECT_EQ(e.key().levels, 6);
  }

  std::stringstream broken("method=mae levels=2 snr_db=0 ratio_l=10 cuts=abc\n");
  EXPECT_THROW(ThresholdCache::parse(broken), ConfigError);
  EXPECT_TRUE(ThresholdCache::load("/nonexistent/dir/cache.txt").records().empty());
}

TEST(ReproduceTables, MissingEntryRaisesBeforeSimulation) {
  TablesConfig cfg;
  cfg.levels = {2};
  ThresholdCache cache;
  cache.put({{"mae", 2, 0.0, 10.0}, {0.185}, 0.97, 0});
  EXPECT_THROW(reproduce_tables(cfg, cache), CacheMiss);
}

TEST(ReproduceTables, GainIdentities) {
  TablesConfig cfg;
  cfg.levels = {2, 3};
  cfg.trials = 4096;
  ThresholdCache cache;
  cache.put({{"mae", 2, 0.0, 10.0}, {0.185}, 0, 0});
  cache.put({{"mjd", 2, 0.0, 10.0}, {0.3325}, 0, 0});
  cache.put({{"mae", 3, 0.0, 10.0}, {-0.255, 0.63}, 0, 0});
  cache.put({{"mjd", 3, 0.0, 10.0}, {-0.3, 0.9675}, 0, 0});
  const auto report = reproduce_tables(cfg, cache);
  EXPECT_EQ(report.rows.size(), 8u);
  EXPECT_EQ(report.curves.size(), 5u);
  EXPECT_EQ(report.pd_nonquantized.size(), 4u);
  for (const auto& row : report.rows) {
    EXPECT_NEAR(row.gain, row.pd_mae - row.pd_mjd, 1e-12);
    EXPECT_NEAR(row.percent_gain, 100.0 * row.gain / row.pd_mae, 1e-9);
    EXPECT_GT(row.stderr_gain, 0.0);
  }
  double sum = 0.0;
  for (const auto& row : report.rows)
    if (row.levels == 3) sum += row.gain;
  EXPECT_NEAR(report.average_gain(3), sum / 4, 1e-12);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("roc --levels 1"), 2);
  EXPECT_EQ(run_cli("roc --trials 10"), 2);
  EXPECT_EQ(run_cli("roc --method kthroot --levels 3"), 2);
  EXPECT_EQ(run_cli("roc --no-such-flag"), 2);
  const auto out = std::filesystem::temp_directory_path() / "qdd_cli_test.csv";
  EXPECT_EQ(run_cli("roc --method kthroot --trials 2048 --out " + out.string()), 0);
  EXPECT_TRUE(std::filesystem::exists(out));
  std::filesystem::remove(out);
}
