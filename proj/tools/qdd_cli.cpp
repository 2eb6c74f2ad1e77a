// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

// qdd: quantizer design and Monte Carlo ROC estimation for quantized
// distributed detection of a point source.
//
//   qdd optimize --method mae --levels 3 [--cache thresholds.txt]
//   qdd roc      --method mae --levels 2 --channel ddt --trials 100000 --out roc.csv
//   qdd tables   --cache thresholds.txt --fill-cache --out tables.csv
//   qdd sweep    --channel-snr-db 10 --cache thresholds.txt --out fading.csv

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "qdd/qdd.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitConvergence = 3;
constexpr std::int64_t kMinReportedTrials = 1000;

struct CommonOptions {
  double snr_db = 0.0;
  int sensors = 25;
  double ratio_l = 10.0;
  int levels = 2;
  std::string cache_path;

  qdd::ScenarioConfig scenario() const {
    qdd::ScenarioConfig s;
    s.snr_db = snr_db;
    s.sensor_count = sensors;
    s.amplitude_ratio = ratio_l;
    s.levels = levels;
    s.validate();
    return s;
  }
};

void add_scenario_flags(CLI::App* app, CommonOptions& o) {
  app->add_option("--snr-db", o.snr_db, "Sensor SNR A_max^2/sigma^2 in dB")->capture_default_str();
  app->add_option("--sensors", o.sensors, "Number of sensors K")->capture_default_str();
  app->add_option("--ratio-l", o.ratio_l, "Amplitude ratio L = A_max/A_min")->capture_default_str();
  app->add_option("--levels", o.levels, "Quantization levels M")->capture_default_str();
  app->add_option("--cache", o.cache_path, "Threshold cache file");
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (part.empty()) continue;
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw qdd::ConfigError("cannot parse list value '" + part + "'");
    }
  }
  if (out.empty()) throw qdd::ConfigError("empty list '" + text + "'");
  return out;
}

void check_trials(std::int64_t trials) {
  if (trials < kMinReportedTrials)
    throw qdd::ConfigError("reported results need at least " + std::to_string(kMinReportedTrials) +
                           " trials");
}

/// Cached thresholds, optimized and stored when missing.
qdd::ThresholdVector resolve_thresholds(qdd::QuantizerMethod method, const qdd::ScenarioConfig& scenario,
                                        qdd::ThresholdCache& cache, bool& cache_dirty) {
  const auto key = qdd::cache_key(method, scenario);
  if (auto hit = cache.find(key)) return qdd::ThresholdVector(hit->cuts);
  const auto kind = qdd::objective_for(method);
  const auto settings = qdd::OptimizerSettings::defaults_for(kind, scenario);
  std::fprintf(stderr, "optimizing %s thresholds for M=%d ...\n", qdd::to_string(kind), scenario.levels);
  const auto result = qdd::optimize_thresholds(kind, scenario, settings);
  const auto cuts = result.thresholds.cuts();
  cache.put({key, {cuts.begin(), cuts.end()}, result.objective, qdd::fnv1a64(settings.fingerprint())});
  cache_dirty = true;
  return result.thresholds;
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw qdd::ConfigError("cannot write " + path);
  out << text;
}

void print_thresholds(const qdd::ThresholdVector& t) {
  std::printf("[");
  for (std::size_t i = 0; i < t.size(); ++i) std::printf("%s%.4f", i ? ", " : "", t[i]);
  std::printf("]");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantizer design and ROC simulation for distributed point-source detection"};
  app.require_subcommand(1);

  // optimize
  CommonOptions opt_common;
  std::string opt_method = "mae";
  double grid_lo = 0, grid_hi = 0, grid_step = 0;
  int refine_passes = -1;
  std::string entropy_reading = "expected";
  auto* optimize = app.add_subcommand("optimize", "Design quantizer thresholds (MAE or MJD)");
  add_scenario_flags(optimize, opt_common);
  optimize->add_option("--method", opt_method, "mae | mjd")->check(CLI::IsMember({"mae", "mjd"}))->capture_default_str();
  optimize->add_option("--grid-lo", grid_lo, "Search grid lower bound (default -3 sigma)");
  optimize->add_option("--grid-hi", grid_hi, "Search grid upper bound (default 3 sigma)");
  optimize->add_option("--grid-step", grid_step, "Search grid step (default 0.01 sigma)");
  optimize->add_option("--refine-passes", refine_passes, "Halvings below the grid step");
  optimize->add_option("--entropy-reading", entropy_reading, "expected | averaged")
      ->check(CLI::IsMember({"expected", "averaged"}))->capture_default_str();

  // roc
  CommonOptions roc_common;
  std::string roc_method = "mae", channel = "ddt", fusion = "optimal", pfa_grid = "0.1,0.2,0.3,0.4",
              out_path;
  double channel_snr_db = 10.0, kthroot_pfa = 0.1, kthroot_mass = 0.0;
  std::int64_t trials = 100'000;
  std::uint64_t seed = 1;
  auto* roc = app.add_subcommand("roc", "Estimate one ROC curve by Monte Carlo");
  add_scenario_flags(roc, roc_common);
  roc->add_option("--method", roc_method, "mae | mjd | kthroot | none")
      ->check(CLI::IsMember({"mae", "mjd", "kthroot", "none"}))->capture_default_str();
  roc->add_option("--channel", channel, "ddt | rayleigh")->check(CLI::IsMember({"ddt", "rayleigh"}))->capture_default_str();
  roc->add_option("--fusion", fusion, "optimal | suboptimal (rayleigh only)")
      ->check(CLI::IsMember({"optimal", "suboptimal"}))->capture_default_str();
  roc->add_option("--channel-snr-db", channel_snr_db, "P sigma_h^2 / sigma_n^2 in dB")->capture_default_str();
  roc->add_option("--trials", trials, "Trials per hypothesis")->capture_default_str();
  roc->add_option("--seed", seed, "Master seed")->capture_default_str();
  roc->add_option("--pfa-grid", pfa_grid, "Comma-separated false-alarm targets")->capture_default_str();
  roc->add_option("--out", out_path, "CSV output path (stdout if omitted)");
  roc->add_option("--kthroot-pfa", kthroot_pfa, "Design p_fa of the K-th root quantizer")->capture_default_str();
  roc->add_option("--kthroot-mass", kthroot_mass, "Override per-sensor no-alarm mass of the K-th root quantizer");

  // tables
  CommonOptions tab_common;
  std::int64_t tab_trials = 100'000;
  std::uint64_t tab_seed = 1;
  std::string tab_out, tab_pfa = "0.1,0.2,0.3,0.4", tab_levels = "2,3,4,6";
  bool fill_cache = false;
  auto* tables = app.add_subcommand("tables", "p_d grid for MAE/MJD at several levels and the gain table");
  add_scenario_flags(tables, tab_common);
  tables->add_option("--trials", tab_trials, "Trials per hypothesis")->capture_default_str();
  tables->add_option("--seed", tab_seed, "Master seed")->capture_default_str();
  tables->add_option("--pfa-grid", tab_pfa, "Comma-separated false-alarm targets")->capture_default_str();
  tables->add_option("--levels-list", tab_levels, "Comma-separated quantization levels")->capture_default_str();
  tables->add_option("--out", tab_out, "CSV output path for all curves");
  tables->add_flag("--fill-cache", fill_cache, "Optimize and store missing cache entries");

  // sweep
  CommonOptions sw_common;
  std::int64_t sw_trials = 100'000;
  std::uint64_t sw_seed = 1;
  double sw_channel_snr = 10.0;
  std::string sw_out, sw_pfa = "0.01,0.05,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,0.99", sw_levels = "2,3,4,6",
                      sw_method = "mae";
  auto* sweep = app.add_subcommand("sweep", "Rayleigh-fading comparison of fusion rules and levels");
  add_scenario_flags(sweep, sw_common);
  sweep->add_option("--method", sw_method, "mae | mjd")->check(CLI::IsMember({"mae", "mjd"}))->capture_default_str();
  sweep->add_option("--channel-snr-db", sw_channel_snr, "P sigma_h^2 / sigma_n^2 in dB")->capture_default_str();
  sweep->add_option("--trials", sw_trials, "Trials per hypothesis")->capture_default_str();
  sweep->add_option("--seed", sw_seed, "Master seed")->capture_default_str();
  sweep->add_option("--pfa-grid", sw_pfa, "Comma-separated false-alarm targets")->capture_default_str();
  sweep->add_option("--levels-list", sw_levels, "Comma-separated quantization levels")->capture_default_str();
  sweep->add_option("--out", sw_out, "CSV output path (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*optimize) {
      const auto scenario = opt_common.scenario();
      const auto method = qdd::parse_method(opt_method);
      const auto kind = qdd::objective_for(method);
      auto settings = qdd::OptimizerSettings::defaults_for(kind, scenario);
      if (optimize->count("--grid-lo")) settings.grid_lo = grid_lo;
      if (optimize->count("--grid-hi")) settings.grid_hi = grid_hi;
      if (optimize->count("--grid-step")) settings.grid_step = grid_step;
      if (refine_passes >= 0) settings.refine_passes = refine_passes;
      settings.entropy_reading = entropy_reading == "averaged" ? qdd::EntropyReading::AveragedPmf
                                                               : qdd::EntropyReading::ExpectedConditional;
      const auto result = qdd::optimize_thresholds(kind, scenario, settings);
      std::printf("method=%s levels=%d snr_db=%g ratio_l=%g thresholds=", opt_method.c_str(),
                  scenario.levels, scenario.snr_db, scenario.amplitude_ratio);
      print_thresholds(result.thresholds);
      std::printf(" objective=%.9f evaluations=%lld\n", result.objective,
                  static_cast<long long>(result.evaluations));
      if (!opt_common.cache_path.empty()) {
        auto cache = qdd::ThresholdCache::load(opt_common.cache_path);
        const auto cuts = result.thresholds.cuts();
        cache.put({qdd::cache_key(method, scenario), {cuts.begin(), cuts.end()}, result.objective,
                   qdd::fnv1a64(settings.fingerprint())});
        cache.save(opt_common.cache_path);
      }
      return 0;
    }

    if (*roc) {
      check_trials(trials);
      qdd::ExperimentSpec spec;
      spec.scenario = roc_common.scenario();
      spec.method = qdd::parse_method(roc_method);
      spec.trials = trials;
      spec.seed = seed;
      spec.pfa_grid = parse_list(pfa_grid);
      spec.kthroot_design_pfa = kthroot_pfa;
      if (roc->count("--kthroot-mass")) spec.kthroot_mass = kthroot_mass;
      if (channel == "rayleigh") {
        if (spec.method == qdd::QuantizerMethod::NonQuantized)
          throw qdd::ConfigError("non-quantized observations cannot be sent over the M-FSK channel");
        spec.fusion = fusion == "optimal" ? qdd::FusionMode::FadingOptimal : qdd::FusionMode::FadingSubOptimal;
        spec.channel = qdd::ChannelParams::from_channel_snr_db(channel_snr_db, spec.scenario.levels);
      } else {
        spec.fusion = spec.method == qdd::QuantizerMethod::NonQuantized ? qdd::FusionMode::DdtNonQuantized
                                                                        : qdd::FusionMode::DdtQuantized;
      }
      if (spec.method == qdd::QuantizerMethod::MAE || spec.method == qdd::QuantizerMethod::MJD) {
        qdd::ThresholdCache cache;
        if (!roc_common.cache_path.empty()) cache = qdd::ThresholdCache::load(roc_common.cache_path);
        bool dirty = false;
        spec.thresholds = resolve_thresholds(spec.method, spec.scenario, cache, dirty);
        if (dirty && !roc_common.cache_path.empty()) cache.save(roc_common.cache_path);
      }
      const qdd::RocCurve curve = qdd::run_roc(spec);
      std::ostringstream csv;
      qdd::write_roc_csv(csv, std::span<const qdd::RocCurve>(&curve, 1));
      write_output(out_path, csv.str());
      return 0;
    }

    if (*tables) {
      check_trials(tab_trials);
      if (tab_common.cache_path.empty()) throw qdd::ConfigError("tables requires --cache");
      qdd::TablesConfig cfg;
      cfg.scenario = tab_common.scenario();
      cfg.trials = tab_trials;
      cfg.seed = tab_seed;
      cfg.pfa_grid = parse_list(tab_pfa);
      cfg.levels.clear();
      for (double l : parse_list(tab_levels)) cfg.levels.push_back(static_cast<int>(l));
      auto cache = qdd::ThresholdCache::load(tab_common.cache_path);
      if (fill_cache) {
        bool dirty = false;
        for (int levels : cfg.levels) {
          auto s = cfg.scenario;
          s.levels = levels;
          resolve_thresholds(qdd::QuantizerMethod::MAE, s, cache, dirty);
          resolve_thresholds(qdd::QuantizerMethod::MJD, s, cache, dirty);
        }
        if (dirty) cache.save(tab_common.cache_path);
      }
      const auto report = qdd::reproduce_tables(cfg, cache);

      std::printf("p_d by p_fa (direct transmission, K=%d, L=%g, SNR=%g dB, %lld trials)\n",
                  cfg.scenario.sensor_count, cfg.scenario.amplitude_ratio, cfg.scenario.snr_db,
                  static_cast<long long>(cfg.trials));
      std::printf("%6s", "pfa");
      for (int l : cfg.levels) std::printf("   MJD%-2d   MAE%-2d", l, l);
      std::printf("   nonquant\n");
      for (std::size_t i = 0; i < report.pfa_grid.size(); ++i) {
        const double pfa = report.pfa_grid[i];
        std::printf("%6.2f", pfa);
        for (int l : cfg.levels) std::printf("  %6.3f  %6.3f", report.pd("mjd", l, pfa), report.pd("mae", l, pfa));
        std::printf("   %6.3f\n", report.pd_nonquantized[i]);
      }
      std::printf("\nMAE gain over MJD: G = pd_MAE - pd_MJD, PG = 100 G / pd_MAE\n");
      std::printf("%6s", "pfa");
      for (int l : cfg.levels) std::printf("   G(%d)    PG(%d) ", l, l);
      std::printf("\n");
      for (double pfa : report.pfa_grid) {
        std::printf("%6.2f", pfa);
        for (const auto& r : report.rows)
          if (r.pfa == pfa) std::printf("  %7.4f  %6.2f ", r.gain, r.percent_gain);
        std::printf("\n");
      }
      std::printf("%6s", "avg");
      for (int l : cfg.levels) std::printf("  %7.4f  %6.2f ", report.average_gain(l), report.average_percent_gain(l));
      std::printf("\n");

      if (!tab_out.empty()) {
        std::ostringstream csv;
        qdd::write_roc_csv(csv, report.curves);
        write_output(tab_out, csv.str());
      }
      return 0;
    }

    if (*sweep) {
      check_trials(sw_trials);
      const auto base = sw_common.scenario();
      const auto method = qdd::parse_method(sw_method);
      qdd::ThresholdCache cache;
      if (!sw_common.cache_path.empty()) cache = qdd::ThresholdCache::load(sw_common.cache_path);
      bool dirty = false;
      std::vector<qdd::RocCurve> curves;
      for (double lv : parse_list(sw_levels)) {
        qdd::ExperimentSpec spec;
        spec.scenario = base;
        spec.scenario.levels = static_cast<int>(lv);
        spec.method = method;
        spec.trials = sw_trials;
        spec.seed = sw_seed;
        spec.pfa_grid = parse_list(sw_pfa);
        spec.channel = qdd::ChannelParams::from_channel_snr_db(sw_channel_snr, spec.scenario.levels);
        spec.thresholds = resolve_thresholds(method, spec.scenario, cache, dirty);
        for (auto mode : {qdd::FusionMode::FadingOptimal, qdd::FusionMode::FadingSubOptimal}) {
          spec.fusion = mode;
          curves.push_back(qdd::run_roc(spec));
        }
      }
      // Unquantized direct transmission is the limiting reference.
      qdd::ExperimentSpec nq;
      nq.scenario = base;
      nq.method = qdd::QuantizerMethod::NonQuantized;
      nq.fusion = qdd::FusionMode::DdtNonQuantized;
      nq.trials = sw_trials;
      nq.seed = sw_seed;
      nq.pfa_grid = parse_list(sw_pfa);
      curves.push_back(qdd::run_roc(nq));
      if (dirty && !sw_common.cache_path.empty()) cache.save(sw_common.cache_path);
      std::ostringstream csv;
      qdd::write_roc_csv(csv, curves);
      write_output(sw_out, csv.str());
      return 0;
    }
  } catch (const qdd::ConvergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConvergence;
  } catch (const qdd::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return 0;
}
