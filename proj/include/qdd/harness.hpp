// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "qdd/channel.hpp"
#include "qdd/core.hpp"
#include "qdd/fusion.hpp"
#include "qdd/quantizer.hpp"
#include "qdd/signal_model.hpp"
#include "qdd/threshold_cache.hpp"

namespace qdd {

enum class QuantizerMethod { MAE, MJD, KthRoot, NonQuantized };

inline const char* to_string(QuantizerMethod m) {
  switch (m) {
    case QuantizerMethod::MAE: return "mae";
    case QuantizerMethod::MJD: return "mjd";
    case QuantizerMethod::KthRoot: return "kthroot";
    case QuantizerMethod::NonQuantized: return "none";
  }
  return "?";
}

inline QuantizerMethod parse_method(const std::string& s) {
  if (s == "mae") return QuantizerMethod::MAE;
  if (s == "mjd") return QuantizerMethod::MJD;
  if (s == "kthroot") return QuantizerMethod::KthRoot;
  if (s == "none") return QuantizerMethod::NonQuantized;
  throw ConfigError("unknown quantizer method '" + s + "'");
}

inline ObjectiveKind objective_for(QuantizerMethod m) {
  if (m == QuantizerMethod::MAE) return ObjectiveKind::AverageEntropy;
  if (m == QuantizerMethod::MJD) return ObjectiveKind::JDivergence;
  throw ConfigError(std::string("method ") + to_string(m) + " has no design objective");
}

/// One Monte Carlo ROC experiment.
struct ExperimentSpec {
  ScenarioConfig scenario;
  QuantizerMethod method = QuantizerMethod::MAE;
  FusionMode fusion = FusionMode::DdtQuantized;
  std::optional<ChannelParams> channel;
  std::int64_t trials = 100'000;
  std::uint64_t seed = 1;
  std::vector<double> pfa_grid = {0.1, 0.2, 0.3, 0.4};

  /// Designed cut points for MAE/MJD; optimized with default settings if absent.
  std::optional<ThresholdVector> thresholds;
  /// Global false-alarm rate the K-th root quantizer is designed for.
  double kthroot_design_pfa = 0.1;
  /// Explicit per-sensor no-alarm mass for the K-th root quantizer.
  std::optional<double> kthroot_mass;
  int nonquantized_points = 32;
  SubOptimalSummand suboptimal_summand = SubOptimalSummand::SymbolIndex;
  /// 0 uses all hardware threads.
  unsigned workers = 0;

  void validate() const {
    scenario.validate();
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (pfa_grid.empty()) throw ConfigError("pfa grid must not be empty");
    for (double p : pfa_grid)
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("pfa grid values must lie in [0, 1]");
    if (is_fading(fusion) != channel.has_value())
      throw ConfigError("a channel is required exactly for the fading fusion modes");
    if (channel) {
      channel->validate();
      if (channel->levels != scenario.levels)
        throw ConfigError("channel levels must equal the quantizer levels");
    }
    if ((method == QuantizerMethod::NonQuantized) != (fusion == FusionMode::DdtNonQuantized))
      throw ConfigError("non-quantized transmission pairs only with direct non-quantized fusion");
    if (method == QuantizerMethod::KthRoot && scenario.levels != 2)
      throw ConfigError("the K-th root quantizer is binary (levels = 2)");
    if (thresholds && thresholds->levels() != scenario.levels)
      throw ConfigError("threshold count does not match levels");
  }
};

/// Threshold and boundary randomization realizing an exact false-alarm rate.
struct NpThreshold {
  double threshold = 0.0;
  double boundary_prob = 0.0;
};

/// Order-statistic NP threshold on the empirical H0 distribution: the
/// exceedance P(S > t) + gamma P(S = t) equals target_pfa exactly.
inline NpThreshold calibrate_sorted(std::span<const double> ascending, double target_pfa) {
  if (ascending.empty()) throw ConfigError("calibration needs at least one H0 statistic");
  if (!(target_pfa >= 0.0 && target_pfa <= 1.0)) throw ConfigError("target_pfa must lie in [0, 1]");
  const auto n = static_cast<double>(ascending.size());
  if (target_pfa == 0.0)
    return {std::nextafter(ascending.back(), std::numeric_limits<double>::infinity()), 0.0};
  if (target_pfa == 1.0) return {-std::numeric_limits<double>::infinity(), 1.0};

  double alarms = target_pfa * n;
  if (std::abs(alarms - std::round(alarms)) < 1e-9 * n) alarms = std::round(alarms);
  // t is the ceil(alarms)-th largest value.
  const auto rank = static_cast<std::size_t>(std::ceil(alarms)) - 1;
  const double t = ascending[ascending.size() - 1 - rank];
  const auto range = std::equal_range(ascending.begin(), ascending.end(), t);
  const auto above = static_cast<double>(ascending.end() - range.second);
  const auto at = static_cast<double>(range.second - range.first);
  return {t, std::clamp((alarms - above) / at, 0.0, 1.0)};
}

inline NpThreshold calibrate_threshold(std::span<const double> h0_statistics, double target_pfa) {
  std::vector<double> sorted(h0_statistics.begin(), h0_statistics.end());
  std::sort(sorted.begin(), sorted.end());
  return calibrate_sorted(sorted, target_pfa);
}

/// P(S > t) + gamma P(S = t) over a sorted sample.
inline double exceedance(std::span<const double> ascending, const NpThreshold& np) {
  const auto range = std::equal_range(ascending.begin(), ascending.end(), np.threshold);
  const auto n = static_cast<double>(ascending.size());
  return (static_cast<double>(ascending.end() - range.second) +
          np.boundary_prob * static_cast<double>(range.second - range.first)) /
         n;
}

/// Quantizer actually used by an experiment.
struct QuantizerDesign {
  ThresholdVector thresholds;
  CellPmf pmf_h0{std::vector<double>{1.0}};
  CellPmf pmf_h1{std::vector<double>{1.0}};
};

inline QuantizerDesign design_quantizer(const ExperimentSpec& spec) {
  QuantizerDesign q;
  switch (spec.method) {
    case QuantizerMethod::NonQuantized:
      return q;
    case QuantizerMethod::KthRoot:
      q.thresholds = spec.kthroot_mass
                         ? kth_root_from_mass(*spec.kthroot_mass, spec.scenario).thresholds
                         : kth_root_quantizer(spec.kthroot_design_pfa, spec.scenario).thresholds;
      break;
    case QuantizerMethod::MAE:
    case QuantizerMethod::MJD: {
      if (spec.thresholds) {
        q.thresholds = *spec.thresholds;
      } else {
        const ObjectiveKind kind = objective_for(spec.method);
        q.thresholds = optimize_thresholds(kind, spec.scenario,
                                           OptimizerSettings::defaults_for(kind, spec.scenario))
                           .thresholds;
      }
      break;
    }
  }
  q.pmf_h0 = cell_pmf_given_mean(q.thresholds, 0.0, snr_to_sigma(spec.scenario));
  q.pmf_h1 = averaged_pmf_h1(q.thresholds, spec.scenario);
  return q;
}

namespace detail {

inline constexpr std::int64_t kTrialsPerChunk = 2048;

/// Per-chunk generator; the stream depends only on (seed, hypothesis, chunk).
inline std::mt19937_64 chunk_rng(std::uint64_t seed, Hypothesis h, std::int64_t chunk) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h == Hypothesis::H0 ? 0 : 1),
                    static_cast<std::uint32_t>(chunk), static_cast<std::uint32_t>(chunk >> 32)};
  return std::mt19937_64(seq);
}

/// Decision statistic of one realization under the experiment's fusion mode.
class TrialStatistic {
 public:
  TrialStatistic(const ExperimentSpec& spec, const QuantizerDesign& design)
      : spec_(spec), design_(design) {
    if (spec.method == QuantizerMethod::NonQuantized)
      nq_.emplace(spec.scenario, spec.nonquantized_points);
    else
      table_ = symbol_llr_table(design.pmf_h0, design.pmf_h1);
  }

  template <class Rng>
  double operator()(Hypothesis h, Rng& rng) {
    const SensorObservations obs = generate_observations(h, spec_.scenario, rng);
    double total = 0.0;
    switch (spec_.fusion) {
      case FusionMode::DdtNonQuantized:
        for (double y : obs.values) total += (*nq_)(y);
        return total;
      case FusionMode::DdtQuantized:
        for (double y : obs.values)
          total += table_[static_cast<std::size_t>(quantize(y, design_.thresholds) - 1)];
        return total;
      case FusionMode::FadingOptimal:
        for (double y : obs.values) {
          const ChannelObservation received = transmit(quantize(y, design_.thresholds), *spec_.channel, rng);
          total += fading_sensor_llr(received, design_.pmf_h0, design_.pmf_h1, *spec_.channel, ll_);
        }
        return total;
      case FusionMode::FadingSubOptimal:
        for (double y : obs.values) {
          const ChannelObservation received = transmit(quantize(y, design_.thresholds), *spec_.channel, rng);
          const int decoded = ml_symbol_decision(received, *spec_.channel);
          total += spec_.suboptimal_summand == SubOptimalSummand::SymbolIndex
                       ? static_cast<double>(decoded - 1)
                       : table_[static_cast<std::size_t>(decoded - 1)];
        }
        return total;
    }
    return total;
  }

 private:
  const ExperimentSpec& spec_;
  const QuantizerDesign& design_;
  std::optional<NonQuantizedLlr> nq_;
  std::vector<double> table_;
  std::vector<double> ll_;
};

}  // namespace detail

/// Decision statistics of `trials` independent realizations under h.
/// Trials are split into fixed chunks with their own streams, so the output
/// does not depend on the number of workers.
inline std::vector<double> simulate_statistics(const ExperimentSpec& spec, const QuantizerDesign& design,
                                               Hypothesis h) {
  std::vector<double> out(static_cast<std::size_t>(spec.trials));
  const std::int64_t chunks = (spec.trials + detail::kTrialsPerChunk - 1) / detail::kTrialsPerChunk;
  std::atomic<std::int64_t> next{0};
  auto work = [&] {
    detail::TrialStatistic statistic(spec, design);
    for (std::int64_t c = next++; c < chunks; c = next++) {
      auto rng = detail::chunk_rng(spec.seed, h, c);
      const std::int64_t begin = c * detail::kTrialsPerChunk;
      const std::int64_t end = std::min(spec.trials, begin + detail::kTrialsPerChunk);
      for (std::int64_t t = begin; t < end; ++t) out[static_cast<std::size_t>(t)] = statistic(h, rng);
    }
  };
  unsigned workers = spec.workers ? spec.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::int64_t>(workers, chunks));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return out;
}

inline std::string channel_tag(const ExperimentSpec& spec) {
  return is_fading(spec.fusion) ? "rayleigh" : "ddt";
}

/// Monte Carlo ROC: thresholds calibrated on simulated H0 statistics, p_d from
/// an independent H1 sample. Boundary randomization enters p_d through its
/// expectation P(S1 > t) + gamma P(S1 = t).
inline RocCurve run_roc(const ExperimentSpec& spec) {
  spec.validate();
  const QuantizerDesign design = design_quantizer(spec);
  std::vector<double> h0 = simulate_statistics(spec, design, Hypothesis::H0);
  std::vector<double> h1 = simulate_statistics(spec, design, Hypothesis::H1);
  std::sort(h0.begin(), h0.end());
  std::sort(h1.begin(), h1.end());

  RocCurve curve;
  curve.method = to_string(spec.method);
  curve.levels = spec.method == QuantizerMethod::NonQuantized ? 0 : spec.scenario.levels;
  curve.channel = channel_tag(spec);
  curve.fusion = to_string(spec.fusion);
  curve.trials = spec.trials;
  curve.seed = spec.seed;

  std::vector<double> grid = spec.pfa_grid;
  std::sort(grid.begin(), grid.end());
  double running = 0.0;
  for (double pfa : grid) {
    const NpThreshold np = calibrate_sorted(h0, pfa);
    // Monotone cleanup; a no-op for exact calibration up to rounding.
    running = std::max(running, exceedance(h1, np));
    const double pd = std::min(1.0, running);
    curve.points.push_back(
        {pfa, pd, std::sqrt(pd * (1.0 - pd) / static_cast<double>(spec.trials))});
  }
  return curve;
}

/// ROC CSV with header pfa,pd,pd_stderr,method,levels,channel,fusion,trials,seed.
inline void write_roc_csv(std::ostream& out, std::span<const RocCurve> curves, bool header = true) {
  if (header) out << "pfa,pd,pd_stderr,method,levels,channel,fusion,trials,seed\n";
  char buf[256];
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%s,%d,%s,%s,%lld,%llu\n", p.pfa, p.pd,
                    p.pd_stderr, c.method.c_str(), c.levels, c.channel.c_str(), c.fusion.c_str(),
                    static_cast<long long>(c.trials), static_cast<unsigned long long>(c.seed));
      out << buf;
    }
  }
}

/// MAE-versus-MJD detection gains over a (p_fa, M) grid.
struct GainRow {
  double pfa = 0.0;
  int levels = 0;
  double pd_mae = 0.0;
  double pd_mjd = 0.0;
  double gain = 0.0;          // pd_mae - pd_mjd
  double percent_gain = 0.0;  // 100 gain / pd_mae
  double stderr_gain = 0.0;   // combined binomial standard error
};

struct GainReport {
  std::vector<GainRow> rows;
  std::vector<double> pfa_grid;
  std::vector<double> pd_nonquantized;  // aligned with pfa_grid
  std::vector<RocCurve> curves;

  double average_gain(int levels) const {
    double s = 0.0;
    int n = 0;
    for (const auto& r : rows)
      if (r.levels == levels) {
        s += r.gain;
        ++n;
      }
    return n ? s / n : 0.0;
  }

  double average_percent_gain(int levels) const {
    double s = 0.0;
    int n = 0;
    for (const auto& r : rows)
      if (r.levels == levels) {
        s += r.percent_gain;
        ++n;
      }
    return n ? s / n : 0.0;
  }

  double pd(const std::string& method, int levels, double pfa) const {
    for (const auto& c : curves)
      if (c.method == method && c.levels == levels)
        for (const auto& p : c.points)
          if (std::abs(p.pfa - pfa) < 1e-12) return p.pd;
    throw ConfigError("no curve point for " + method + " at the requested p_fa");
  }
};

struct TablesConfig {
  ScenarioConfig scenario;
  std::vector<int> levels = {2, 3, 4, 6};
  std::vector<double> pfa_grid = {0.1, 0.2, 0.3, 0.4};
  std::int64_t trials = 100'000;
  std::uint64_t seed = 1;
  unsigned workers = 0;
};

inline CacheKey cache_key(QuantizerMethod method, const ScenarioConfig& scenario) {
  return {to_string(method), scenario.levels, scenario.snr_db, scenario.amplitude_ratio};
}

/// Direct-transmission p_d grid for MAE and MJD at every level plus the
/// non-quantized reference, with MAE-over-MJD gains. All MAE/MJD thresholds
/// come from the cache; a missing entry raises CacheMiss naming the key.
inline GainReport reproduce_tables(const TablesConfig& config, const ThresholdCache& cache) {
  GainReport report;
  report.pfa_grid = config.pfa_grid;
  std::sort(report.pfa_grid.begin(), report.pfa_grid.end());

  // Resolve all cache entries before simulating anything.
  std::vector<ExperimentSpec> specs;
  for (int levels : config.levels) {
    for (QuantizerMethod method : {QuantizerMethod::MJD, QuantizerMethod::MAE}) {
      ExperimentSpec spec;
      spec.scenario = config.scenario;
      spec.scenario.levels = levels;
      spec.method = method;
      spec.fusion = FusionMode::DdtQuantized;
      spec.trials = config.trials;
      spec.seed = config.seed;
      spec.pfa_grid = report.pfa_grid;
      spec.workers = config.workers;
      spec.thresholds = ThresholdVector(cache.require(cache_key(method, spec.scenario)).cuts);
      specs.push_back(std::move(spec));
    }
  }
  ExperimentSpec nq;
  nq.scenario = config.scenario;
  nq.method = QuantizerMethod::NonQuantized;
  nq.fusion = FusionMode::DdtNonQuantized;
  nq.trials = config.trials;
  nq.seed = config.seed;
  nq.pfa_grid = report.pfa_grid;
  nq.workers = config.workers;
  specs.push_back(nq);

  for (const auto& spec : specs) report.curves.push_back(run_roc(spec));
  for (const auto& p : report.curves.back().points) report.pd_nonquantized.push_back(p.pd);

  const double n = static_cast<double>(config.trials);
  for (int levels : config.levels) {
    for (double pfa : report.pfa_grid) {
      GainRow row;
      row.pfa = pfa;
      row.levels = levels;
      row.pd_mae = report.pd("mae", levels, pfa);
      row.pd_mjd = report.pd("mjd", levels, pfa);
      row.gain = row.pd_mae - row.pd_mjd;
      row.percent_gain = row.pd_mae > 0.0 ? 100.0 * row.gain / row.pd_mae : 0.0;
      row.stderr_gain = std::sqrt(row.pd_mae * (1 - row.pd_mae) / n + row.pd_mjd * (1 - row.pd_mjd) / n);
      report.rows.push_back(row);
    }
  }
  return report;
}

}  // namespace qdd
