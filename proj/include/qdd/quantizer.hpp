// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qdd/core.hpp"
#include "qdd/quadrature.hpp"
#include "qdd/signal_model.hpp"

namespace qdd {

/// Symbol (1..M) of observation y: cell m covers (beta_{m-1}, beta_m].
inline int quantize(double y, const ThresholdVector& thresholds) {
  const auto cuts = thresholds.cuts();
  return 1 + static_cast<int>(std::lower_bound(cuts.begin(), cuts.end(), y) - cuts.begin());
}

namespace detail {

/// Mass of the Gaussian between standardized bounds lo < hi. Differences are
/// taken on whichever side of the mean keeps them away from cancellation.
inline double gaussian_interval(double lo, double hi) {
  if (hi <= 0.0) return std::max(0.0, gaussian_cdf(hi) - gaussian_cdf(lo));
  if (lo >= 0.0) return std::max(0.0, gaussian_tail(lo) - gaussian_tail(hi));
  return std::max(0.0, 1.0 - gaussian_cdf(lo) - gaussian_tail(hi));
}

/// Writes the M cell masses for N(mean, sigma^2) into out (size cuts + 1).
inline void cell_masses(std::span<const double> cuts, double mean, double sigma,
                        std::span<double> out) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double lo = -inf;
  for (std::size_t m = 0; m <= cuts.size(); ++m) {
    const double hi = m < cuts.size() ? (cuts[m] - mean) / sigma : inf;
    out[m] = gaussian_interval(lo, hi);
    lo = hi;
  }
}

inline double entropy_bits(std::span<const double> p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log2(x);
  return h;
}

/// J(p, q) in bits; +inf when exactly one of a cell pair is zero.
inline double j_divergence_bits(std::span<const double> p, std::span<const double> q) {
  double j = 0.0;
  for (std::size_t m = 0; m < p.size(); ++m) {
    if (p[m] == 0.0 && q[m] == 0.0) continue;
    if (p[m] == 0.0 || q[m] == 0.0) return std::numeric_limits<double>::infinity();
    j += (p[m] - q[m]) * (std::log2(p[m]) - std::log2(q[m]));
  }
  return j;
}

}  // namespace detail

inline CellPmf cell_pmf_given_mean(const ThresholdVector& thresholds, double mean, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0");
  std::vector<double> masses(thresholds.size() + 1);
  detail::cell_masses(thresholds.cuts(), mean, sigma, masses);
  return CellPmf(std::move(masses));
}

/// Quadrature target for prior expectations of cell masses.
inline constexpr double kPmfQuadratureTolerance = 1e-10;
/// Quadrature target for prior expectations of objectives.
inline constexpr double kObjectiveQuadratureTolerance = 1e-8;

/// Cell masses under H1 averaged over the amplitude prior.
///
/// Each cut's CDF value is integrated separately and the masses are taken as
/// differences, so they telescope to exactly one.
inline CellPmf averaged_pmf_h1(const ThresholdVector& thresholds, const ScenarioConfig& config) {
  const double sigma = snr_to_sigma(config);
  const AmplitudePrior prior = AmplitudePrior::from(config);
  if (prior.is_point_mass()) return cell_pmf_given_mean(thresholds, prior.a_max, sigma);

  const auto cuts = thresholds.cuts();
  std::vector<double> cdf(cuts.size());
  std::vector<double> tail(cuts.size());
  for (std::size_t i = 0; i < cuts.size(); ++i) {
    const double beta = cuts[i];
    cdf[i] = integrate_adaptive(
        [&](double u) { return gaussian_cdf((beta - sample_amplitude(u, prior)) / sigma); }, 0.0,
        1.0, kPmfQuadratureTolerance, "averaged H1 cell mass");
    tail[i] = integrate_adaptive(
        [&](double u) { return gaussian_tail((beta - sample_amplitude(u, prior)) / sigma); }, 0.0,
        1.0, kPmfQuadratureTolerance, "averaged H1 cell mass");
  }
  std::vector<double> masses(cuts.size() + 1);
  for (std::size_t m = 0; m <= cuts.size(); ++m) {
    double mass = 0.0;
    if (cuts.empty()) {
      mass = 1.0;
    } else if (m == 0) {
      mass = cdf[0];
    } else if (m == cuts.size()) {
      mass = tail[m - 1];
    } else {
      // Take the difference on the smaller side.
      mass = cdf[m] < 0.5 ? cdf[m] - cdf[m - 1] : tail[m - 1] - tail[m];
    }
    masses[m] = std::clamp(mass, 0.0, 1.0);
  }
  // Quadrature errors of the two sides are ~1e-12; renormalize the residual.
  double total = 0.0;
  for (double p : masses) total += p;
  for (double& p : masses) p /= total;
  return CellPmf(std::move(masses));
}

/// Shannon entropy in bits, 0 log 0 := 0.
inline double entropy(const CellPmf& pmf) { return detail::entropy_bits(pmf.masses()); }

/// D(p || q) in bits; +inf when q has a zero where p does not.
inline double kl_divergence(const CellPmf& p, const CellPmf& q) {
  if (p.size() != q.size()) throw ConfigError("pmfs must have the same number of cells");
  double d = 0.0;
  for (std::size_t m = 0; m < p.size(); ++m) {
    if (p[m] == 0.0) continue;
    if (q[m] == 0.0) return std::numeric_limits<double>::infinity();
    d += p[m] * std::log2(p[m] / q[m]);
  }
  return std::max(0.0, d);
}

inline double j_divergence(const CellPmf& p, const CellPmf& q) {
  return kl_divergence(p, q) + kl_divergence(q, p);
}

enum class ObjectiveKind { AverageEntropy, JDivergence };

inline const char* to_string(ObjectiveKind kind) {
  return kind == ObjectiveKind::AverageEntropy ? "mae" : "mjd";
}

/// How the H1 entropy term averages over the amplitude prior.
///  - ExpectedConditional: E_A[ H(p^{H1}(A)) ]  (default)
///  - AveragedPmf:         H( E_A[p^{H1}(A)] )
enum class EntropyReading { ExpectedConditional, AveragedPmf };

/// F_av = (F_H0 + F_H1) / 2 in bits.
inline double average_entropy_objective(const ThresholdVector& thresholds,
                                        const ScenarioConfig& config,
                                        EntropyReading reading = EntropyReading::ExpectedConditional) {
  const double sigma = snr_to_sigma(config);
  const AmplitudePrior prior = AmplitudePrior::from(config);
  const double f_h0 = entropy(cell_pmf_given_mean(thresholds, 0.0, sigma));

  double f_h1 = 0.0;
  if (reading == EntropyReading::AveragedPmf) {
    f_h1 = entropy(averaged_pmf_h1(thresholds, config));
  } else if (prior.is_point_mass()) {
    f_h1 = entropy(cell_pmf_given_mean(thresholds, prior.a_max, sigma));
  } else {
    std::vector<double> masses(thresholds.size() + 1);
    f_h1 = integrate_adaptive(
        [&](double u) {
          detail::cell_masses(thresholds.cuts(), sample_amplitude(u, prior), sigma, masses);
          return detail::entropy_bits(masses);
        },
        0.0, 1.0, kObjectiveQuadratureTolerance, "average entropy objective");
  }
  return 0.5 * (f_h0 + f_h1);
}

/// Expected per-sensor J-divergence E_A[ J(p^{H1}(A), p^{H0}) ] in bits.
inline double jd_objective(const ThresholdVector& thresholds, const ScenarioConfig& config) {
  const double sigma = snr_to_sigma(config);
  const AmplitudePrior prior = AmplitudePrior::from(config);
  std::vector<double> p0(thresholds.size() + 1);
  detail::cell_masses(thresholds.cuts(), 0.0, sigma, p0);
  std::vector<double> p1(p0.size());
  auto at = [&](double amplitude) {
    detail::cell_masses(thresholds.cuts(), amplitude, sigma, p1);
    return detail::j_divergence_bits(p1, p0);
  };
  if (prior.is_point_mass()) return at(prior.a_max);
  return integrate_adaptive([&](double u) { return at(sample_amplitude(u, prior)); }, 0.0, 1.0,
                            kObjectiveQuadratureTolerance, "J-divergence objective");
}

/// Terms relating J-divergence to the two output entropies.
/// p is the pmf under H0 (F_H0 = H(p)) and q the pmf under H1.
struct JdDecomposition {
  double r1 = 0.0;  // sum p log2(1/q)
  double r2 = 0.0;  // sum q log2(1/p)
  double f_h0 = 0.0;
  double f_h1 = 0.0;
  double c1 = 0.0;  // D(p||q) / F_H0
  double c2 = 0.0;  // D(q||p) / F_H1
  double c3 = 0.0;
  double j = 0.0;

  double f_av() const { return 0.5 * (f_h0 + f_h1); }
};

inline JdDecomposition jd_decomposition(const CellPmf& p, const CellPmf& q) {
  if (p.size() != q.size()) throw ConfigError("pmfs must have the same number of cells");
  for (std::size_t m = 0; m < p.size(); ++m)
    if (!(p[m] > 0.0) || !(q[m] > 0.0))
      throw std::domain_error("jd_decomposition needs strictly positive masses");

  JdDecomposition d;
  for (std::size_t m = 0; m < p.size(); ++m) {
    d.r1 -= p[m] * std::log2(q[m]);
    d.r2 -= q[m] * std::log2(p[m]);
  }
  d.f_h0 = entropy(p);
  d.f_h1 = entropy(q);
  d.j = d.r1 + d.r2 - (d.f_h0 + d.f_h1);

  const double d_pq = kl_divergence(p, q);
  const double d_qp = kl_divergence(q, p);
  if (d.f_h0 == 0.0 || d.f_h1 == 0.0)
    throw std::domain_error("jd_decomposition ratio undefined for zero entropy");
  d.c1 = d_pq / d.f_h0;
  d.c2 = d_qp / d.f_h1;
  d.c3 = d.c1 >= d.c2 ? (d.c1 - d.c2) * d.f_h0 : (d.c2 - d.c1) * d.f_h1;
  return d;
}

/// Search settings for optimize_thresholds. Grid bounds are in observation units.
struct OptimizerSettings {
  double grid_lo = -3.0;
  double grid_hi = 3.0;
  double grid_step = 0.01;
  int refine_passes = 2;
  /// Amplitude nodes of the fixed rule used to score candidate tuples.
  int mc_samples = 64;
  /// Largest number of ordered tuples scored exhaustively before the coarse
  /// grid is thinned by powers of two.
  std::int64_t max_coarse_tuples = 3'000'000;
  EntropyReading entropy_reading = EntropyReading::ExpectedConditional;

  void validate() const {
    if (!(grid_lo < grid_hi)) throw ConfigError("grid_lo must be < grid_hi");
    if (!(grid_step > 0.0) || grid_step > grid_hi - grid_lo)
      throw ConfigError("grid_step must be in (0, grid_hi - grid_lo]");
    if (refine_passes < 0) throw ConfigError("refine_passes must be >= 0");
    if (mc_samples < 1) throw ConfigError("mc_samples must be >= 1");
    if (max_coarse_tuples < 1) throw ConfigError("max_coarse_tuples must be >= 1");
  }

  /// [-3 sigma, 3 sigma] at 0.01 sigma, widened to +-8 sigma for six-level MJD.
  static OptimizerSettings defaults_for(ObjectiveKind kind, const ScenarioConfig& config) {
    const double sigma = snr_to_sigma(config);
    OptimizerSettings s;
    const double half = (kind == ObjectiveKind::JDivergence && config.levels >= 6) ? 8.0 : 3.0;
    s.grid_lo = -half * sigma;
    s.grid_hi = half * sigma;
    s.grid_step = 0.01 * sigma;
    return s;
  }

  /// Stable text form, used for cache fingerprints.
  std::string fingerprint() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "lo=%.17g;hi=%.17g;step=%.17g;refine=%d;nodes=%d;coarse=%lld;reading=%d",
                  grid_lo, grid_hi, grid_step, refine_passes, mc_samples,
                  static_cast<long long>(max_coarse_tuples), static_cast<int>(entropy_reading));
    return buf;
  }
};

/// Fixed-rule objective scorer used inside the search.
class ObjectiveEvaluator {
 public:
  ObjectiveEvaluator(ObjectiveKind kind, const ScenarioConfig& config, int amplitude_nodes,
                     EntropyReading reading = EntropyReading::ExpectedConditional)
      : kind_(kind),
        reading_(reading),
        sigma_(snr_to_sigma(config)),
        rule_(AmplitudeRule::make(AmplitudePrior::from(config), amplitude_nodes)) {}

  double sigma() const { return sigma_; }
  const AmplitudeRule& rule() const { return rule_; }

  /// Scores a tuple of ascending cuts.
  double operator()(std::span<const double> cuts) const {
    const std::size_t cells = cuts.size() + 1;
    p0_.resize(cells);
    p1_.resize(cells);
    detail::cell_masses(cuts, 0.0, sigma_, p0_);
    return score(p0_, [&](std::size_t j, std::span<double> out) {
      detail::cell_masses(cuts, rule_.amplitudes[j], sigma_, out);
    });
  }

  /// Scores from precomputed per-node masses: fill(j, out) writes the H1
  /// masses at amplitude node j. p0 holds the H0 masses.
  template <class Fill>
  double score(std::span<const double> p0, Fill&& fill) const {
    const std::size_t cells = p0.size();
    p1_.resize(cells);
    if (kind_ == ObjectiveKind::AverageEntropy) {
      const double f_h0 = detail::entropy_bits(p0);
      double f_h1 = 0.0;
      if (reading_ == EntropyReading::AveragedPmf) {
        avg_.assign(cells, 0.0);
        for (std::size_t j = 0; j < rule_.size(); ++j) {
          fill(j, std::span<double>(p1_));
          for (std::size_t m = 0; m < cells; ++m) avg_[m] += rule_.weights[j] * p1_[m];
        }
        f_h1 = detail::entropy_bits(avg_);
      } else {
        for (std::size_t j = 0; j < rule_.size(); ++j) {
          fill(j, std::span<double>(p1_));
          f_h1 += rule_.weights[j] * detail::entropy_bits(p1_);
        }
      }
      return 0.5 * (f_h0 + f_h1);
    }
    double jd = 0.0;
    for (std::size_t j = 0; j < rule_.size(); ++j) {
      fill(j, std::span<double>(p1_));
      jd += rule_.weights[j] * detail::j_divergence_bits(p1_, p0);
    }
    return jd;
  }

 private:
  ObjectiveKind kind_;
  EntropyReading reading_;
  double sigma_;
  AmplitudeRule rule_;
  mutable std::vector<double> p0_;
  mutable std::vector<double> p1_;
  mutable std::vector<double> avg_;
};

struct OptimizationResult {
  ThresholdVector thresholds;
  /// Objective at the returned thresholds, evaluated by adaptive quadrature.
  double objective = 0.0;
  /// Objective under the search's fixed amplitude rule.
  double search_objective = 0.0;
  std::int64_t evaluations = 0;
};

/// Exact objective (adaptive quadrature) for a threshold vector.
inline double evaluate_objective(ObjectiveKind kind, const ThresholdVector& thresholds,
                                 const ScenarioConfig& config,
                                 EntropyReading reading = EntropyReading::ExpectedConditional) {
  return kind == ObjectiveKind::AverageEntropy
             ? average_entropy_objective(thresholds, config, reading)
             : jd_objective(thresholds, config);
}

namespace detail {

inline double binomial(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return 0.0;
  double c = 1.0;
  for (std::int64_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c;
}

/// Tracks the best tuple; ties keep the lexicographically smallest.
struct Incumbent {
  std::vector<double> cuts;
  double value = -std::numeric_limits<double>::infinity();

  void offer(std::span<const double> candidate, double v) {
    if (std::isnan(v)) return;
    if (v > value || (v == value && std::lexicographical_compare(candidate.begin(), candidate.end(),
                                                                 cuts.begin(), cuts.end()))) {
      value = v;
      cuts.assign(candidate.begin(), candidate.end());
    }
  }
};

}  // namespace detail

/// Maximizes the MAE or MJD objective over ascending threshold tuples.
///
/// Stage 1 scores every ordered tuple of a grid over [grid_lo, grid_hi]. The
/// grid is the fine grid thinned by the smallest power of two that keeps the
/// tuple count within max_coarse_tuples. Stage 2 repeatedly scans all ordered
/// moves of up to two steps per coordinate around the incumbent, halving the
/// step until it reaches grid_step, then for refine_passes further halvings.
/// Every scored point is a grid point; the returned tuple is the best scored.
inline OptimizationResult optimize_thresholds(ObjectiveKind kind, const ScenarioConfig& config,
                                              const OptimizerSettings& settings) {
  config.validate();
  settings.validate();
  const int dims = config.levels - 1;
  const double lo = settings.grid_lo;
  const double hi = settings.grid_hi;
  const double step = settings.grid_step;
  const auto fine_points = static_cast<std::int64_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  if (fine_points < dims)
    throw ConfigError("threshold grid has fewer points than the " + std::to_string(dims) +
                      " cuts required");

  const ObjectiveEvaluator evaluator(kind, config, settings.mc_samples, settings.entropy_reading);
  const AmplitudeRule& rule = evaluator.rule();
  const double sigma = evaluator.sigma();
  OptimizationResult result;
  detail::Incumbent best;

  // Stage 1: coarse exhaustive scan.
  std::int64_t thin = 1;
  auto coarse_count = [&](std::int64_t t) { return (fine_points - 1) / t + 1; };
  while (thin < fine_points && coarse_count(thin) >= dims &&
         detail::binomial(coarse_count(thin), dims) > static_cast<double>(settings.max_coarse_tuples) &&
         coarse_count(thin * 2) >= dims)
    thin *= 2;
  const std::int64_t n = coarse_count(thin);
  const double coarse_step = step * static_cast<double>(thin);
  std::vector<double> grid(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) grid[static_cast<std::size_t>(i)] = lo + static_cast<double>(i) * coarse_step;

  // Per grid point and amplitude node: standardized position, its CDF and tail.
  const std::size_t nodes = rule.size();
  std::vector<double> z_tab(static_cast<std::size_t>(n) * nodes);
  std::vector<double> cdf_tab(z_tab.size());
  std::vector<double> tail_tab(z_tab.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t j = 0; j < nodes; ++j) {
      const double z = (grid[i] - rule.amplitudes[j]) / sigma;
      z_tab[i * nodes + j] = z;
      cdf_tab[i * nodes + j] = gaussian_cdf(z);
      tail_tab[i * nodes + j] = gaussian_tail(z);
    }
  }
  auto interval_from_table = [&](std::int64_t lo_idx, std::int64_t hi_idx, std::size_t j) {
    // lo_idx == -1 is -inf, hi_idx == -1 is +inf.
    if (lo_idx < 0 && hi_idx < 0) return 1.0;
    if (lo_idx < 0) return cdf_tab[static_cast<std::size_t>(hi_idx) * nodes + j];
    const std::size_t a = static_cast<std::size_t>(lo_idx) * nodes + j;
    if (hi_idx < 0) return tail_tab[a];
    const std::size_t b = static_cast<std::size_t>(hi_idx) * nodes + j;
    if (z_tab[b] <= 0.0) return std::max(0.0, cdf_tab[b] - cdf_tab[a]);
    if (z_tab[a] >= 0.0) return std::max(0.0, tail_tab[a] - tail_tab[b]);
    return std::max(0.0, 1.0 - cdf_tab[a] - tail_tab[b]);
  };

  std::vector<std::int64_t> idx(static_cast<std::size_t>(dims));
  for (int d = 0; d < dims; ++d) idx[static_cast<std::size_t>(d)] = d;
  std::vector<double> cuts(static_cast<std::size_t>(dims));
  std::vector<double> p0(static_cast<std::size_t>(dims) + 1);
  for (;;) {
    for (int d = 0; d < dims; ++d) cuts[static_cast<std::size_t>(d)] = grid[static_cast<std::size_t>(idx[static_cast<std::size_t>(d)])];
    detail::cell_masses(cuts, 0.0, sigma, p0);
    const double v = evaluator.score(p0, [&](std::size_t j, std::span<double> out) {
      for (int m = 0; m <= dims; ++m) {
        const std::int64_t a = m == 0 ? -1 : idx[static_cast<std::size_t>(m - 1)];
        const std::int64_t b = m == dims ? -1 : idx[static_cast<std::size_t>(m)];
        out[static_cast<std::size_t>(m)] = interval_from_table(a, b, j);
      }
    });
    ++result.evaluations;
    best.offer(cuts, v);

    // Next combination in lexicographic order.
    int d = dims - 1;
    while (d >= 0 && idx[static_cast<std::size_t>(d)] == n - dims + d) --d;
    if (d < 0) break;
    ++idx[static_cast<std::size_t>(d)];
    for (int e = d + 1; e < dims; ++e) idx[static_cast<std::size_t>(e)] = idx[static_cast<std::size_t>(e - 1)] + 1;
  }

  // Stage 2: local refinement with halving steps.
  double h = coarse_step;
  int passes_below_grid = 0;
  std::vector<int> offset(static_cast<std::size_t>(dims));
  std::vector<double> candidate(static_cast<std::size_t>(dims));
  for (;;) {
    for (int sweep = 0; sweep < 1000; ++sweep) {
      const std::vector<double> centre = best.cuts;
      const double before = best.value;
      std::fill(offset.begin(), offset.end(), -2);
      for (;;) {
        bool ok = true;
        for (int d = 0; d < dims && ok; ++d) {
          const auto ud = static_cast<std::size_t>(d);
          candidate[ud] = centre[ud] + offset[ud] * h;
          if (candidate[ud] < lo - 1e-12 || candidate[ud] > hi + 1e-12) ok = false;
          if (d > 0 && !(candidate[ud] > candidate[ud - 1] + 1e-12)) ok = false;
        }
        bool moved = false;
        for (int o : offset) moved = moved || o != 0;
        if (ok && moved) {
          best.offer(candidate, evaluator(candidate));
          ++result.evaluations;
        }
        int d = dims - 1;
        while (d >= 0 && offset[static_cast<std::size_t>(d)] == 2) offset[static_cast<std::size_t>(d--)] = -2;
        if (d < 0) break;
        ++offset[static_cast<std::size_t>(d)];
      }
      if (!(best.value > before)) break;
    }
    if (h <= step * (1.0 + 1e-9)) {
      if (passes_below_grid >= settings.refine_passes) break;
      ++passes_below_grid;
    }
    h *= 0.5;
  }

  result.thresholds = ThresholdVector(best.cuts);
  result.search_objective = best.value;
  result.objective = evaluate_objective(kind, result.thresholds, config, settings.entropy_reading);
  return result;
}

/// Binary quantizer from the K-th root rule: per-sensor no-alarm mass p0
/// solves p0^K = 1 - p_fa, and the cut is sigma * Phi^{-1}(p0).
struct KthRootDesign {
  ThresholdVector thresholds;
  double no_alarm_mass = 0.0;
};

inline KthRootDesign kth_root_from_mass(double no_alarm_mass, const ScenarioConfig& config) {
  if (!(no_alarm_mass > 0.0 && no_alarm_mass < 1.0))
    throw ConfigError("per-sensor no-alarm mass must lie in (0, 1)");
  const double sigma = snr_to_sigma(config);
  return {ThresholdVector({sigma * gaussian_quantile(no_alarm_mass)}), no_alarm_mass};
}

inline KthRootDesign kth_root_quantizer(double p_fa_global, const ScenarioConfig& config) {
  if (config.levels != 2) throw ConfigError("K-th root quantizer supports levels = 2 only");
  if (!(p_fa_global > 0.0 && p_fa_global < 1.0))
    throw ConfigError("global false-alarm probability must lie in (0, 1)");
  const double p0 = std::exp(std::log1p(-p_fa_global) / config.sensor_count);
  return kth_root_from_mass(p0, config);
}

}  // namespace qdd
