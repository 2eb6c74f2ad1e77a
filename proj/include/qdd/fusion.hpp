// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "qdd/channel.hpp"
#include "qdd/core.hpp"
#include "qdd/quantizer.hpp"
#include "qdd/signal_model.hpp"

namespace qdd {

enum class FusionMode { DdtNonQuantized, DdtQuantized, FadingOptimal, FadingSubOptimal };

inline const char* to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::DdtNonQuantized: return "ddt-nonquantized";
    case FusionMode::DdtQuantized: return "ddt-quantized";
    case FusionMode::FadingOptimal: return "optimal";
    case FusionMode::FadingSubOptimal: return "suboptimal";
  }
  return "?";
}

inline bool is_fading(FusionMode mode) {
  return mode == FusionMode::FadingOptimal || mode == FusionMode::FadingSubOptimal;
}

/// Fusion-center statistic; compared against a threshold downstream.
struct DecisionStatistic {
  double value = 0.0;
  FusionMode mode = FusionMode::DdtQuantized;
};

/// Per-sensor marginal LLR of an unquantized observation,
/// log E_A[ exp(A y / sigma^2 - A^2 / (2 sigma^2)) ], on a fixed amplitude rule.
class NonQuantizedLlr {
 public:
  NonQuantizedLlr(const ScenarioConfig& config, int quadrature_points)
      : sigma2_(std::pow(snr_to_sigma(config), 2)),
        point_mass_(AmplitudePrior::from(config).is_point_mass()) {
    if (quadrature_points < 8) throw ConfigError("quadrature_points must be >= 8");
    const AmplitudeRule rule = AmplitudeRule::make(AmplitudePrior::from(config), quadrature_points);
    amplitudes_ = rule.amplitudes;
    for (std::size_t j = 0; j < rule.size(); ++j) {
      log_weights_.push_back(std::log(rule.weights[j]) -
                             amplitudes_[j] * amplitudes_[j] / (2.0 * sigma2_));
      slopes_.push_back(amplitudes_[j] / sigma2_);
    }
    exps_.resize(amplitudes_.size());
  }

  double operator()(double y) const {
    if (point_mass_) return log_weights_[0] + slopes_[0] * y;
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < slopes_.size(); ++j) {
      exps_[j] = log_weights_[j] + slopes_[j] * y;
      peak = std::max(peak, exps_[j]);
    }
    double sum = 0.0;
    for (double e : exps_) sum += std::exp(e - peak);
    return peak + std::log(sum);
  }

 private:
  double sigma2_;
  bool point_mass_;
  std::vector<double> amplitudes_;
  std::vector<double> log_weights_;
  std::vector<double> slopes_;
  mutable std::vector<double> exps_;
};

inline DecisionStatistic llr_ddt_nonquantized(const SensorObservations& observations,
                                              const ScenarioConfig& config, int quadrature_points) {
  const NonQuantizedLlr llr(config, quadrature_points);
  double total = 0.0;
  for (double y : observations.values) total += llr(y);
  if (!std::isfinite(total))
    throw ConvergenceError("non-quantized LLR integration failed", std::abs(total));
  return {total, FusionMode::DdtNonQuantized};
}

/// Per-symbol log ratio log(p1_m / p0_m), indexed 0..M-1.
inline std::vector<double> symbol_llr_table(const CellPmf& pmf_h0, const CellPmf& pmf_h1_avg) {
  if (pmf_h0.size() != pmf_h1_avg.size()) throw ConfigError("pmfs must have the same size");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> table(pmf_h0.size());
  for (std::size_t m = 0; m < table.size(); ++m) {
    const double p0 = pmf_h0[m];
    const double p1 = pmf_h1_avg[m];
    if (p0 == 0.0)
      table[m] = p1 == 0.0 ? 0.0 : inf;
    else
      table[m] = p1 == 0.0 ? -inf : std::log(p1 / p0);
  }
  return table;
}

/// Equal-gain symbol LRT: every sensor's symbol weighted by the same pmfs.
inline DecisionStatistic llr_ddt_quantized(std::span<const int> symbols, const CellPmf& pmf_h0,
                                           const CellPmf& pmf_h1_avg) {
  const std::vector<double> table = symbol_llr_table(pmf_h0, pmf_h1_avg);
  const int levels = static_cast<int>(table.size());
  double total = 0.0;
  for (int s : symbols) {
    check_symbol(s, levels);
    total += table[static_cast<std::size_t>(s - 1)];
  }
  return {total, FusionMode::DdtQuantized};
}

namespace detail {

/// log sum_m exp(ll_m) w_m, with zero-weight terms skipped.
inline double log_mixture(std::span<const double> ll, std::span<const double> weights, double peak) {
  double sum = 0.0;
  for (std::size_t m = 0; m < ll.size(); ++m)
    if (weights[m] > 0.0) sum += std::exp(ll[m] - peak) * weights[m];
  return std::log(sum);
}

inline double fading_sensor_llr(const ChannelObservation& obs, const CellPmf& pmf_h0,
                                const CellPmf& pmf_h1_avg, const ChannelParams& params,
                                std::vector<double>& ll) {
  const int levels = params.levels;
  if (obs.levels() != levels || static_cast<int>(pmf_h0.size()) != levels ||
      static_cast<int>(pmf_h1_avg.size()) != levels)
    throw ConfigError("observation, pmfs and channel must share the same number of levels");
  ll.resize(static_cast<std::size_t>(levels));
  double peak = -std::numeric_limits<double>::infinity();
  for (int m = 1; m <= levels; ++m) {
    ll[static_cast<std::size_t>(m - 1)] = symbol_log_likelihood(obs, m, params);
    peak = std::max(peak, ll[static_cast<std::size_t>(m - 1)]);
  }
  // The shared peak cancels between numerator and denominator.
  return log_mixture(ll, pmf_h1_avg.masses(), peak) - log_mixture(ll, pmf_h0.masses(), peak);
}

}  // namespace detail

/// Optimal fusion over the fading channel: sensor symbols are marginalized
/// through the channel likelihoods.
inline DecisionStatistic llr_fading_optimal(std::span<const ChannelObservation> channel_obs,
                                            const CellPmf& pmf_h0, const CellPmf& pmf_h1_avg,
                                            const ChannelParams& params) {
  std::vector<double> ll;
  double total = 0.0;
  for (const auto& obs : channel_obs)
    total += detail::fading_sensor_llr(obs, pmf_h0, pmf_h1_avg, params, ll);
  return {total, FusionMode::FadingOptimal};
}

/// Per-sensor link parameters variant.
inline DecisionStatistic llr_fading_optimal(std::span<const ChannelObservation> channel_obs,
                                            const CellPmf& pmf_h0, const CellPmf& pmf_h1_avg,
                                            std::span<const ChannelParams> params) {
  if (params.size() != channel_obs.size())
    throw ConfigError("one ChannelParams per sensor is required");
  std::vector<double> ll;
  double total = 0.0;
  for (std::size_t k = 0; k < channel_obs.size(); ++k)
    total += detail::fading_sensor_llr(channel_obs[k], pmf_h0, pmf_h1_avg, params[k], ll);
  return {total, FusionMode::FadingOptimal};
}

/// ML symbol estimate (1..M); ties go to the smallest index.
inline int ml_symbol_decision(const ChannelObservation& obs, const ChannelParams& params) {
  int best = 1;
  double best_ll = symbol_log_likelihood(obs, 1, params);
  for (int m = 2; m <= params.levels; ++m) {
    const double ll = symbol_log_likelihood(obs, m, params);
    if (ll > best_ll) {
      best_ll = ll;
      best = m;
    }
  }
  return best;
}

/// Sum of zero-based symbol indices; the alarm count when M = 2.
inline DecisionStatistic count_fusion(std::span<const int> symbols) {
  double total = 0.0;
  for (int s : symbols) {
    if (s < 1) throw std::domain_error("symbols are numbered from 1");
    total += s - 1;
  }
  return {total, FusionMode::FadingSubOptimal};
}

/// What the two-step rule sums over the ML-decoded symbols.
enum class SubOptimalSummand { SymbolIndex, SymbolLlr };

/// Two-step fusion: ML-decode each sensor, then fuse the decoded symbols.
inline DecisionStatistic fading_suboptimal(std::span<const ChannelObservation> channel_obs,
                                           const ChannelParams& params,
                                           SubOptimalSummand summand = SubOptimalSummand::SymbolIndex,
                                           const CellPmf* pmf_h0 = nullptr,
                                           const CellPmf* pmf_h1_avg = nullptr) {
  std::vector<int> decoded;
  decoded.reserve(channel_obs.size());
  for (const auto& obs : channel_obs) decoded.push_back(ml_symbol_decision(obs, params));
  if (summand == SubOptimalSummand::SymbolIndex) return count_fusion(decoded);
  if (pmf_h0 == nullptr || pmf_h1_avg == nullptr)
    throw ConfigError("the LLR summand needs both cell pmfs");
  return {llr_ddt_quantized(decoded, *pmf_h0, *pmf_h1_avg).value, FusionMode::FadingSubOptimal};
}

/// Randomized Neyman-Pearson test: coin flip with boundary_accept_prob on ties.
template <std::uniform_random_bit_generator Rng>
Hypothesis randomized_np_decision(double statistic, double threshold, double boundary_accept_prob,
                                  Rng& rng) {
  if (!(boundary_accept_prob >= 0.0 && boundary_accept_prob <= 1.0))
    throw ConfigError("boundary_accept_prob must lie in [0, 1]");
  if (statistic > threshold) return Hypothesis::H1;
  if (statistic < threshold) return Hypothesis::H0;
  std::bernoulli_distribution coin(boundary_accept_prob);
  return coin(rng) ? Hypothesis::H1 : Hypothesis::H0;
}

/// LLR of a known-mean Gaussian observation, affine in y.
inline double llr_affine_known_mean(double y, double mean_amplitude, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0");
  const double s2 = sigma * sigma;
  return -mean_amplitude * mean_amplitude / (2.0 * s2) + (mean_amplitude / s2) * y;
}

/// Thresholds carried through the same affine map (mean_amplitude > 0).
inline ThresholdVector llr_affine_thresholds(const ThresholdVector& thresholds,
                                             double mean_amplitude, double sigma) {
  std::vector<double> mapped;
  mapped.reserve(thresholds.size());
  for (double b : thresholds.cuts()) mapped.push_back(llr_affine_known_mean(b, mean_amplitude, sigma));
  return ThresholdVector(std::move(mapped));
}

}  // namespace qdd
