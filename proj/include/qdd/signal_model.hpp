// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "qdd/core.hpp"
#include "qdd/quadrature.hpp"

namespace qdd {

/// Standard normal CDF.
inline double gaussian_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Standard normal upper tail 1 - Phi(x), accurate for large x.
inline double gaussian_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// Inverse of the standard normal CDF, p in (0, 1).
inline double gaussian_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("gaussian_quantile needs p in (0, 1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// Point-source amplitude prior p(A) = 1 / (A ln L) on [a_max / L, a_max]
/// (normalized units with a_max = 1). L = 1 is the known-amplitude case.
struct AmplitudePrior {
  double ratio = 10.0;
  double a_max = 1.0;

  static AmplitudePrior from(const ScenarioConfig& config) {
    return {config.amplitude_ratio, config.a_max};
  }

  bool is_point_mass() const { return ratio == 1.0; }
  double a_min() const { return a_max / ratio; }
};

/// Density of the normalized amplitude a_n = A / a_max.
inline double amplitude_pdf(double a_n, const AmplitudePrior& prior) {
  if (prior.is_point_mass())
    throw ConfigError("amplitude_pdf is undefined for L = 1 (point-mass prior)");
  const double lo = 1.0 / prior.ratio;
  if (a_n < lo || a_n > 1.0) return 0.0;
  return 1.0 / (a_n * std::log(prior.ratio));
}

/// CDF of the normalized amplitude: F(a) = ln(a L) / ln L on the support.
inline double amplitude_cdf(double a_n, const AmplitudePrior& prior) {
  if (prior.is_point_mass()) return a_n >= 1.0 ? 1.0 : 0.0;
  const double lo = 1.0 / prior.ratio;
  if (a_n <= lo) return 0.0;
  if (a_n >= 1.0) return 1.0;
  return std::log(a_n * prior.ratio) / std::log(prior.ratio);
}

/// Inverse-CDF draw: a_max * L^(u - 1).
inline double sample_amplitude(double u, const AmplitudePrior& prior) {
  return prior.a_max * std::pow(prior.ratio, u - 1.0);
}

/// Amplitude nodes with prior weights for expectations E_A[g(A)].
///
/// The prior becomes uniform in u = 1 + log_L(A / a_max), so a Gauss-Legendre
/// rule in u integrates the smooth Gaussian-cell integrands very accurately.
/// For L = 1 the rule collapses to the single node a_max.
struct AmplitudeRule {
  std::vector<double> amplitudes;
  std::vector<double> weights;

  static AmplitudeRule make(const AmplitudePrior& prior, int nodes) {
    AmplitudeRule rule;
    if (prior.is_point_mass()) {
      rule.amplitudes = {prior.a_max};
      rule.weights = {1.0};
      return rule;
    }
    const QuadratureRule gl = gauss_legendre_unit(nodes);
    rule.amplitudes.reserve(gl.nodes.size());
    for (double u : gl.nodes) rule.amplitudes.push_back(sample_amplitude(u, prior));
    rule.weights = gl.weights;
    return rule;
  }

  std::size_t size() const { return amplitudes.size(); }
};

/// Per-sensor observations for one realization.
struct SensorObservations {
  std::vector<double> values;
  Hypothesis hypothesis = Hypothesis::H0;
  std::vector<double> amplitudes;  // empty under H0
};

/// y_k = eps_k under H0, y_k = A_k + eps_k under H1 with A_k i.i.d. from the prior.
template <std::uniform_random_bit_generator Rng>
SensorObservations generate_observations(Hypothesis hypothesis, const ScenarioConfig& config,
                                         Rng& rng) {
  const double sigma = snr_to_sigma(config);
  const AmplitudePrior prior = AmplitudePrior::from(config);
  std::normal_distribution<double> noise(0.0, sigma);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SensorObservations obs;
  obs.hypothesis = hypothesis;
  const auto k = static_cast<std::size_t>(config.sensor_count);
  obs.values.resize(k);
  if (hypothesis == Hypothesis::H1) obs.amplitudes.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    double y = noise(rng);
    if (hypothesis == Hypothesis::H1) {
      const double a = prior.is_point_mass() ? prior.a_max : sample_amplitude(unit(rng), prior);
      obs.amplitudes[i] = a;
      y += a;
    }
    obs.values[i] = y;
  }
  return obs;
}

}  // namespace qdd
