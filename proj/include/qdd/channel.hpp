// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "qdd/core.hpp"

namespace qdd {

/// Sensor-to-fusion-center link for non-coherent M-FSK over Rayleigh fading.
struct ChannelParams {
  double received_power = 1.0;   // P_k
  double fading_variance = 1.0;  // sigma_h^2
  double noise_variance = 0.1;   // sigma_n^2
  int levels = 2;

  void validate() const {
    if (!(received_power >= 0.0) || !std::isfinite(received_power))
      throw ConfigError("received_power must be >= 0");
    if (!(fading_variance > 0.0)) throw ConfigError("fading_variance must be > 0");
    if (!(noise_variance > 0.0)) throw ConfigError("noise_variance must be > 0");
    if (levels < 2) throw ConfigError("channel levels must be >= 2");
  }

  /// Unit power and fading; noise set so that P sigma_h^2 / sigma_n^2 = snr.
  static ChannelParams from_channel_snr_db(double channel_snr_db, int levels) {
    ChannelParams p;
    p.levels = levels;
    p.noise_variance = std::pow(10.0, -channel_snr_db / 10.0);
    return p;
  }

  double signal_energy() const { return received_power * fading_variance; }
  double channel_snr() const { return signal_energy() / noise_variance; }
};

/// Received M-vector for one sensor and its squared envelopes.
struct ChannelObservation {
  std::vector<std::complex<double>> vector;
  std::vector<double> envelopes;

  ChannelObservation() = default;
  explicit ChannelObservation(std::vector<std::complex<double>> v) : vector(std::move(v)) {
    envelopes.reserve(vector.size());
    for (const auto& c : vector) envelopes.push_back(std::norm(c));
  }

  /// Observation with given squared envelopes (zero phase).
  static ChannelObservation from_envelopes(const std::vector<double>& env) {
    std::vector<std::complex<double>> v;
    v.reserve(env.size());
    for (double e : env) v.emplace_back(std::sqrt(e), 0.0);
    ChannelObservation obs(std::move(v));
    obs.envelopes = env;
    return obs;
  }

  int levels() const { return static_cast<int>(vector.size()); }
};

inline void check_symbol(int symbol, int levels) {
  if (symbol < 1 || symbol > levels)
    throw std::domain_error("symbol " + std::to_string(symbol) + " outside 1.." +
                            std::to_string(levels));
}

/// sqrt(P_k) e_symbol.
inline std::vector<double> modulate(int symbol, const ChannelParams& params) {
  check_symbol(symbol, params.levels);
  std::vector<double> u(static_cast<std::size_t>(params.levels), 0.0);
  u[static_cast<std::size_t>(symbol - 1)] = std::sqrt(params.received_power);
  return u;
}

/// y = h sqrt(P_k) e_m + n with h ~ CN(0, sigma_h^2) and n ~ CN(0, sigma_n^2 I).
template <std::uniform_random_bit_generator Rng>
ChannelObservation transmit(int symbol, const ChannelParams& params, Rng& rng) {
  check_symbol(symbol, params.levels);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double h_scale = std::sqrt(params.fading_variance / 2.0);
  const double n_scale = std::sqrt(params.noise_variance / 2.0);
  const std::complex<double> h(h_scale * gauss(rng), h_scale * gauss(rng));
  std::vector<std::complex<double>> y(static_cast<std::size_t>(params.levels));
  for (auto& c : y) {
    const double re = gauss(rng);
    const double im = gauss(rng);
    c = {n_scale * re, n_scale * im};
  }
  y[static_cast<std::size_t>(symbol - 1)] += h * std::sqrt(params.received_power);
  return ChannelObservation(std::move(y));
}

/// log p(y | symbol) for the zero-mean complex Gaussian with diagonal
/// covariance: sigma_n^2 off the signaled index, P sigma_h^2 + sigma_n^2 on it.
inline double symbol_log_likelihood(const ChannelObservation& obs, int symbol,
                                    const ChannelParams& params) {
  check_symbol(symbol, params.levels);
  const double noise = params.noise_variance;
  const double loaded = params.signal_energy() + noise;
  const int levels = obs.levels();
  double sum_env = 0.0;
  for (double e : obs.envelopes) sum_env += e;
  const double env_m = obs.envelopes[static_cast<std::size_t>(symbol - 1)];
  return -levels * std::log(std::numbers::pi) - (levels - 1) * std::log(noise) - std::log(loaded) -
         (sum_env - env_m) / noise - env_m / loaded;
}

}  // namespace qdd
