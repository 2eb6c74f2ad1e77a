// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "qdd/channel.hpp"

using namespace qdd;

namespace {

ChannelParams link(int levels, double noise = 0.1, double power = 1.0) {
  ChannelParams p;
  p.levels = levels;
  p.noise_variance = noise;
  p.received_power = power;
  return p;
}

}  // namespace

TEST(ChannelParams, Validation) {
  EXPECT_NO_THROW(link(2).validate());
  EXPECT_NO_THROW(link(2, 0.1, 0.0).validate());
  EXPECT_THROW(link(2, 0.0).validate(), ConfigError);
  EXPECT_THROW(link(1).validate(), ConfigError);
  EXPECT_THROW(link(2, 0.1, -1.0).validate(), ConfigError);
  const auto p = ChannelParams::from_channel_snr_db(10.0, 4);
  EXPECT_NEAR(p.noise_variance, 0.1, 1e-15);
  EXPECT_NEAR(p.channel_snr(), 10.0, 1e-12);
  EXPECT_EQ(p.levels, 4);
}

TEST(Modulate, Examples) {
  auto u = modulate(1, link(2, 0.1, 4.0));
  ASSERT_EQ(u.size(), 2u);
  EXPECT_DOUBLE_EQ(u[0], 2.0);
  EXPECT_DOUBLE_EQ(u[1], 0.0);
  u = modulate(3, link(3));
  EXPECT_EQ(u, (std::vector<double>{0.0, 0.0, 1.0}));
  EXPECT_THROW(modulate(0, link(2)), std::domain_error);
  EXPECT_THROW(modulate(3, link(2)), std::domain_error);
}

TEST(Modulate, TotalEnergyEqualsPower) {
  for (int levels : {2, 3, 6})
    for (int s = 1; s <= levels; ++s) {
      double e = 0.0;
      for (double x : modulate(s, link(levels, 0.1, 2.5))) e += x * x;
      EXPECT_NEAR(e, 2.5, 1e-15);
    }
}

TEST(Transmit, NoiselessEnvelopeIsConcentrated) {
  std::mt19937_64 rng(1);
  const auto p = link(4, 1e-12);
  for (int rep = 0; rep < 200; ++rep) {
    const auto obs = transmit(3, p, rng);
    for (int m = 0; m < 4; ++m) {
      if (m != 2) {
        EXPECT_LT(obs.envelopes[m], 1e-9);
      }
    }
  }
}

TEST(Transmit, EnvelopeMomentsMatchModel) {
  // Each squared envelope is exponential: mean v and standard error v / sqrt(N).
  std::mt19937_64 rng(2);
  const auto p = link(3, 0.1, 1.0);
  const int n = 1'000'000;
  std::vector<double> mean(3, 0.0);
  std::complex<double> cross{0.0, 0.0};
  for (int i = 0; i < n; ++i) {
    const auto obs = transmit(2, p, rng);
    for (int m = 0; m < 3; ++m) mean[m] += obs.envelopes[m] / n;
    cross += obs.vector[0] * std::conj(obs.vector[1]) / static_cast<double>(n);
  }
  const double loaded = 1.1, noise = 0.1;
  EXPECT_NEAR(mean[1], loaded, 3.0 * loaded / std::sqrt(n));
  EXPECT_NEAR(mean[0], noise, 3.0 * noise / std::sqrt(n));
  EXPECT_NEAR(mean[2], noise, 3.0 * noise / std::sqrt(n));
  // Off-diagonal covariance vanishes.
  EXPECT_NEAR(std::abs(cross), 0.0, 4.0 * std::sqrt(noise * loaded / n));
}

TEST(Transmit, ZeroPowerMakesSymbolsIndistinguishable) {
  const auto p = link(2, 0.5, 0.0);
  std::mt19937_64 a(7), b(7);
  // Same draws, different symbol: identical output since no signal is added.
  for (int i = 0; i < 100; ++i) {
    const auto x = transmit(1, p, a);
    const auto y = transmit(2, p, b);
    EXPECT_EQ(x.envelopes, y.envelopes);
  }
  const auto obs = ChannelObservation::from_envelopes({0.3, 1.7});
  EXPECT_DOUBLE_EQ(symbol_log_likelihood(obs, 1, p), symbol_log_likelihood(obs, 2, p));
}

TEST(SymbolLogLikelihood, MatchesProductDensity) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  const auto p = link(4, 0.3, 2.0);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<std::complex<double>> y(4);
    for (auto& c : y) c = {g(rng), g(rng)};
    const ChannelObservation obs(y);
    for (int m = 1; m <= 4; ++m) {
      double density = 1.0;
      for (int i = 0; i < 4; ++i) {
        const double var = (i == m - 1) ? 2.0 * 1.0 + 0.3 : 0.3;
        density *= std::exp(-std::norm(y[i]) / var) / (std::numbers::pi * var);
      }
      EXPECT_NEAR(symbol_log_likelihood(obs, m, p), std::log(density), 1e-12);
    }
  }
  EXPECT_THROW(symbol_log_likelihood(ChannelObservation::from_envelopes({1, 1, 1, 1}), 5, p),
               std::domain_error);
}

TEST(SymbolLogLikelihood, DensityIntegratesToOne) {
  // Trapezoid rule on a 4-D grid over (Re y1, Im y1, Re y2, Im y2).
  const auto p = link(2, 0.1, 1.0);
  const int n = 61;
  const double wide = 6.0 * std::sqrt(1.1 / 2.0), narrow = 9.0 * std::sqrt(0.1 / 2.0);
  const double h1 = 2 * wide / (n - 1), h2 = 2 * narrow / (n - 1);
  double total = 0.0;
  std::vector<std::complex<double>> y(2);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          y[0] = {-wide + a * h1, -wide + b * h1};
          y[1] = {-narrow + c * h2, -narrow + d * h2};
          total += std::exp(symbol_log_likelihood(ChannelObservation(y), 1, p));
        }
  total *= h1 * h1 * h2 * h2;
  EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(SymbolLogLikelihood, DifferencesDependOnTwoEnvelopes) {
  const auto p = link(4, 0.2, 1.0);
  const auto a = ChannelObservation::from_envelopes({0.5, 2.0, 0.1, 0.3});
  const auto b = ChannelObservation::from_envelopes({0.5, 2.0, 7.0, 0.01});
  const double da = symbol_log_likelihood(a, 2, p) - symbol_log_likelihood(a, 1, p);
  const double db = symbol_log_likelihood(b, 2, p) - symbol_log_likelihood(b, 1, p);
  EXPECT_NEAR(da, db, 1e-12);
  // Closed form: (e2 - e1) (1/sigma_n^2 - 1/(P sigma_h^2 + sigma_n^2)).
  EXPECT_NEAR(da, (2.0 - 0.5) * (1 / 0.2 - 1 / 1.2), 1e-12);
}

TEST(SymbolLogLikelihood, LargerEnvelopeFavorsItsSymbol) {
  const auto p = link(3, 0.1, 1.0);
  std::mt19937_64 rng(4);
  std::exponential_distribution<double> e(1.0);
  for (int rep = 0; rep < 500; ++rep) {
    const std::vector<double> env = {e(rng), e(rng), e(rng)};
    const auto obs = ChannelObservation::from_envelopes(env);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (env[i] > env[j]) {
          EXPECT_GT(symbol_log_likelihood(obs, i + 1, p), symbol_log_likelihood(obs, j + 1, p));
        }
  }
}

TEST(Transmit, SignaledEnvelopeStochasticallyDominates) {
  // P(|y_m|^2 > x) under symbol m versus under another symbol.
  const auto p = link(2, 0.1, 1.0);
  std::mt19937_64 rng(5);
  const int n = 200000;
  int on = 0, off = 0;
  for (int i = 0; i < n; ++i) {
    if (transmit(1, p, rng).envelopes[0] > 0.2) ++on;
    if (transmit(2, p, rng).envelopes[0] > 0.2) ++off;
  }
  EXPECT_NEAR(static_cast<double>(on) / n, std::exp(-0.2 / 1.1), 4.0 * 0.5 / std::sqrt(n));
  EXPECT_NEAR(static_cast<double>(off) / n, std::exp(-0.2 / 0.1), 4.0 * 0.5 / std::sqrt(n));
  EXPECT_GT(on, off);
}
