// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qdd {

/// Raised for invalid parameters or inconsistent experiment settings.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an adaptive integration cannot reach its error target.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double achieved_error)
      : std::runtime_error(what + " (achieved error estimate " +
                           std::to_string(achieved_error) + ")"),
        achieved_error_(achieved_error) {}

  double achieved_error() const noexcept { return achieved_error_; }

 private:
  double achieved_error_;
};

enum class Hypothesis { H0, H1 };

inline const char* to_string(Hypothesis h) { return h == Hypothesis::H0 ? "H0" : "H1"; }

/// Global experiment parameters. SNR is A_max^2 / sigma^2 in decibels.
struct ScenarioConfig {
  double snr_db = 0.0;
  int sensor_count = 25;
  double amplitude_ratio = 10.0;  // L = A_max / A_min
  int levels = 2;                 // M
  double a_max = 1.0;

  void validate() const {
    if (sensor_count < 1) throw ConfigError("sensor_count must be >= 1");
    if (!(amplitude_ratio >= 1.0) || !std::isfinite(amplitude_ratio))
      throw ConfigError("amplitude_ratio must be a finite value >= 1");
    if (levels < 2) throw ConfigError("levels must be >= 2");
    if (!(a_max > 0.0) || !std::isfinite(a_max)) throw ConfigError("a_max must be > 0");
    if (!std::isfinite(snr_db)) throw ConfigError("snr_db must be finite");
  }

  double a_min() const { return a_max / amplitude_ratio; }
};

/// Noise standard deviation implied by the scenario SNR.
inline double snr_to_sigma(const ScenarioConfig& config) {
  return config.a_max * std::pow(10.0, -config.snr_db / 20.0);
}

/// Ascending quantizer cut points beta_1..beta_{M-1}; beta_0 = -inf and
/// beta_M = +inf are implicit. An empty vector is the single-cell quantizer.
class ThresholdVector {
 public:
  ThresholdVector() = default;

  explicit ThresholdVector(std::vector<double> cuts) : cuts_(std::move(cuts)) {
    for (std::size_t i = 0; i < cuts_.size(); ++i) {
      if (!std::isfinite(cuts_[i])) throw ConfigError("threshold cuts must be finite");
      if (i > 0 && !(cuts_[i - 1] < cuts_[i]))
        throw ConfigError("threshold cuts must be strictly ascending");
    }
  }

  std::span<const double> cuts() const { return cuts_; }
  std::size_t size() const { return cuts_.size(); }
  int levels() const { return static_cast<int>(cuts_.size()) + 1; }
  double operator[](std::size_t i) const { return cuts_[i]; }

  friend bool operator==(const ThresholdVector&, const ThresholdVector&) = default;

 private:
  std::vector<double> cuts_;
};

/// Probability masses of the M quantizer cells. Index 0 is cell m = 1.
class CellPmf {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit CellPmf(std::vector<double> masses) : masses_(std::move(masses)) {
    if (masses_.empty()) throw ConfigError("pmf must have at least one cell");
    double total = 0.0;
    for (double p : masses_) {
      if (!(p >= 0.0) || p > 1.0) throw ConfigError("pmf masses must lie in [0, 1]");
      total += p;
    }
    if (std::abs(total - 1.0) > kSumTolerance)
      throw ConfigError("pmf masses must sum to 1 (got " + std::to_string(total) + ")");
  }

  std::span<const double> masses() const { return masses_; }
  std::size_t size() const { return masses_.size(); }
  double operator[](std::size_t i) const { return masses_[i]; }
  /// 1-based access matching symbol numbering.
  double at_symbol(int symbol) const { return masses_.at(static_cast<std::size_t>(symbol - 1)); }

 private:
  std::vector<double> masses_;
};

struct RocPoint {
  double pfa = 0.0;
  double pd = 0.0;
  double pd_stderr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  std::string method;
  int levels = 0;
  std::string channel;
  std::string fusion;
  std::int64_t trials = 0;
  std::uint64_t seed = 0;
};

}  // namespace qdd
