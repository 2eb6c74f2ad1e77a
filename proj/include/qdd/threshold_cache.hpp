// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qdd/core.hpp"

namespace qdd {

// Threshold cache file format
// ---------------------------
// UTF-8 text, one record per line, blank lines and lines starting with '#'
// ignored. A record is a space-separated list of key=value fields:
//
//   method=mae levels=3 snr_db=0 ratio_l=10 cuts=-0.25,0.63 objective=1.547 settings=9f1c...
//
// (method, levels, snr_db, ratio_l) is the record key; cuts is the
// comma-separated ascending cut list, objective the optimized objective value
// and settings a 64-bit FNV-1a hex digest of the optimizer settings.

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct CacheKey {
  std::string method;
  int levels = 0;
  double snr_db = 0.0;
  double ratio_l = 0.0;

  friend bool operator==(const CacheKey&, const CacheKey&) = default;

  std::string describe() const {
    char buf[160];
    std::snprintf(buf, sizeof buf, "(method=%s, levels=%d, snr_db=%g, ratio_l=%g)", method.c_str(),
                  levels, snr_db, ratio_l);
    return buf;
  }
};

struct CacheRecord {
  CacheKey key;
  std::vector<double> cuts;
  double objective = 0.0;
  std::uint64_t settings_hash = 0;
};

/// Raised when a required cache record is absent.
class CacheMiss : public ConfigError {
 public:
  explicit CacheMiss(const CacheKey& key)
      : ConfigError("threshold cache has no entry for " + key.describe()), key_(key) {}
  const CacheKey& key() const { return key_; }

 private:
  CacheKey key_;
};

class ThresholdCache {
 public:
  static ThresholdCache parse(std::istream& in) {
    ThresholdCache cache;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      cache.put(parse_record(line, line_no));
    }
    return cache;
  }

  /// Missing files yield an empty cache.
  static ThresholdCache load(const std::string& path) {
    std::ifstream in(path);
    if (!in) return {};
    return parse(in);
  }

  void write(std::ostream& out) const {
    out << "# quantizer threshold cache: method levels snr_db ratio_l -> cuts objective\n";
    for (const auto& r : records_) out << format_record(r) << '\n';
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write threshold cache " + path);
    write(out);
  }

  std::optional<CacheRecord> find(const CacheKey& key) const {
    for (const auto& r : records_)
      if (r.key == key) return r;
    return std::nullopt;
  }

  const CacheRecord& require(const CacheKey& key) const {
    for (const auto& r : records_)
      if (r.key == key) return r;
    throw CacheMiss(key);
  }

  /// Inserts or replaces the record with the same key.
  void put(CacheRecord record) {
    for (auto& r : records_) {
      if (r.key == record.key) {
        r = std::move(record);
        return;
      }
    }
    records_.push_back(std::move(record));
  }

  const std::vector<CacheRecord>& records() const { return records_; }

  static std::string format_record(const CacheRecord& r) {
    std::ostringstream os;
    char buf[64];
    os << "method=" << r.key.method << " levels=" << r.key.levels;
    std::snprintf(buf, sizeof buf, " snr_db=%.17g", r.key.snr_db);
    os << buf;
    std::snprintf(buf, sizeof buf, " ratio_l=%.17g", r.key.ratio_l);
    os << buf << " cuts=";
    for (std::size_t i = 0; i < r.cuts.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.17g", i ? "," : "", r.cuts[i]);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, " objective=%.17g settings=%016llx", r.objective,
                  static_cast<unsigned long long>(r.settings_hash));
    os << buf;
    return os.str();
  }

 private:
  static double to_double(const std::string& s, int line_no) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("threshold cache line " + std::to_string(line_no) + ": bad number '" + s + "'");
    }
  }

  static CacheRecord parse_record(const std::string& line, int line_no) {
    CacheRecord r;
    bool has_method = false, has_levels = false, has_snr = false, has_ratio = false,
         has_cuts = false;
    std::istringstream fields(line);
    std::string field;
    while (fields >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos)
        throw ConfigError("threshold cache line " + std::to_string(line_no) + ": expected key=value");
      const std::string key = field.substr(0, eq);
      const std::string value = field.substr(eq + 1);
      if (key == "method") {
        r.key.method = value;
        has_method = true;
      } else if (key == "levels") {
        r.key.levels = static_cast<int>(to_double(value, line_no));
        has_levels = true;
      } else if (key == "snr_db") {
        r.key.snr_db = to_double(value, line_no);
        has_snr = true;
      } else if (key == "ratio_l") {
        r.key.ratio_l = to_double(value, line_no);
        has_ratio = true;
      } else if (key == "cuts") {
        std::istringstream parts(value);
        std::string part;
        while (std::getline(parts, part, ','))
          if (!part.empty()) r.cuts.push_back(to_double(part, line_no));
        has_cuts = true;
      } else if (key == "objective") {
        r.objective = to_double(value, line_no);
      } else if (key == "settings") {
        r.settings_hash = std::stoull(value, nullptr, 16);
      }
      // Unknown keys are ignored for forward compatibility.
    }
    if (!(has_method && has_levels && has_snr && has_ratio && has_cuts))
      throw ConfigError("threshold cache line " + std::to_string(line_no) + ": incomplete record");
    if (static_cast<int>(r.cuts.size()) != r.key.levels - 1)
      throw ConfigError("threshold cache line " + std::to_string(line_no) +
                        ": cut count does not match levels");
    return r;
  }

  std::vector<CacheRecord> records_;
};

}  // namespace qdd
