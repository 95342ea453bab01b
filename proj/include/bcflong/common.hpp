#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace bcflong {

// Error hierarchy: DataError for anything wrong with inputs/configs (CLI exit
// code 2), SamplerError for runtime failures inside inference (exit code 1).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public DataError {
 public:
  explicit ConfigError(const std::string& msg) : DataError(msg) {}
};

class SamplerError : public Error {
 public:
  SamplerError(const std::string& msg, long iteration = -1)
      : Error(iteration >= 0 ? msg + " (iteration " + std::to_string(iteration) + ")" : msg),
        iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw DataError(msg);
}

// Shortest text form that round-trips an IEEE double.
inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Linear-interpolation sample quantile (R type 7).
inline double empirical_quantile(std::vector<double> v, double p) {
  if (v.empty()) throw DataError("quantile of an empty sample");
  if (p <= 0.0) return *std::min_element(v.begin(), v.end());
  if (p >= 1.0) return *std::max_element(v.begin(), v.end());
  std::sort(v.begin(), v.end());
  double h = p * static_cast<double>(v.size() - 1);
  auto k = static_cast<std::size_t>(h);
  if (k + 1 >= v.size()) return v.back();
  return v[k] + (h - static_cast<double>(k)) * (v[k + 1] - v[k]);
}

// FNV-1a, used for dataset checksums recorded in run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace bcflong
