#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "bcflong/common.hpp"

namespace bcflong {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derive a child seed from (seed, tag). Tags keep the sampler stages on
// independent substreams so toggling one stage cannot perturb another.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t x = seed;
  std::uint64_t a = splitmix64(x);
  x ^= tag * 0x9e3779b97f4a7c15ull;
  std::uint64_t b = splitmix64(x);
  return a ^ (b << 1);
}

// All variate generation is hand-rolled on top of mt19937_64 so draws are
// identical across platforms and the full generator state is just the engine
// state (serializable, resumable).
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : eng_(seed), seed_(seed) {}

  // Independent stream keyed by (original seed, tag); unaffected by how many
  // draws this stream has produced.
  RngStream substream(std::uint64_t tag) const {
    return RngStream(derive_seed(seed_, tag));
  }

  std::uint64_t seed() const { return seed_; }

  // uniform on (0,1), never returns 0 or 1
  double uniform() {
    // 53-bit mantissa; +0.5 offset keeps draws strictly interior
    return (static_cast<double>(eng_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t raw() { return eng_(); }

  // uniform integer on [0, n)
  std::uint64_t uniform_int(std::uint64_t n) {
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = eng_();
    } while (r >= limit);
    return r % n;
  }

  // Box-Muller, no cached spare (keeps state = engine state)
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  double exponential(double mean) { return -mean * std::log(uniform()); }

  // Marsaglia-Tsang; shape a > 0, unit scale
  double gamma(double a) {
    if (a < 1.0) {
      double u = uniform();
      return gamma(a + 1.0) * std::pow(u, 1.0 / a);
    }
    double d = a - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double gamma(double shape, double scale) { return scale * gamma(shape); }

  // mean = scale / (shape - 1) when shape > 1
  double inv_gamma(double shape, double scale) { return scale / gamma(shape); }

  double chi_squared(double dof) { return 2.0 * gamma(0.5 * dof); }

  std::string serialize() const {
    std::ostringstream os;
    os << seed_ << ' ' << eng_;
    return os.str();
  }

  static RngStream deserialize(const std::string& s) {
    RngStream r;
    std::istringstream is(s);
    is >> r.seed_ >> r.eng_;
    if (!is) throw DataError("bad rng state string");
    return r;
  }

  bool operator==(const RngStream& o) const { return eng_ == o.eng_ && seed_ == o.seed_; }

 private:
  std::mt19937_64 eng_;
  std::uint64_t seed_ = 0;
};

}  // namespace bcflong
