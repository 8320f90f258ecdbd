#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "moevox/common.hpp"

namespace moevox {

// Seedable RNG with serializable state. The gaussian transform is a plain
// Box-Muller consuming exactly two engine draws per sample, so restoring the
// engine state restores the full stream (std::normal_distribution caches a
// spare value and would break bit-exact checkpoint resume).
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // i in [0, n).
  uint64_t uniform_index(uint64_t n) {
    // modulo bias is irrelevant at the n we use (<< 2^64)
    return engine_() % n;
  }

  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    // avoid log(0)
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string state() const {
    std::ostringstream ss;
    ss << engine_;
    return ss.str();
  }

  void set_state(const std::string& s) {
    std::istringstream ss(s);
    ss >> engine_;
  }

  // Derive an independent stream (for per-item parallel synthesis).
  Rng fork(uint64_t salt) const {
    std::mt19937_64 e = engine_;
    return Rng(e() ^ (salt * 0x9e3779b97f4a7c15ull));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace moevox
