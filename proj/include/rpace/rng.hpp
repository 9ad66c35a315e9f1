#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rpace {

// Deterministic random source. The standard distributions are not
// bit-reproducible across library implementations, so uniform and normal
// variates are generated explicitly from raw mt19937_64 output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer uniform on {lo, ..., hi} inclusive.
  int uniform_int(int lo, int hi) {
    const int range = hi - lo + 1;
    int k = static_cast<int>(uniform() * range);
    if (k >= range) k = range - 1;
    return lo + k;
  }

  // Standard normal via Box-Muller; one variate per call keeps the
  // draw sequence independent of call-site pairing.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // SplitMix64 step, used to derive independent substream seeds.
  static std::uint64_t derive(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace rpace
