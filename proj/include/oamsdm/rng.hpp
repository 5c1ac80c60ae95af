#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace oamsdm {

// Deterministic stream RNG. The uniform and Gaussian mappings are written out
// explicitly (no std::*_distribution), so a seed reproduces the same draws on any
// standard library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t raw() { return eng_(); }
  // [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double gaussian();                 // N(0,1), Marsaglia polar
  std::complex<double> cgaussian();  // circular, E|z|^2 = 1

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Mixes a master seed with up to four stream labels so independent parts of a run
// never share a generator state.
uint64_t substream(uint64_t master, uint64_t a, uint64_t b = 0, uint64_t c = 0,
                   uint64_t d = 0);

}  // namespace oamsdm
