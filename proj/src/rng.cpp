#include "oamsdm/rng.hpp"

#include <cmath>

namespace oamsdm {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
}

double Rng::gaussian() {
  // Marsaglia polar: explicit so the draw sequence does not depend on the
  // standard library's distribution implementation.
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  have_spare_ = true;
  return u * f;
}

std::complex<double> Rng::cgaussian() {
  // Unit total variance split across quadratures, so amplitude scales applied by
  // callers set the power directly.
  const double re = gaussian();
  const double im = gaussian();
  return {re * kInvSqrt2, im * kInvSqrt2};
}

namespace {
uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace

uint64_t substream(uint64_t master, uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  uint64_t s = splitmix64(master ^ 0x6f4a7c15u);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  s = splitmix64(s ^ c);
  s = splitmix64(s ^ d);
  return s;
}

}  // namespace oamsdm
