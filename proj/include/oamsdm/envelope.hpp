#pragma once

#include <complex>
#include <compare>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

namespace oamsdm {

using cplx = std::complex<double>;

enum class Direction : int { Forward = 0, Backward = 1 };
enum class Polarization : int { R = 0, L = 1 };

// One spatial channel: a circular polarization of a signed topological charge in one
// core, traveling in one direction. |charge| is the mode group; the four modes
// (+l,R), (+l,L), (-l,R), (-l,L) of a group are degenerate and mix along the fiber.
struct ModeId {
  int core = 1;  // 1-based
  int charge = 2;
  Polarization pol = Polarization::R;
  Direction dir = Direction::Forward;

  int group() const { return charge < 0 ? -charge : charge; }
  // Canonical position within the degenerate group: (+l,R)=0, (+l,L)=1, (-l,R)=2, (-l,L)=3.
  int slot() const {
    return (charge < 0 ? 2 : 0) + (pol == Polarization::L ? 1 : 0);
  }
  friend bool operator==(const ModeId&, const ModeId&) = default;
  friend auto operator<=>(const ModeId& a, const ModeId& b) {
    return std::tie(a.core, a.charge, a.pol, a.dir) <=> std::tie(b.core, b.charge, b.pol, b.dir);
  }
  std::string str() const;
};

// Complex baseband field envelope of one mode.
struct ComplexEnvelope {
  std::vector<cplx> samples;
  double sample_rate_hz = 0.0;
};

double mean_power(const std::vector<cplx>& x);

}  // namespace oamsdm
