#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "oamsdm/envelope.hpp"

namespace oamsdm {

// Maximal-length PRBS over GF(2), x^18 + x^11 + 1, Fibonacci form. Period 2^18 - 1.
class PrbsGenerator {
 public:
  static constexpr int kDegree = 18;
  static constexpr uint32_t kPeriod = (1u << kDegree) - 1;

  // state must be nonzero and fit in 18 bits.
  explicit PrbsGenerator(uint32_t state = 1u);

  uint8_t next();
  std::vector<uint8_t> bits(std::size_t n);
  void skip(uint64_t n);
  uint32_t state() const { return state_; }

 private:
  uint32_t state_;
};

// Two-ring 8QAM: inner ring radius 1 at 45/135/225/315 deg, outer ring radius
// 1 + sqrt(3) at 0/90/180/270 deg, scaled to unit mean power. Label bit b2 selects
// the ring (0 = inner); b1b0 Gray-code the quadrant counterclockwise.
class QamSymbolMap {
 public:
  static QamSymbolMap star8();

  int bits_per_symbol() const { return 3; }
  double norm_factor() const { return norm_; }
  const std::array<cplx, 8>& points() const { return points_; }
  double r2_inner() const { return r2_inner_; }  // squared ring radii, normalized
  double r2_outer() const { return r2_outer_; }

  // Consumes bits in stream order [b2 b1 b0] per symbol. FramingError if the count
  // is not a multiple of 3.
  std::vector<cplx> map(const std::vector<uint8_t>& bits) const;
  // Minimum-distance decision; exact ties resolve to the lowest label.
  int decide(cplx y) const;
  std::vector<uint8_t> demap(const std::vector<cplx>& symbols) const;

 private:
  std::array<cplx, 8> points_{};
  double norm_ = 0.0;
  double r2_inner_ = 0.0, r2_outer_ = 0.0;
};

// FIR raised-cosine shaper. Peak-normalized: unit gain at symbol instants, so the
// shaped waveform reproduces the symbols at symbol-spaced samples.
class PulseShaper {
 public:
  // roll_off in (0,1], samples_per_symbol >= 2, span_symbols even and >= 4.
  static PulseShaper raised_cosine(double roll_off, int samples_per_symbol,
                                   int span_symbols);

  const std::vector<double>& taps() const { return taps_; }
  double roll_off() const { return roll_off_; }
  int samples_per_symbol() const { return sps_; }
  int span_symbols() const { return span_; }
  int group_delay_samples() const { return static_cast<int>(taps_.size() - 1) / 2; }

  // Upsample by samples_per_symbol and filter (full convolution: output length is
  // n*sps + taps - 1, content delayed by group_delay_samples).
  ComplexEnvelope shape(const std::vector<cplx>& symbols, double symbol_rate_hz) const;

 private:
  double roll_off_ = 0.0;
  int sps_ = 0;
  int span_ = 0;
  std::vector<double> taps_;
};

}  // namespace oamsdm
