#include "oamsdm/txgen.hpp"

#include <cmath>
#include <cstdio>

#include "oamsdm/errors.hpp"

namespace oamsdm {

std::string ModeId::str() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "core%d/l%+d/%s/%s", core, charge,
                pol == Polarization::R ? "R" : "L",
                dir == Direction::Forward ? "fwd" : "bwd");
  return buf;
}

double mean_power(const std::vector<cplx>& x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& v : x) acc += std::norm(v);
  return acc / static_cast<double>(x.size());
}

PrbsGenerator::PrbsGenerator(uint32_t state) : state_(state) {
  if (state_ == 0 || state_ >= (1u << kDegree))
    throw ConfigError("prbs: initial state must be a non-zero 18-bit value");
}

uint8_t PrbsGenerator::next() {
  // x^18 + x^11 + 1: a[n+18] = a[n+11] ^ a[n]; LSB holds the oldest bit.
  const uint8_t out = static_cast<uint8_t>(state_ & 1u);
  const uint32_t fb = (state_ ^ (state_ >> 11)) & 1u;
  state_ = (state_ >> 1) | (fb << (kDegree - 1));
  return out;
}

std::vector<uint8_t> PrbsGenerator::bits(std::size_t n) {
  std::vector<uint8_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = next();
  return out;
}

void PrbsGenerator::skip(uint64_t n) {
  n %= kPeriod;
  for (uint64_t i = 0; i < n; ++i) next();
}

QamSymbolMap QamSymbolMap::star8() {
  QamSymbolMap m;
  const double root3 = std::sqrt(3.0);
  const double norm = 1.0 / std::sqrt(2.5 + root3);
  const double inner = norm / std::sqrt(2.0);   // per-axis inner component
  const double outer = norm * (1.0 + root3);
  // Quadrature axis signs per CCW quadrant q: inner ring sits at 45 + 90q deg,
  // outer ring at 90q deg. Bits (b1 b0) Gray-encode the quadrant so a 90 deg
  // rotation changes exactly one of them; b2 selects the ring.
  const double qre[4] = {1.0, -1.0, -1.0, 1.0};
  const double qim[4] = {1.0, 1.0, -1.0, -1.0};
  const cplx axes[4] = {{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}};
  for (int g = 0; g < 4; ++g) {
    const int q = g ^ (g >> 1);  // Gray decode
    m.points_[g] = cplx(inner * qre[q], inner * qim[q]);
    m.points_[4 + g] = outer * axes[q];
  }
  m.norm_ = norm;
  m.r2_inner_ = std::norm(m.points_[0]);
  m.r2_outer_ = std::norm(m.points_[4]);
  return m;
}

std::vector<cplx> QamSymbolMap::map(const std::vector<uint8_t>& bits) const {
  if (bits.size() % 3 != 0)
    throw FramingError("map: bit count must be a multiple of 3");
  std::vector<cplx> out(bits.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int label = (bits[3 * i] << 2) | (bits[3 * i + 1] << 1) | bits[3 * i + 2];
    out[i] = points_[label];
  }
  return out;
}

int QamSymbolMap::decide(cplx y) const {
  int best = 0;
  double best_d = std::norm(y - points_[0]);
  for (int k = 1; k < 8; ++k) {
    const double d = std::norm(y - points_[k]);
    if (d < best_d) {  // strict: ties resolve to the lowest label
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::vector<uint8_t> QamSymbolMap::demap(const std::vector<cplx>& symbols) const {
  std::vector<uint8_t> bits(symbols.size() * 3);
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const int label = decide(symbols[i]);
    bits[3 * i] = static_cast<uint8_t>((label >> 2) & 1);
    bits[3 * i + 1] = static_cast<uint8_t>((label >> 1) & 1);
    bits[3 * i + 2] = static_cast<uint8_t>(label & 1);
  }
  return bits;
}

namespace {
double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}
}  // namespace

PulseShaper PulseShaper::raised_cosine(double roll_off, int sps, int span) {
  if (!(roll_off > 0.0) || roll_off > 1.0)
    throw ConfigError("shaper: roll-off must be in (0, 1]");
  if (sps < 2) throw ConfigError("shaper: need at least 2 samples per symbol");
  if (span < 4 || span % 2 != 0)
    throw ConfigError("shaper: span must be an even symbol count >= 4");
  PulseShaper s;
  s.sps_ = sps;
  s.roll_off_ = roll_off;
  s.span_ = span;
  const int n_taps = span * sps + 1;
  const int center = span * sps / 2;
  s.taps_.resize(n_taps);
  for (int k = 0; k < n_taps; ++k) {
    const double t = static_cast<double>(k - center) / sps;
    const double u = 2.0 * roll_off * t;
    double h;
    if (std::abs(1.0 - u * u) < 1e-10) {
      h = (M_PI / 4.0) * sinc(1.0 / (2.0 * roll_off));
    } else {
      h = sinc(t) * std::cos(M_PI * roll_off * t) / (1.0 - u * u);
    }
    s.taps_[k] = h;  // peak normalized: h(0) = 1 keeps symbol points exact
  }
  return s;
}

ComplexEnvelope PulseShaper::shape(const std::vector<cplx>& symbols,
                                   double symbol_rate_hz) const {
  if (symbol_rate_hz <= 0.0) throw ConfigError("shaper: symbol rate must be positive");
  ComplexEnvelope env;
  env.sample_rate_hz = symbol_rate_hz * sps_;
  if (symbols.empty()) return env;
  const std::size_t n_out = symbols.size() * sps_ + taps_.size() - 1;
  env.samples.assign(n_out, cplx(0.0, 0.0));
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    const cplx a = symbols[k];
    if (a == cplx(0.0, 0.0)) continue;
    const std::size_t base = k * sps_;
    for (std::size_t t = 0; t < taps_.size(); ++t) env.samples[base + t] += a * taps_[t];
  }
  return env;
}

}  // namespace oamsdm
