#include "oamsdm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>

#include "oamsdm/errors.hpp"
#include "oamsdm/fft.hpp"

namespace oamsdm {

void wilson_interval(uint64_t k, uint64_t n, double& lo, double& hi) {
  if (n == 0) {
    lo = 0.0;
    hi = 1.0;
    return;
  }
  const double z = 1.959963984540054;  // 97.5th normal percentile
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2n = z * z / nn;
  const double denom = 1.0 + z2n;
  const double center = (p + z2n / 2.0) / denom;
  const double half = (z / denom) * std::sqrt(p * (1.0 - p) / nn + z2n / (4.0 * nn));
  lo = std::max(0.0, center - half);
  hi = std::min(1.0, center + half);
}

namespace {

__int128 gcd128(__int128 a, __int128 b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    __int128 t = a % b;
    a = b;
    b = t;
  }
  return a == 0 ? 1 : a;
}

struct Rat {
  __int128 num = 0;
  __int128 den = 1;

  void reduce() {
    const __int128 g = gcd128(num, den);
    num /= g;
    den /= g;
    if (den < 0) {
      num = -num;
      den = -den;
    }
  }
  Rat operator*(const Rat& o) const {
    Rat r{num * o.num, den * o.den};
    r.reduce();
    return r;
  }
  Rat operator/(const Rat& o) const {
    Rat r{num * o.den, den * o.num};
    r.reduce();
    return r;
  }
  // Single rounding when both parts fit a double exactly.
  double value() const {
    const __int128 lim = static_cast<__int128>(1) << 53;
    if (num > -lim && num < lim && den < lim)
      return static_cast<double>(static_cast<int64_t>(num)) /
             static_cast<double>(static_cast<int64_t>(den));
    return static_cast<double>(static_cast<long double>(num) /
                               static_cast<long double>(den));
  }
};

Rat rat_from_hz(double v, const char* what) {
  if (!(v > 0.0) || v > 9e18) throw ConfigError(std::string(what) + ": must be positive");
  const double r = std::round(v);
  if (std::abs(v - r) > 1e-3)
    throw ConfigError(std::string(what) + ": must be an integer number of Hz");
  return Rat{static_cast<__int128>(static_cast<int64_t>(r)), 1};
}

}  // namespace

SeResult spectral_efficiency(const SeConfig& cfg) {
  if (cfg.n_directions <= 0 || cfg.n_modes <= 0 || cfg.bits_per_symbol <= 0 ||
      cfg.n_wavelengths <= 0)
    throw ConfigError("spectral_efficiency: counts must be positive");
  if (!(cfg.fec_overhead >= 0.0) || cfg.fec_overhead > 10.0)
    throw ConfigError("spectral_efficiency: fec_overhead out of range");
  const Rat baud = rat_from_hz(cfg.baud_hz, "baud_hz");
  const Rat grid = rat_from_hz(cfg.grid_hz, "grid_hz");
  // Overhead quantized to 1e-4 so e.g. 0.20 enters as exactly 2000/10000.
  const Rat oh{std::llround(cfg.fec_overhead * 10000.0), 10000};
  const Rat streams{static_cast<__int128>(cfg.n_directions) * cfg.n_modes *
                        cfg.bits_per_symbol,
                    1};
  Rat raw = streams * baud / grid;
  Rat net = raw * Rat{oh.den, oh.den + oh.num};
  Rat raw_cap = raw * grid * Rat{cfg.n_wavelengths, 1};
  Rat net_cap = net * grid * Rat{cfg.n_wavelengths, 1};
  SeResult r;
  r.raw_se = raw.value();
  r.net_se = net.value();
  r.raw_capacity_bps = raw_cap.value();
  r.net_capacity_bps = net_cap.value();
  return r;
}

double rncm_per_bit(int m, int n_taps, int bits_per_symbol) {
  if (m <= 0 || n_taps <= 0 || bits_per_symbol <= 0)
    throw ConfigError("rncm_per_bit: arguments must be positive");
  return static_cast<double>(m) * n_taps / bits_per_symbol;
}

BudgetResult power_budget(double launch_dbm, const std::vector<BudgetEntry>& entries,
                          double sensitivity_dbm) {
  BudgetResult r;
  r.received_dbm = launch_dbm;
  for (const auto& e : entries) r.received_dbm += e.db;
  r.below_sensitivity = r.received_dbm < sensitivity_dbm;
  return r;
}

SnrEvm snr_evm(const std::vector<cplx>& rx, const std::vector<cplx>& ref) {
  if (rx.size() != ref.size() || rx.empty())
    throw ShapeError("snr_evm: sequences must be non-empty and equal length");
  double err = 0.0, sig = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    err += std::norm(rx[i] - ref[i]);
    sig += std::norm(ref[i]);
  }
  SnrEvm out;
  if (sig <= 0.0) throw ShapeError("snr_evm: reference has no power");
  if (err == 0.0) {
    out.snr_db = std::numeric_limits<double>::infinity();
    out.evm_fraction = 0.0;
    return out;
  }
  out.evm_fraction = std::sqrt(err / sig);
  out.snr_db = 10.0 * std::log10(sig / err);
  return out;
}

namespace {

// FFT of the +-1 mapped reference period, cached per generator state. The period
// 2^18-1 is not 5-smooth, so these transforms are the slow generic kind; one copy
// per reference is plenty.
std::shared_ptr<const std::vector<cplx>> ref_period_fft(uint32_t init_state) {
  static std::mutex mu;
  static std::map<uint32_t, std::shared_ptr<const std::vector<cplx>>> cache;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(init_state);
    if (it != cache.end()) return it->second;
  }
  PrbsGenerator gen(init_state);
  std::vector<cplx> r(PrbsGenerator::kPeriod);
  for (auto& v : r) v = gen.next() ? cplx(-1.0, 0.0) : cplx(1.0, 0.0);
  fft_inplace(r, false);
  auto sp = std::make_shared<const std::vector<cplx>>(std::move(r));
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(init_state, sp);
  return sp;
}

}  // namespace

BerResult align_and_ber(const std::vector<cplx>& symbols, const QamSymbolMap& map,
                        const PrbsDescriptor& ref) {
  if (symbols.empty()) throw EstimationError("align: no symbols");
  const std::size_t P = PrbsGenerator::kPeriod;
  const std::size_t n_bits = symbols.size() * 3;
  const double sigma = std::sqrt(static_cast<double>(n_bits));
  const auto ref_fft = ref_period_fft(ref.init_state);

  static const cplx rot_mul[4] = {{1, 0}, {0, -1}, {-1, 0}, {0, 1}};  // e^{-i pi k/2}

  double best = -1.0, second = -1.0;
  int best_rot = 0;
  std::size_t best_delay = 0;
  std::vector<std::vector<uint8_t>> rot_bits(4);

  std::vector<cplx> folded(P);
  for (int k = 0; k < 4; ++k) {
    std::vector<cplx> rx(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) rx[i] = symbols[i] * rot_mul[k];
    rot_bits[k] = map.demap(rx);
    std::fill(folded.begin(), folded.end(), cplx(0.0, 0.0));
    for (std::size_t j = 0; j < n_bits; ++j)
      folded[j % P] += rot_bits[k][j] ? cplx(-1.0, 0.0) : cplx(1.0, 0.0);
    fft_inplace(folded, false);
    for (std::size_t t = 0; t < P; ++t)
      folded[t] = std::conj(folded[t]) * (*ref_fft)[t];
    fft_inplace(folded, true);
    // folded[d] ~ sum_j x[j] * r[j + d]
    for (std::size_t d = 0; d < P; ++d) {
      const double c = folded[d].real();
      if (c > best) {
        second = best;
        best = c;
        best_rot = k;
        best_delay = d;
      } else if (c > second) {
        second = c;
      }
    }
  }

  if (best < 6.0 * sigma)
    throw NoLockError("align: correlation peak below significance threshold");

  BerResult out;
  out.rotation = best_rot;
  out.delay_bits = best_delay;
  out.ambiguous = second > 0.9 * best;
  PrbsGenerator gen(ref.init_state);
  gen.skip(best_delay);
  const auto& bits = rot_bits[best_rot];
  uint64_t errors = 0;
  for (std::size_t j = 0; j < n_bits; ++j) errors += bits[j] != gen.next();
  out.errors = errors;
  out.bits = n_bits;
  out.ber = static_cast<double>(errors) / static_cast<double>(n_bits);
  wilson_interval(errors, n_bits, out.ci_low, out.ci_high);
  return out;
}

}  // namespace oamsdm
