#include "oamsdm/rxdsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "oamsdm/errors.hpp"
#include "oamsdm/fft.hpp"

namespace oamsdm {

namespace {

// Fractional delay by d samples, exact in the frequency domain.
std::vector<cplx> fractional_delay(const std::vector<cplx>& x, double d) {
  if (x.empty() || d == 0.0) return x;
  const std::size_t m = next_fast_len(x.size() + 32);
  std::vector<cplx> buf(m, cplx(0.0, 0.0));
  std::copy(x.begin(), x.end(), buf.begin());
  fft_inplace(buf, false);
  for (std::size_t k = 0; k < m; ++k) {
    const double fk = (k <= m / 2 ? static_cast<double>(k)
                                  : static_cast<double>(k) - static_cast<double>(m)) /
                      static_cast<double>(m);
    buf[k] *= std::exp(cplx(0.0, -2.0 * M_PI * fk * d));
  }
  fft_inplace(buf, true);
  buf.resize(x.size());
  return buf;
}

}  // namespace

std::array<ComplexEnvelope, 4> apply_front_end(const std::array<ComplexEnvelope, 4>& in,
                                               const FrontEndImpairments& imp,
                                               Rng& rng) {
  const double fs = in[0].sample_rate_hz;
  const std::size_t n = in[0].samples.size();
  for (const auto& e : in)
    if (e.sample_rate_hz != fs || e.samples.size() != n || n == 0)
      throw ShapeError("front end: four equal-length envelopes required");
  if (imp.laser_linewidth_hz < 0.0) throw ConfigError("front end: negative linewidth");

  // One laser pair serves the group: a single offset ramp and one phase walk.
  std::vector<double> phase(n, 0.0);
  const double sigma =
      imp.laser_linewidth_hz > 0.0 ? std::sqrt(2.0 * M_PI * imp.laser_linewidth_hz / fs)
                                   : 0.0;
  double walk = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    if (sigma > 0.0) walk += sigma * rng.gaussian();
    phase[t] = 2.0 * M_PI * imp.freq_offset_hz * static_cast<double>(t) / fs + walk;
  }

  std::array<ComplexEnvelope, 4> out;
  for (int m = 0; m < 4; ++m) {
    out[m].sample_rate_hz = fs;
    out[m].samples.resize(n);
    for (std::size_t t = 0; t < n; ++t)
      out[m].samples[t] = in[m].samples[t] * std::exp(cplx(0.0, phase[t]));
    if (imp.timing_offset_samples != 0.0)
      out[m].samples = fractional_delay(out[m].samples, imp.timing_offset_samples);
  }
  return out;
}

double timing_phase_estimate(const ComplexEnvelope& env) {
  const std::size_t n = env.samples.size();
  if (n < 4096) throw EstimationError("timing: need at least 4096 samples");
  const std::size_t m = n & ~std::size_t(1);
  std::vector<cplx> x(env.samples.begin(), env.samples.begin() + static_cast<long>(m));
  fft_inplace(x, false);
  // Symbol-rate spectral line at 2 samples/symbol: correlate the upper band edge
  // against the lower one (half the bins, or the line's phase cancels).
  cplx c(0.0, 0.0);
  for (std::size_t k = 0; k < m / 2; ++k) c += x[k] * std::conj(x[k + m / 2]);
  if (std::abs(c) == 0.0) throw EstimationError("timing: no symbol-rate line");
  return -std::arg(c) / (2.0 * M_PI);  // in symbols, [-0.5, 0.5)
}

ComplexEnvelope lowpass(const ComplexEnvelope& env, double cutoff_hz) {
  if (!(cutoff_hz > 0.0) || cutoff_hz > env.sample_rate_hz / 2.0)
    throw ConfigError("lowpass: cutoff must be in (0, fs/2]");
  if (env.samples.empty()) return env;
  const std::size_t m = next_fast_len(env.samples.size() + 32);
  std::vector<cplx> buf(m, cplx(0.0, 0.0));
  std::copy(env.samples.begin(), env.samples.end(), buf.begin());
  fft_inplace(buf, false);
  for (std::size_t k = 0; k < m; ++k) {
    const double fk = (k <= m / 2 ? static_cast<double>(k)
                                  : static_cast<double>(k) - static_cast<double>(m)) *
                      env.sample_rate_hz / static_cast<double>(m);
    if (std::abs(fk) > cutoff_hz) buf[k] = cplx(0.0, 0.0);
  }
  fft_inplace(buf, true);
  ComplexEnvelope out = env;
  buf.resize(env.samples.size());
  out.samples = std::move(buf);
  return out;
}

ComplexEnvelope timing_correct(const ComplexEnvelope& env, double offset_symbols) {
  ComplexEnvelope out;
  out.sample_rate_hz = env.sample_rate_hz;
  out.samples = fractional_delay(env.samples, -2.0 * offset_symbols);
  return out;
}

ComplexEnvelope timing_recovery(const ComplexEnvelope& env) {
  return timing_correct(env, timing_phase_estimate(env));
}

MimoEqualizer::MimoEqualizer(const EqualizerConfig& cfg, const QamSymbolMap& map)
    : cfg_(cfg) {
  if (cfg.n_taps < 1 || cfg.n_taps > 31 || cfg.n_taps % 2 == 0)
    throw ConfigError("equalizer: tap count must be odd, 1..31");
  if (!(cfg.step_size > 0.0)) throw ConfigError("equalizer: step size must be positive");
  if (cfg.dispersion_window < 16) throw ConfigError("equalizer: window too small");
  double p2 = 0.0, p4 = 0.0;
  for (const auto& p : map.points()) {
    p2 += std::norm(p);
    p4 += std::norm(p) * std::norm(p);
  }
  r2_cma_ = p4 / p2;
  r2_inner_ = map.r2_inner();
  r2_outer_ = map.r2_outer();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) taps_[i][j].assign(cfg.n_taps, cplx(0.0, 0.0));
  for (int i = 0; i < 4; ++i) init_spike(i, i);
}

void MimoEqualizer::init_spike(int out, int in) {
  for (int j = 0; j < 4; ++j)
    std::fill(taps_[out][j].begin(), taps_[out][j].end(), cplx(0.0, 0.0));
  taps_[out][in][cfg_.n_taps / 2] = cplx(1.0, 0.0);
  out_pow_[out] = 1.0;
}

void MimoEqualizer::set_taps(const TapArray& t) {
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (t[i][j].size() != static_cast<std::size_t>(cfg_.n_taps))
        throw ShapeError("equalizer: tap array shape mismatch");
  taps_ = t;
}

void MimoEqualizer::scale_step(double factor) {
  if (!(factor > 0.0) || factor > 1.0)
    throw ConfigError("equalizer: step scale factor must be in (0, 1]");
  step_scale_ *= factor;
}

void MimoEqualizer::reinit_output(int out) {
  if (out < 0 || out >= 4) throw ConfigError("equalizer: output index out of range");
  spike_col_[out] = (spike_col_[out] + 1) % 4;
  init_spike(out, spike_col_[out]);
  ++reinits_;
  stage_ = 0;
  window_acc_ = 0.0;
  window_fill_ = 0;
}

double MimoEqualizer::tap_change_norm(const TapArray& before) const {
  double diff = 0.0, ref = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      if (before[i][j].size() != taps_[i][j].size())
        throw ShapeError("equalizer: tap array shape mismatch");
      for (std::size_t t = 0; t < taps_[i][j].size(); ++t) {
        diff += std::norm(taps_[i][j][t] - before[i][j][t]);
        ref += std::norm(before[i][j][t]);
      }
    }
  return ref > 0.0 ? std::sqrt(diff / ref) : std::sqrt(diff);
}

void MimoEqualizer::guard_outputs(const std::array<std::vector<cplx>, 4>& out) {
  // Two outputs tracking the same source show near-unit cross-correlation at some
  // small lag; re-seed the later one on a cycled input column.
  const std::size_t n = out[0].size();
  const std::size_t win = std::min<std::size_t>(n, 2048);
  const std::size_t start = n - win;
  std::array<double, 4> energy{};
  for (int i = 0; i < 4; ++i)
    for (std::size_t t = start; t < n; ++t) energy[i] += std::norm(out[i][t]);
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      if (energy[a] <= 0.0 || energy[b] <= 0.0) continue;
      double best = 0.0;
      for (int lag = -4; lag <= 4; ++lag) {
        cplx acc(0.0, 0.0);
        for (std::size_t t = start; t < n; ++t) {
          const long u = static_cast<long>(t) + lag;
          if (u < static_cast<long>(start) || u >= static_cast<long>(n)) continue;
          acc += out[a][t] * std::conj(out[b][static_cast<std::size_t>(u)]);
        }
        best = std::max(best, std::abs(acc) / std::sqrt(energy[a] * energy[b]));
      }
      if (best > cfg_.output_corr_guard) {
        // Re-seed the later output from a rotated spike so the restarted filter
        // starts closest to a different source, and drop back to the blind stage
        // until the window shows separation again.
        reinit_output(b);
      }
    }
  }
}

std::array<std::vector<cplx>, 4> MimoEqualizer::equalize(
    const std::array<ComplexEnvelope, 4>& in, bool adapt) {
  const double fs = in[0].sample_rate_hz;
  const std::size_t n = in[0].samples.size();
  for (const auto& e : in)
    if (e.sample_rate_hz != fs || e.samples.size() != n)
      throw ShapeError("equalizer: four equal-length envelopes required");
  std::array<std::vector<cplx>, 4> out;
  const int taps = cfg_.n_taps;
  if (n < static_cast<std::size_t>(taps)) return out;
  const std::size_t n_sym = (n - taps) / 2 + 1;
  for (auto& o : out) o.reserve(n_sym);

  const std::array<const cplx*, 4> x{in[0].samples.data(), in[1].samples.data(),
                                     in[2].samples.data(), in[3].samples.data()};
  for (std::size_t s = 0; s < n_sym; ++s) {
    const std::size_t base = 2 * s;
    std::array<cplx, 4> y{};
    for (int i = 0; i < 4; ++i) {
      cplx acc(0.0, 0.0);
      for (int j = 0; j < 4; ++j) {
        const cplx* w = taps_[i][j].data();
        const cplx* xj = x[j] + base;
        for (int t = 0; t < taps; ++t) acc += w[t] * xj[t];
      }
      y[i] = acc;
    }
    filter_mults_ += 16ull * taps;
    for (int i = 0; i < 4; ++i) out[i].push_back(y[i]);

    if (adapt) {
      const double mu = step_scale_ * (stage_ == 0
                                           ? cfg_.step_size
                                           : cfg_.step_size * cfg_.track_step_scale);
      double disp = 0.0;
      for (int i = 0; i < 4; ++i) {
        const double p = std::norm(y[i]);
        out_pow_[i] += (p - out_pow_[i]) / 512.0;
        const double r2_near = p > out_pow_[i] ? r2_outer_ : r2_inner_;
        disp += (p - r2_near) * (p - r2_near);
        const double target = stage_ == 0 ? r2_cma_ : r2_near;
        const cplx e = y[i] * (target - p) * mu;
        for (int j = 0; j < 4; ++j) {
          cplx* w = taps_[i][j].data();
          const cplx* xj = x[j] + base;
          for (int t = 0; t < taps; ++t) w[t] += e * std::conj(xj[t]);
        }
      }
      window_acc_ += disp / 4.0;
      if (++window_fill_ >= cfg_.dispersion_window) {
        last_window_dispersion_ =
            window_acc_ / cfg_.dispersion_window / (r2_cma_ * r2_cma_);
        if (stage_ == 0 && last_window_dispersion_ < cfg_.switch_threshold) stage_ = 1;
        window_acc_ = 0.0;
        window_fill_ = 0;
      }

      if ((symbols_ + s + 1) % 512 == 0) {
        for (int i = 0; i < 4; ++i) {
          double energy = 0.0;
          for (int j = 0; j < 4; ++j)
            for (const auto& w : taps_[i][j]) energy += std::norm(w);
          if (energy > cfg_.divergence_energy) {
            char diag[160];
            std::snprintf(diag, sizeof(diag),
                          "output=%d stage=%d symbols=%llu tap_energy=%.3e", i,
                          stage_, static_cast<unsigned long long>(symbols_ + s + 1),
                          energy);
            throw AdaptationError("equalizer: tap energy diverged", diag);
          }
        }
      }
      // Re-acquisition needs the full step, so the guard only arms at scale 1;
      // refinement passes measure, they do not resolve duplicates.
      if (step_scale_ >= 1.0 && (symbols_ + s + 1) % 4096 == 0 && out[0].size() >= 2048)
        guard_outputs(out);
    }
  }
  symbols_ += n_sym;
  return out;
}

double freq_offset_estimate(const std::vector<cplx>& symbols, double symbol_rate_hz) {
  if (symbols.size() < (1u << 14))
    throw EstimationError("freq offset: need at least 2^14 symbols");
  if (!(symbol_rate_hz > 0.0)) throw ConfigError("freq offset: bad symbol rate");
  std::size_t l = 1u << 14;
  while (l * 2 <= symbols.size() && l < (1u << 16)) l *= 2;
  std::vector<cplx> v(l);
  for (std::size_t k = 0; k < l; ++k) {
    const cplx z2 = symbols[k] * symbols[k];
    v[k] = z2 * z2;
  }
  fft_inplace(v, false);
  std::size_t peak = 0;
  double pmax = -1.0;
  std::vector<double> p(l);
  for (std::size_t k = 0; k < l; ++k) {
    p[k] = std::norm(v[k]);
    if (p[k] > pmax) {
      pmax = p[k];
      peak = k;
    }
  }
  const std::size_t half = l / 2;
  const std::size_t dist = peak > half ? peak - half : half - peak;
  if (dist <= 1)
    throw RangeError("freq offset: spectral line at the edge of the unambiguous range");
  const double pm = p[(peak + l - 1) % l];
  const double pp = p[(peak + 1) % l];
  const double denom = pm - 2.0 * p[peak] + pp;
  double delta = denom != 0.0 ? 0.5 * (pm - pp) / denom : 0.0;
  delta = std::clamp(delta, -0.5, 0.5);
  const double k_signed = (peak <= half ? static_cast<double>(peak)
                                        : static_cast<double>(peak) -
                                              static_cast<double>(l)) +
                          delta;
  return k_signed / static_cast<double>(l) * symbol_rate_hz / 4.0;
}

std::vector<cplx> derotate(const std::vector<cplx>& symbols, double freq_hz,
                           double symbol_rate_hz) {
  if (!(symbol_rate_hz > 0.0)) throw ConfigError("derotate: bad symbol rate");
  std::vector<cplx> out(symbols.size());
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    const double ph = -2.0 * M_PI * freq_hz * static_cast<double>(k) / symbol_rate_hz;
    out[k] = symbols[k] * std::exp(cplx(0.0, ph));
  }
  return out;
}

namespace {

// Coarse search: per-symbol distance under each test phase, averaged over the
// centered window via a prefix sum, one phase at a time to keep memory flat.
// The winning phases are then unwrapped into a continuous track; neighboring
// estimates share window-1 symbols, so a true jump past pi/4 cannot happen.
std::vector<double> bps_coarse_track(const std::vector<cplx>& symbols,
                                     const QamSymbolMap& map, int n_test_phases,
                                     std::size_t half) {
  const std::size_t n = symbols.size();
  const auto& pts = map.points();
  const double quarter = M_PI / 2.0;
  std::vector<double> best_cost(n, std::numeric_limits<double>::infinity());
  std::vector<double> raw(n, 0.0);
  std::vector<double> pre(n + 1);
  for (int m = 0; m < n_test_phases; ++m) {
    const double phi = quarter * m / n_test_phases;
    const cplx rot = std::exp(cplx(0.0, -phi));
    pre[0] = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const cplx z = symbols[t] * rot;
      double dmin = std::norm(z - pts[0]);
      for (int q = 1; q < 8; ++q) dmin = std::min(dmin, std::norm(z - pts[q]));
      pre[t + 1] = pre[t] + dmin;
    }
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t lo = t > half ? t - half : 0;
      const std::size_t hi = std::min(n, t + half + 1);
      const double cost = (pre[hi] - pre[lo]) / static_cast<double>(hi - lo);
      if (cost < best_cost[t]) {
        best_cost[t] = cost;
        raw[t] = phi;
      }
    }
  }
  std::vector<double> theta(n);
  theta[0] = raw[0];
  for (std::size_t t = 1; t < n; ++t) {
    const double prev = theta[t - 1];
    const double rem = prev - std::floor(prev / quarter) * quarter;
    double delta = raw[t] - rem;
    delta -= quarter * std::round(delta / quarter);
    theta[t] = prev + delta;
  }
  return theta;
}

struct DdCorrelation {
  std::vector<cplx> pre;  // prefix sums of z*conj(decision), size n+1
  double g_num = 0.0;
  double g_den = 0.0;
};

DdCorrelation dd_correlate(const std::vector<cplx>& symbols, const QamSymbolMap& map,
                           const std::vector<double>& theta, double gain) {
  const auto& pts = map.points();
  const std::size_t n = symbols.size();
  DdCorrelation c;
  c.pre.resize(n + 1);
  c.pre[0] = cplx(0.0, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const cplx z = symbols[t] * std::exp(cplx(0.0, -theta[t])) / gain;
    const cplx d = pts[map.decide(z)];
    c.pre[t + 1] = c.pre[t] + z * std::conj(d);
    c.g_num += (z * std::conj(d)).real();
    c.g_den += std::norm(d);
  }
  return c;
}

void dd_apply(const std::vector<cplx>& pre, std::size_t half,
              std::vector<double>& theta) {
  const std::size_t n = theta.size();
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = t > half ? t - half : 0;
    const std::size_t hi = std::min(n, t + half + 1);
    const cplx num = pre[hi] - pre[lo];
    if (std::abs(num) > 0.0) theta[t] += std::arg(num);
  }
}

CpeResult package_cpe(const std::vector<cplx>& symbols, std::vector<double> theta,
                      double gain) {
  CpeResult res;
  const std::size_t n = symbols.size();
  res.symbols.resize(n);
  res.gain = gain;
  for (std::size_t t = 0; t < n; ++t)
    res.symbols[t] = symbols[t] * std::exp(cplx(0.0, -theta[t])) / gain;
  res.phase_rad = std::move(theta);
  return res;
}

void validate_cpe_args(int n_test_phases, int window) {
  if (n_test_phases < 2) throw ConfigError("cpe: need at least 2 test phases");
  if (window < 4) throw ConfigError("cpe: window too small");
}

}  // namespace

CpeResult carrier_phase_estimate(const std::vector<cplx>& symbols,
                                 const QamSymbolMap& map, int n_test_phases,
                                 int window) {
  validate_cpe_args(n_test_phases, window);
  const std::size_t n = symbols.size();
  if (n == 0) return CpeResult{};
  const std::size_t half = static_cast<std::size_t>(window) / 2;

  std::vector<double> theta = bps_coarse_track(symbols, map, n_test_phases, half);

  // Decision-directed ML smoothing over the same window, with a global amplitude
  // normalization. Blind radius-directed adaptation equilibrates slightly below
  // unit gain in noise (noise inflates |y|^2), which drags the outer ring toward
  // the ring-decision boundary; rescaling to the decision grid removes that bias.
  // Later passes reuse the improved decisions.
  double gain = 1.0;
  for (int pass = 0; pass < 3; ++pass) {
    const DdCorrelation c = dd_correlate(symbols, map, theta, gain);
    dd_apply(c.pre, half, theta);
    if (c.g_den > 0.0 && c.g_num > 0.0) gain *= c.g_num / c.g_den;
  }
  return package_cpe(symbols, std::move(theta), gain);
}

std::array<CpeResult, 4> carrier_phase_estimate_group(
    const std::array<std::vector<cplx>, 4>& symbols, const QamSymbolMap& map,
    int n_test_phases, int window) {
  validate_cpe_args(n_test_phases, window);
  const std::size_t n = symbols[0].size();
  for (const auto& s : symbols)
    if (s.size() != n) throw ShapeError("cpe: group streams must share length");
  std::array<CpeResult, 4> res;
  if (n == 0) return res;
  const std::size_t half = static_cast<std::size_t>(window) / 2;

  std::array<std::vector<double>, 4> theta;
  std::array<double, 4> gain{1.0, 1.0, 1.0, 1.0};
  for (int m = 0; m < 4; ++m) {
    theta[m] = bps_coarse_track(symbols[m], map, n_test_phases, half);
    // Two per-stream smoothing passes so the pooled stage starts from reliable
    // decisions.
    for (int pass = 0; pass < 2; ++pass) {
      const DdCorrelation c = dd_correlate(symbols[m], map, theta[m], gain[m]);
      dd_apply(c.pre, half, theta[m]);
      if (c.g_den > 0.0 && c.g_num > 0.0) gain[m] *= c.g_num / c.g_den;
    }
  }

  // Split each track into a per-stream constant plus the shared walk. Averaging
  // the walk over the four streams quarters the tracking noise; the constants
  // keep each stream's own equalizer phase.
  std::array<double, 4> c_mean{};
  for (int m = 0; m < 4; ++m) {
    double s = 0.0;
    for (double v : theta[m]) s += v;
    c_mean[m] = s / static_cast<double>(n);
  }
  std::vector<double> common(n, 0.0);
  for (int m = 0; m < 4; ++m)
    for (std::size_t t = 0; t < n; ++t) common[t] += theta[m][t] - c_mean[m];
  for (std::size_t t = 0; t < n; ++t) common[t] *= 0.25;
  for (int m = 0; m < 4; ++m)
    for (std::size_t t = 0; t < n; ++t) theta[m][t] = c_mean[m] + common[t];

  // Pooled smoothing: one windowed increment from all four correlation streams,
  // applied to every track; gains stay per stream.
  for (int pass = 0; pass < 3; ++pass) {
    std::vector<cplx> pooled(n + 1, cplx(0.0, 0.0));
    std::array<DdCorrelation, 4> cs;
    for (int m = 0; m < 4; ++m) {
      cs[m] = dd_correlate(symbols[m], map, theta[m], gain[m]);
      for (std::size_t t = 0; t <= n; ++t) pooled[t] += cs[m].pre[t];
    }
    dd_apply(pooled, half, theta[0]);
    for (std::size_t t = 0; t < n; ++t) {
      const double v = theta[0][t] - (c_mean[0] + common[t]);
      theta[1][t] += v;
      theta[2][t] += v;
      theta[3][t] += v;
    }
    for (std::size_t t = 0; t < n; ++t) common[t] = theta[0][t] - c_mean[0];
    for (int m = 0; m < 4; ++m)
      if (cs[m].g_den > 0.0 && cs[m].g_num > 0.0) gain[m] *= cs[m].g_num / cs[m].g_den;
  }

  for (int m = 0; m < 4; ++m)
    res[m] = package_cpe(symbols[m], std::move(theta[m]), gain[m]);
  return res;
}

std::vector<uint8_t> demap_decide(const std::vector<cplx>& symbols,
                                  const QamSymbolMap& map) {
  return map.demap(symbols);
}

}  // namespace oamsdm
