#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "oamsdm/envelope.hpp"
#include "oamsdm/rng.hpp"
#include "oamsdm/txgen.hpp"

namespace oamsdm {

// Receive-side impairments of one 4-mode group. One laser pair serves the group, so
// the frequency offset and phase-noise walk are common to its four streams.
struct FrontEndImpairments {
  double freq_offset_hz = 0.0;
  double laser_linewidth_hz = 0.0;  // combined TX + LO
  double timing_offset_samples = 0.0;
};

std::array<ComplexEnvelope, 4> apply_front_end(const std::array<ComplexEnvelope, 4>&,
                                               const FrontEndImpairments&, Rng&);

// Symbol-rate line of |x|^2 extracted as the band-edge spectral correlation at
// 2 samples/symbol; returns the timing offset in symbols, in [-0.5, 0.5).
// EstimationError below 4096 samples.
double timing_phase_estimate(const ComplexEnvelope&);
ComplexEnvelope timing_correct(const ComplexEnvelope&, double offset_symbols);
ComplexEnvelope timing_recovery(const ComplexEnvelope&);

struct EqualizerConfig {
  int n_taps = 15;  // odd, 1..31
  double step_size = 1e-3;
  int dispersion_window = 2048;  // symbols per convergence-detector window
  double switch_threshold = 0.1;
  double output_corr_guard = 0.9;     // duplicate-capture re-init threshold
  double divergence_energy = 1e3;     // per-output tap energy abort threshold
  double track_step_scale = 0.5;      // step after the radius-directed switch
};

// Half-symbol-spaced 4x4 adaptive MIMO equalizer. Constant-modulus acquisition, then
// radius-directed refinement after the windowed dispersion clears the threshold.
// Blind: sees only received samples.
class MimoEqualizer {
 public:
  MimoEqualizer(const EqualizerConfig&, const QamSymbolMap&);

  // Consumes 4 streams at 2 samples/symbol, emits 4 streams at 1 sample/symbol,
  // adapting as it goes. Call repeatedly to continue refining on new data.
  // ShapeError on mismatched lengths; AdaptationError on divergence.
  std::array<std::vector<cplx>, 4> equalize(const std::array<ComplexEnvelope, 4>& in,
                                            bool adapt = true);

  bool converged() const { return stage_ == 1; }
  int stage() const { return stage_; }
  double windowed_dispersion() const { return last_window_dispersion_; }
  int reinit_count() const { return reinits_; }
  uint64_t symbols_processed() const { return symbols_; }
  // Complex multiplies spent in the filtering path (not the tap updates).
  uint64_t filter_mult_count() const { return filter_mults_; }
  const EqualizerConfig& config() const { return cfg_; }

  using TapArray = std::array<std::array<std::vector<cplx>, 4>, 4>;  // [out][in][tap]
  const TapArray& taps() const { return taps_; }
  void set_taps(const TapArray&);
  double tap_change_norm(const TapArray& before) const;

  // Multiplies the adaptation step. Offline receivers converge on a first pass,
  // then re-equalize the same block at a small step so the measured window carries
  // no convergence transient; ConfigError unless factor is in (0, 1].
  void scale_step(double factor);

  // Re-seed one output from the next spike column and drop back to blind
  // acquisition. The in-loop guard only sees near-duplicates; a driver that
  // detects a weaker capture pathology (for example a balanced two-source
  // mixture) uses this to retry that output. ConfigError unless 0 <= out < 4.
  void reinit_output(int out);

 private:
  void init_spike(int out, int in);
  void guard_outputs(const std::array<std::vector<cplx>, 4>& out);

  EqualizerConfig cfg_;
  double step_scale_ = 1.0;
  double r2_cma_ = 0.0;  // E|a|^4 / E|a|^2
  double r2_inner_ = 0.0, r2_outer_ = 0.0;
  TapArray taps_;
  int stage_ = 0;
  uint64_t symbols_ = 0;
  uint64_t filter_mults_ = 0;
  double last_window_dispersion_ = std::numeric_limits<double>::infinity();
  double window_acc_ = 0.0;
  int window_fill_ = 0;
  int reinits_ = 0;
  std::array<int, 4> spike_col_{0, 1, 2, 3};
  // Tracked output power per stream. The ring decision compares |y|^2 against it
  // (the constellation's mean power sits exactly between the squared radii), so a
  // gain error cannot flip decisions and trigger a radius collapse.
  std::array<double, 4> out_pow_{1.0, 1.0, 1.0, 1.0};
};

// Fourth-power spectral line; unambiguous over +-baud/8. EstimationError below 2^14
// symbols, RangeError when the line sits at the wrap edge.
double freq_offset_estimate(const std::vector<cplx>& symbols, double symbol_rate_hz);
std::vector<cplx> derotate(const std::vector<cplx>& symbols, double freq_hz,
                           double symbol_rate_hz);

// Ideal anti-aliasing low-pass: zeroes all spectral content beyond cutoff_hz.
// Sits ahead of the adaptive equalizer so broadband receiver noise outside the
// signal band never reaches it; a short tap array cannot reject it on its own.
ComplexEnvelope lowpass(const ComplexEnvelope& env, double cutoff_hz);

struct CpeResult {
  std::vector<cplx> symbols;       // phase-corrected, rescaled to the decision grid
  std::vector<double> phase_rad;   // applied estimate per symbol
  double gain = 1.0;               // decision-directed amplitude estimate divided out
};

// Blind phase search over n_test_phases in [0, pi/2) with a sliding window of
// `window` symbols centered on each symbol, unwrapped into a continuous track,
// then smoothed by decision-directed ML passes over the same window. The
// residual 90-degree ambiguity is left to downstream alignment.
CpeResult carrier_phase_estimate(const std::vector<cplx>&, const QamSymbolMap&,
                                 int n_test_phases = 32, int window = 64);

// Same recovery for the four streams of one group, which share a transmit laser
// and a local oscillator. Each stream is searched on its own, then the tracks are
// split into a per-stream constant plus one common walk estimated from all four
// streams pooled, which quarters the tracking noise at the same window.
std::array<CpeResult, 4> carrier_phase_estimate_group(
    const std::array<std::vector<cplx>, 4>& symbols, const QamSymbolMap& map,
    int n_test_phases = 32, int window = 64);

std::vector<uint8_t> demap_decide(const std::vector<cplx>&, const QamSymbolMap&);

}  // namespace oamsdm
