#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oamsdm/envelope.hpp"
#include "oamsdm/txgen.hpp"

namespace oamsdm {

struct PrbsDescriptor {
  uint32_t init_state = 1u;  // generator state of the reference sequence
};

struct BerResult {
  double ber = 0.0;
  uint64_t errors = 0;
  uint64_t bits = 0;
  double ci_low = 0.0, ci_high = 0.0;  // 95% Wilson interval
  uint64_t delay_bits = 0;             // rx bit 0 = reference bit delay_bits (mod period)
  int rotation = 0;                    // 90-degree multiples removed before demapping
  bool ambiguous = false;              // two hypotheses within 10%
};

// Resolves constellation rotation (re-demapping under each of the 4 rotations) and
// bit delay (circular correlation against the full PRBS period), then counts errors.
// NoLockError if no hypothesis clears 6-sigma significance.
BerResult align_and_ber(const std::vector<cplx>& symbols, const QamSymbolMap&,
                        const PrbsDescriptor& ref);

struct SeConfig {
  int n_directions = 2;
  int n_modes = 84;  // spatial channels (cores x OAM modes x polarizations), per direction
  int bits_per_symbol = 3;
  double baud_hz = 12e9;
  double grid_hz = 12.5e9;
  int n_wavelengths = 40;
  double fec_overhead = 0.20;
};

struct SeResult {
  double raw_se = 0.0;           // bit/s/Hz
  double net_se = 0.0;
  double raw_capacity_bps = 0.0;
  double net_capacity_bps = 0.0;
};

// Evaluated in exact rational arithmetic, rounded once at the end.
SeResult spectral_efficiency(const SeConfig&);

// Real-valued complex multiplications per transmitted bit of an M x M, N-tap
// time-domain equalizer at b bits/symbol: M * N / b.
double rncm_per_bit(int m, int n_taps, int bits_per_symbol);

struct BudgetEntry {
  std::string name;
  double db = 0.0;  // negative = loss
};

struct BudgetResult {
  double received_dbm = 0.0;
  bool below_sensitivity = false;
};

BudgetResult power_budget(double launch_dbm, const std::vector<BudgetEntry>& entries,
                          double sensitivity_dbm = -37.0);

struct SnrEvm {
  double snr_db = 0.0;        // +inf for an exact match
  double evm_fraction = 0.0;  // rms error over rms reference
};

// Ground-truth EVM: rx and ref must be aligned and phase-resolved. ShapeError on
// length mismatch.
SnrEvm snr_evm(const std::vector<cplx>& rx, const std::vector<cplx>& ref);

// 95% Wilson score interval for k errors in n bits.
void wilson_interval(uint64_t k, uint64_t n, double& lo, double& hi);

}  // namespace oamsdm
