#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oamsdm/envelope.hpp"
#include "oamsdm/fiberchan.hpp"
#include "oamsdm/metrics.hpp"
#include "oamsdm/rbnoise.hpp"
#include "oamsdm/rxdsp.hpp"

namespace oamsdm {

struct DspConfig {
  int n_taps = 15;
  double step_size = 1e-3;
  int warmup_symbols = 49152;  // adaptation region excluded from measurement
  int cpe_test_phases = 32;
  int cpe_window = 64;
  double fec_ber = 2.4e-2;
};

struct ImpairmentConfig {
  double freq_offset_hz = 100e6;
  double laser_linewidth_hz = 50e3;
  double timing_offset_samples = 0.25;
};

// One experiment run, fully determined by (config, seed).
struct ExperimentConfig {
  std::string experiment;  // ber_grid | backward_power_sweep | tap_count_sweep |
                           // drift_tracking | budget_check | complexity_table
  uint64_t seed = 0;
  bool seed_set = false;  // a seed must come from the config or the command line
  std::string out_dir = "out";
  std::size_t symbols = 200000;
  int parallel = 1;
  int wavelengths = 1;
  double osnr_db = 18.0;
  bool drift_on = true;
  int drift_bursts = 12;
  double drift_dt_s = 0.02;
  FiberProfile profile;  // desk scale: 1 core, 3 mode groups
  BidirNoiseConfig noise;
  ImpairmentConfig impairments;
  DspConfig dsp;
  // When the grid has a single core, emulates the aggregate inter-core crosstalk as
  // an independent interferer at profile.xt_intercore_db; real cores disable it.
  bool intercore_analogue = true;

  // backward_power_sweep
  std::vector<double> backward_powers_dbm = {0, 5, 10, 15, 20, 25, 30};
  std::vector<std::string> rb_scenarios = {"same", "cross", "multiplexed"};
  int sweep_mg = 3;

  // tap_count_sweep
  std::vector<int> tap_counts = {1, 3, 5, 7, 9, 11, 15, 21, 31};

  // drift_tracking
  int track_bursts = 48;
  double track_dt_s = 0.05;
  std::size_t track_burst_symbols = 10000;
  double drift_rate_rad_per_s = -1.0;  // < 0: use profile value

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig desk_default(const std::string& experiment);
  std::string canonical_json() const;  // defaults materialized, keys sorted
  uint64_t config_hash() const;        // FNV-1a of canonical_json
  void validate() const;
};

struct ChannelRow {
  int core = 1;
  int mg = 2;
  int charge = 2;
  Polarization pol = Polarization::R;
  int wavelength = 0;
  Direction dir = Direction::Forward;
  double ber = 0.0, ci_low = 0.0, ci_high = 0.0;
  double snr_db = 0.0, evm_percent = 0.0;
  bool pass = false;
  bool locked = false;
};

struct ExperimentResult {
  std::vector<ChannelRow> rows;
  std::string results_csv;
  std::string report_json;
  std::string taps_json;  // empty when the experiment exports no taps
  std::vector<std::string> violations;  // failed built-in orderings/assertions
  int exit_code = 0;                    // 0 ok, 2 when violations is non-empty
};

ExperimentResult run_experiment(const ExperimentConfig&);
void write_outputs(const ExperimentResult&, const std::string& out_dir);

// Fixed-format helpers shared by the writers; output is byte-stable across runs.
std::string format_double(double v);
std::string csv_escape(const std::string& s);

}  // namespace oamsdm
