#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "oamsdm/envelope.hpp"
#include "oamsdm/rng.hpp"

namespace oamsdm {

// Static description of the multi-core ring-core fiber and its mux/demux modules.
// Serializes to JSON with keys named exactly like the fields.
struct FiberProfile {
  double length_km = 5.0;
  int cores = 7;
  std::vector<int> mode_groups = {2, 3, 4};          // |l|; groups 0 and 1 are rejected
  std::vector<std::vector<double>> atten_db_per_km;  // [core][mg index]
  double dgd_ns_per_km = 5.0;                        // between adjacent mode groups
  std::vector<double> intra_dmd_ps_per_km;           // [mg index], in-group delay spread
  // Aggregate crosstalk within a core, normalized at the worst (middle) mode group;
  // leakage weights fall off 10 dB per unit of |Delta l| beyond adjacent.
  double xt_intermg_db = -12.0;
  double xt_intercore_db = -20.0;  // aggregate received from all other cores, same MG
  double rayleigh_scatter_db_per_km = 0.25;
  double recapture_same = 1e-3;
  double recapture_cross = 5e-4;
  double fresnel_reflectance = 0.0330;
  double drift_rate_rad_per_s = 1.0;
  bool distributed_xt = false;  // adds 5 lumped in-fiber leakage sections
  double infiber_xt_db_per_km = -35.0;

  static FiberProfile default_profile();
  static FiberProfile from_json(const std::string& text);
  std::string to_json() const;
  void validate() const;  // ConfigError on violation

  int mg_index(int group) const;  // position in mode_groups, ConfigError if absent
  double mean_atten_db_per_km() const;
};

struct GroupKey {
  int core = 1;
  int mg = 2;
  Direction dir = Direction::Forward;
  friend auto operator<=>(const GroupKey&, const GroupKey&) = default;
  friend bool operator==(const GroupKey&, const GroupKey&) = default;
};

// The 4x4 unitary mixing and per-mode delays of one degenerate group.
struct IntraGroupChannel {
  Eigen::Matrix4cd mixing = Eigen::Matrix4cd::Identity();
  std::array<double, 4> delays_ps{};  // zero-mean differential delays
  double drift_rate_rad_per_s = 0.0;
};

// A frozen channel realization: per-group mixing/delays plus the demux-side leakage
// blocks that carry all inter-MG and inter-core crosstalk.
struct Channel {
  FiberProfile profile;
  uint64_t seed = 0;
  std::map<GroupKey, IntraGroupChannel> groups;
  // (to, from): leaked field blocks applied to post-fiber group fields.
  std::map<std::pair<GroupKey, GroupKey>, Eigen::Matrix4cd> xt_blocks;
  std::map<GroupKey, double> insertion_loss_db;  // mux+demux, default 0

  double group_delay_ns(int mg) const;  // relative to the lowest configured group
  double atten_db(const GroupKey&) const;
};

// reciprocal = true reuses each forward realization, transposed, for the backward
// direction; the default draws the two directions independently.
Channel build_channel(const FiberProfile&, uint64_t seed, bool reciprocal = false);

// U <- polar(U * exp(i*eps*H)) per group, eps = drift_rate * dt_s, H random Hermitian
// with unit Frobenius norm. Exact re-unitarization every step.
void advance_drift(Channel&, double dt_s, Rng& stream);

using ModeField = std::pair<ModeId, ComplexEnvelope>;

// Propagates complete 4-mode groups (frequency domain: attenuation, group delay,
// in-group mixing with fractional-sample delays, then crosstalk injection). Returns
// every group of the input direction, including non-launched groups that only carry
// leakage. Output is longer than the input by the delay margin.
std::vector<ModeField> propagate(const Channel&, const std::vector<ModeField>& input);

struct CrosstalkReport {
  std::vector<GroupKey> launched;
  // power ratios relative to surviving co-group power, linear
  std::map<std::pair<GroupKey, GroupKey>, double> pair_ratio;  // (to, from)
  double aggregate_intermg_db(const GroupKey& from) const;     // -inf if no leakage
  double aggregate_intercore_db(const GroupKey& from) const;
  double worst_intermg_db() const;
};

// Unit probes, one group at a time; integrates received power per foreign group.
CrosstalkReport measure_crosstalk(const Channel&, Direction dir = Direction::Forward);

// Adds circular Gaussian noise so that signal power over noise power in ref_bw_hz
// equals osnr_db. A +inf OSNR returns the input unchanged.
ComplexEnvelope add_optical_noise(const ComplexEnvelope&, double osnr_db,
                                  double ref_bw_hz, Rng&);

struct ImpulseResponse {
  std::vector<double> power;  // received power vs time, summed over probe groups
  double sample_rate_hz = 0.0;
};

ImpulseResponse impulse_response(const Channel&, int core,
                                 const std::vector<int>& probe_mgs,
                                 double sample_rate_hz = 24e9,
                                 Direction dir = Direction::Forward);

}  // namespace oamsdm
