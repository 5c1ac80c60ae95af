#pragma once

#include <string>
#include <utility>
#include <vector>

#include "oamsdm/envelope.hpp"
#include "oamsdm/rng.hpp"

namespace oamsdm {

// Counterpropagating light reaching the forward receiver: distributed Rayleigh
// backscatter of the backward channels plus the far-facet Fresnel reflection.
// Power-level model; the injected field is circular Gaussian at the computed power.
struct BidirNoiseConfig {
  double length_km = 5.0;
  double atten_db_per_km = 0.32;
  double rayleigh_scatter_db_per_km = 0.25;
  double p_forward_dbm = 8.0;
  int forward_mg = 3;
  std::vector<std::pair<int, double>> p_backward_dbm;  // (mg, launch power dBm)
  double recapture_same = 1e-3;   // backscatter recapture, backward MG == forward MG
  double recapture_cross = 5e-4;  // backward MG != forward MG
  double fresnel_reflectance = 0.0330;
  double demux_mode_suppression_db = 12.0;  // extra rejection of mismatched-MG reflections

  static BidirNoiseConfig from_json(const std::string& text);
  std::string to_json() const;
  void validate() const;
  double recapture(int backward_mg) const;
};

struct RbContribution {
  int backward_mg = 0;
  double power_w = 0.0;
};

struct RbPower {
  double total_w = 0.0;
  std::vector<RbContribution> per_source;
};

// Integrated backscatter power at the forward receiver:
//   sum_n P_B(n) * alpha_s * B(n) * (1 - exp(-2*alpha*L)) / (2*alpha)
// with alpha, alpha_s converted to natural units. The alpha -> 0 limit is exact.
RbPower rb_power(const BidirNoiseConfig&);

// Far-facet single reflection: sum_n P_B(n) * R * exp(-2*alpha*L), with the demux
// suppression applied to mismatched mode groups.
double fresnel_power_w(const BidirNoiseConfig&);

struct DetectedRatio {
  double ratio_db = 0.0;  // +inf when there is no backscatter
  std::vector<RbContribution> per_source;
};

// Signal-to-backscatter power ratio after coherent mixing; the LO power cancels, so
// this is surviving forward power over total recaptured backscatter.
DetectedRatio detected_ratio(const BidirNoiseConfig&);

ComplexEnvelope rb_as_noise_field(double power_w, std::size_t n, double sample_rate_hz,
                                  Rng&);

}  // namespace oamsdm
