#include "oamsdm/rbnoise.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

#include "oamsdm/errors.hpp"
#include "oamsdm/txgen.hpp"

namespace oamsdm {

namespace {
constexpr double kLn10Over10 = 0.23025850929940457;

// The surrogate field reuses the link's transmit shaping so its spectrum matches
// the scattered signal's.
constexpr double kShapeRollOff = 0.01;
constexpr int kShapeSps = 2;
constexpr int kShapeSpan = 64;

double dbm_to_w(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }
}  // namespace

double BidirNoiseConfig::recapture(int backward_mg) const {
  return backward_mg == forward_mg ? recapture_same : recapture_cross;
}

void BidirNoiseConfig::validate() const {
  if (!(length_km > 0.0)) throw ConfigError("bidir: length_km must be positive");
  if (atten_db_per_km < 0.0) throw ConfigError("bidir: negative attenuation");
  if (rayleigh_scatter_db_per_km < 0.0) throw ConfigError("bidir: negative scatter rate");
  if (!(recapture_same >= 0.0 && recapture_same <= 1.0) ||
      !(recapture_cross >= 0.0 && recapture_cross <= 1.0))
    throw ConfigError("bidir: recapture fractions must be in [0, 1]");
  if (!(fresnel_reflectance >= 0.0 && fresnel_reflectance < 1.0))
    throw ConfigError("bidir: reflectance must be in [0, 1)");
  if (demux_mode_suppression_db < 0.0)
    throw ConfigError("bidir: demux suppression must be >= 0 dB");
  for (const auto& [mg, dbm] : p_backward_dbm) {
    if (mg < 0) throw ConfigError("bidir: negative mode group");
    if (!std::isfinite(dbm)) throw ConfigError("bidir: backward power must be finite");
  }
}

RbPower rb_power(const BidirNoiseConfig& cfg) {
  cfg.validate();
  const double alpha = cfg.atten_db_per_km * kLn10Over10;    // 1/km
  const double alpha_s = cfg.rayleigh_scatter_db_per_km * kLn10Over10;
  const double L = cfg.length_km;
  // integral_0^L exp(-2 alpha z) dz, exact as alpha -> 0
  const double eff2 =
      alpha < 1e-15 ? L : (1.0 - std::exp(-2.0 * alpha * L)) / (2.0 * alpha);
  RbPower out;
  for (const auto& [mg, dbm] : cfg.p_backward_dbm) {
    RbContribution c;
    c.backward_mg = mg;
    c.power_w = dbm_to_w(dbm) * alpha_s * cfg.recapture(mg) * eff2;
    out.total_w += c.power_w;
    out.per_source.push_back(c);
  }
  return out;
}

double fresnel_power_w(const BidirNoiseConfig& cfg) {
  cfg.validate();
  const double alpha = cfg.atten_db_per_km * kLn10Over10;
  const double round_trip = std::exp(-2.0 * alpha * cfg.length_km);
  double total = 0.0;
  for (const auto& [mg, dbm] : cfg.p_backward_dbm) {
    const double supp =
        mg == cfg.forward_mg
            ? 1.0
            : std::pow(10.0, -cfg.demux_mode_suppression_db / 10.0);
    total += dbm_to_w(dbm) * cfg.fresnel_reflectance * round_trip * supp;
  }
  return total;
}

DetectedRatio detected_ratio(const BidirNoiseConfig& cfg) {
  const RbPower rb = rb_power(cfg);
  const double alpha = cfg.atten_db_per_km * kLn10Over10;
  const double p_sig = dbm_to_w(cfg.p_forward_dbm) * std::exp(-alpha * cfg.length_km);
  DetectedRatio out;
  out.per_source = rb.per_source;
  out.ratio_db = rb.total_w <= 0.0
                     ? std::numeric_limits<double>::infinity()
                     : 10.0 * std::log10(p_sig / rb.total_w);
  return out;
}

ComplexEnvelope rb_as_noise_field(double power_w, std::size_t n, double sample_rate_hz,
                                  Rng& rng) {
  if (power_w < 0.0) throw ConfigError("noise field: negative power");
  ComplexEnvelope env;
  env.sample_rate_hz = sample_rate_hz;
  env.samples.assign(n, cplx(0.0, 0.0));
  if (n == 0 || power_w == 0.0) return env;
  // The scatter sum over the fiber decorrelates the backward data but keeps its
  // spectrum, so the surrogate is Gaussian symbols through the transmit pulse
  // shape rather than white samples; the receiver band then captures all of the
  // stated power instead of an oversampling-dependent slice.
  const PulseShaper shaper =
      PulseShaper::raised_cosine(kShapeRollOff, kShapeSps, kShapeSpan);
  const std::size_t m = n / kShapeSps + 1 + kShapeSpan;
  std::vector<cplx> syms(m);
  for (auto& s : syms) s = rng.cgaussian();
  const auto shaped = shaper.shape(syms, sample_rate_hz / kShapeSps);
  const std::size_t off = static_cast<std::size_t>(shaper.group_delay_samples());
  double p = 0.0;
  for (std::size_t t = 0; t < n; ++t) p += std::norm(shaped.samples[off + t]);
  p /= static_cast<double>(n);
  const double amp = std::sqrt(power_w / p);
  for (std::size_t t = 0; t < n; ++t) env.samples[t] = amp * shaped.samples[off + t];
  return env;
}

BidirNoiseConfig BidirNoiseConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bidir: bad json: ") + e.what());
  }
  BidirNoiseConfig c;
  try {
    for (const auto& [key, val] : j.items()) {
      if (key == "length_km") c.length_km = val.get<double>();
      else if (key == "atten_db_per_km") c.atten_db_per_km = val.get<double>();
      else if (key == "rayleigh_scatter_db_per_km")
        c.rayleigh_scatter_db_per_km = val.get<double>();
      else if (key == "p_forward_dbm") c.p_forward_dbm = val.get<double>();
      else if (key == "forward_mg") c.forward_mg = val.get<int>();
      else if (key == "p_backward_dbm") {
        c.p_backward_dbm.clear();
        for (const auto& e : val)
          c.p_backward_dbm.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
      } else if (key == "recapture_same") c.recapture_same = val.get<double>();
      else if (key == "recapture_cross") c.recapture_cross = val.get<double>();
      else if (key == "fresnel_reflectance") c.fresnel_reflectance = val.get<double>();
      else if (key == "demux_mode_suppression_db")
        c.demux_mode_suppression_db = val.get<double>();
      else throw ConfigError("bidir: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bidir: bad value: ") + e.what());
  }
  c.validate();
  return c;
}

std::string BidirNoiseConfig::to_json() const {
  nlohmann::json j;
  j["length_km"] = length_km;
  j["atten_db_per_km"] = atten_db_per_km;
  j["rayleigh_scatter_db_per_km"] = rayleigh_scatter_db_per_km;
  j["p_forward_dbm"] = p_forward_dbm;
  j["forward_mg"] = forward_mg;
  auto arr = nlohmann::json::array();
  for (const auto& [mg, dbm] : p_backward_dbm) arr.push_back({mg, dbm});
  j["p_backward_dbm"] = arr;
  j["recapture_same"] = recapture_same;
  j["recapture_cross"] = recapture_cross;
  j["fresnel_reflectance"] = fresnel_reflectance;
  j["demux_mode_suppression_db"] = demux_mode_suppression_db;
  return j.dump(2);
}

}  // namespace oamsdm
