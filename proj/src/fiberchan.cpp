#include "oamsdm/fiberchan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "oamsdm/errors.hpp"
#include "oamsdm/fft.hpp"

namespace oamsdm {

namespace {

constexpr double kXtOffDb = -199.0;  // at or below this, no blocks are drawn

// Leakage weight between mode groups: 1 for adjacent, then 10 dB per extra step.
double mg_weight(int delta) { return std::pow(0.1, std::abs(delta) - 1); }

Eigen::Matrix4cd haar_unitary(Rng& rng) {
  Eigen::Matrix4cd g;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) g(i, j) = rng.cgaussian();
  Eigen::HouseholderQR<Eigen::Matrix4cd> qr(g);
  Eigen::Matrix4cd q = qr.householderQ();
  const Eigen::Matrix4cd r = qr.matrixQR();
  for (int i = 0; i < 4; ++i) {
    const cplx d = r(i, i);
    const double m = std::abs(d);
    q.col(i) *= (m > 0.0 ? d / m : cplx(1.0, 0.0));
  }
  return q;
}

std::array<double, 4> draw_delays(Rng& rng, double spread_ps) {
  std::array<double, 4> u{};
  for (auto& v : u) v = rng.uniform01();
  if (spread_ps <= 0.0) return {0.0, 0.0, 0.0, 0.0};
  const auto [mn, mx] = std::minmax_element(u.begin(), u.end());
  if (*mx == *mn) return {0.0, 0.0, 0.0, 0.0};
  std::array<double, 4> d{};
  double mean = 0.0;
  for (int i = 0; i < 4; ++i) {
    d[i] = (u[i] - *mn) / (*mx - *mn) * spread_ps;
    mean += d[i];
  }
  mean /= 4.0;
  for (auto& v : d) v -= mean;  // zero mean, max - min = spread exactly
  return d;
}

int dir_int(Direction d) { return d == Direction::Forward ? 0 : 1; }

}  // namespace

FiberProfile FiberProfile::default_profile() {
  FiberProfile p;
  // Flat across cores; per-MG rates average to 0.32 dB/km over the profile.
  p.atten_db_per_km.assign(p.cores, {0.314, 0.316, 0.330});
  p.intra_dmd_ps_per_km = {50.0, 50.0, 50.0};
  return p;
}

void FiberProfile::validate() const {
  if (!(length_km > 0.0)) throw ConfigError("profile: length_km must be positive");
  if (cores < 1) throw ConfigError("profile: need at least one core");
  if (mode_groups.empty()) throw ConfigError("profile: no mode groups");
  for (std::size_t i = 0; i < mode_groups.size(); ++i) {
    if (mode_groups[i] < 2)
      throw ConfigError("profile: mode groups 0 and 1 are not usable channels");
    if (i > 0 && mode_groups[i] <= mode_groups[i - 1])
      throw ConfigError("profile: mode_groups must be strictly increasing");
  }
  if (atten_db_per_km.size() != static_cast<std::size_t>(cores))
    throw ConfigError("profile: atten_db_per_km needs one row per core");
  for (const auto& row : atten_db_per_km) {
    if (row.size() != mode_groups.size())
      throw ConfigError("profile: atten_db_per_km needs one entry per mode group");
    for (double v : row)
      if (v < 0.0) throw ConfigError("profile: negative attenuation");
  }
  if (intra_dmd_ps_per_km.size() != mode_groups.size())
    throw ConfigError("profile: intra_dmd_ps_per_km needs one entry per mode group");
  for (double v : intra_dmd_ps_per_km)
    if (v < 0.0) throw ConfigError("profile: negative DMD");
  if (dgd_ns_per_km < 0.0) throw ConfigError("profile: negative DGD");
  if (xt_intermg_db > 0.0 || xt_intercore_db > 0.0)
    throw ConfigError("profile: aggregate crosstalk must be expressed in negative dB");
  if (rayleigh_scatter_db_per_km < 0.0)
    throw ConfigError("profile: negative scatter rate");
  if (!(recapture_same > 0.0 && recapture_same < 1.0) ||
      !(recapture_cross > 0.0 && recapture_cross < 1.0))
    throw ConfigError("profile: recapture fractions must be in (0, 1)");
  if (!(fresnel_reflectance >= 0.0 && fresnel_reflectance < 1.0))
    throw ConfigError("profile: reflectance must be in [0, 1)");
  if (drift_rate_rad_per_s < 0.0) throw ConfigError("profile: negative drift rate");
  if (infiber_xt_db_per_km > 0.0)
    throw ConfigError("profile: in-fiber crosstalk must be expressed in negative dB");
}

int FiberProfile::mg_index(int group) const {
  for (std::size_t i = 0; i < mode_groups.size(); ++i)
    if (mode_groups[i] == group) return static_cast<int>(i);
  throw ConfigError("profile: mode group " + std::to_string(group) + " not configured");
}

double FiberProfile::mean_atten_db_per_km() const {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& row : atten_db_per_km)
    for (double v : row) {
      acc += v;
      ++n;
    }
  return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

FiberProfile FiberProfile::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("profile: bad json: ") + e.what());
  }
  FiberProfile p = default_profile();
  bool atten_given = false;
  bool dmd_given = false;
  try {
    for (const auto& [key, val] : j.items()) {
      if (key == "length_km") p.length_km = val.get<double>();
      else if (key == "cores") p.cores = val.get<int>();
      else if (key == "mode_groups") p.mode_groups = val.get<std::vector<int>>();
      else if (key == "atten_db_per_km") {
        p.atten_db_per_km = val.get<std::vector<std::vector<double>>>();
        atten_given = true;
      } else if (key == "dgd_ns_per_km") p.dgd_ns_per_km = val.get<double>();
      else if (key == "intra_dmd_ps_per_km") {
        p.intra_dmd_ps_per_km = val.get<std::vector<double>>();
        dmd_given = true;
      } else if (key == "xt_intermg_db") p.xt_intermg_db = val.get<double>();
      else if (key == "xt_intercore_db") p.xt_intercore_db = val.get<double>();
      else if (key == "rayleigh_scatter_db_per_km")
        p.rayleigh_scatter_db_per_km = val.get<double>();
      else if (key == "recapture_same") p.recapture_same = val.get<double>();
      else if (key == "recapture_cross") p.recapture_cross = val.get<double>();
      else if (key == "fresnel_reflectance") p.fresnel_reflectance = val.get<double>();
      else if (key == "drift_rate_rad_per_s") p.drift_rate_rad_per_s = val.get<double>();
      else if (key == "distributed_xt") p.distributed_xt = val.get<bool>();
      else if (key == "infiber_xt_db_per_km") p.infiber_xt_db_per_km = val.get<double>();
      else throw ConfigError("profile: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("profile: bad value: ") + e.what());
  }
  // A config that resizes the grid keeps the default rates unless it overrides them.
  if (!atten_given) {
    std::vector<double> row(p.mode_groups.size(), 0.32);
    const FiberProfile d = default_profile();
    for (std::size_t m = 0; m < p.mode_groups.size(); ++m) {
      const auto it = std::find(d.mode_groups.begin(), d.mode_groups.end(),
                                p.mode_groups[m]);
      if (it != d.mode_groups.end())
        row[m] = d.atten_db_per_km[0][it - d.mode_groups.begin()];
    }
    p.atten_db_per_km.assign(p.cores, row);
  }
  if (!dmd_given) p.intra_dmd_ps_per_km.assign(p.mode_groups.size(), 50.0);
  p.validate();
  return p;
}

std::string FiberProfile::to_json() const {
  nlohmann::json j;
  j["length_km"] = length_km;
  j["cores"] = cores;
  j["mode_groups"] = mode_groups;
  j["atten_db_per_km"] = atten_db_per_km;
  j["dgd_ns_per_km"] = dgd_ns_per_km;
  j["intra_dmd_ps_per_km"] = intra_dmd_ps_per_km;
  j["xt_intermg_db"] = xt_intermg_db;
  j["xt_intercore_db"] = xt_intercore_db;
  j["rayleigh_scatter_db_per_km"] = rayleigh_scatter_db_per_km;
  j["recapture_same"] = recapture_same;
  j["recapture_cross"] = recapture_cross;
  j["fresnel_reflectance"] = fresnel_reflectance;
  j["drift_rate_rad_per_s"] = drift_rate_rad_per_s;
  j["distributed_xt"] = distributed_xt;
  j["infiber_xt_db_per_km"] = infiber_xt_db_per_km;
  return j.dump(2);
}

double Channel::group_delay_ns(int mg) const {
  const int lowest = *std::min_element(profile.mode_groups.begin(),
                                       profile.mode_groups.end());
  profile.mg_index(mg);  // existence check
  return (mg - lowest) * profile.dgd_ns_per_km * profile.length_km;
}

double Channel::atten_db(const GroupKey& key) const {
  if (key.core < 1 || key.core > profile.cores)
    throw ConfigError("channel: core out of range");
  double db = profile.atten_db_per_km[key.core - 1][profile.mg_index(key.mg)] *
              profile.length_km;
  const auto it = insertion_loss_db.find(key);
  if (it != insertion_loss_db.end()) db += it->second;
  return db;
}

Channel build_channel(const FiberProfile& profile, uint64_t seed, bool reciprocal) {
  profile.validate();
  Channel ch;
  ch.profile = profile;
  ch.seed = seed;

  for (Direction dir : {Direction::Forward, Direction::Backward}) {
    for (int core = 1; core <= profile.cores; ++core) {
      for (int mg : profile.mode_groups) {
        const GroupKey key{core, mg, dir};
        IntraGroupChannel g;
        if (reciprocal && dir == Direction::Backward) {
          const IntraGroupChannel& fwd =
              ch.groups.at(GroupKey{core, mg, Direction::Forward});
          g.mixing = fwd.mixing.transpose();
          g.delays_ps = fwd.delays_ps;
        } else {
          Rng rng(substream(seed, 0xA1 + dir_int(dir), core, mg));
          g.mixing = haar_unitary(rng);
          g.delays_ps = draw_delays(
              rng, profile.intra_dmd_ps_per_km[profile.mg_index(mg)] *
                       profile.length_km);
        }
        g.drift_rate_rad_per_s = profile.drift_rate_rad_per_s;
        ch.groups.emplace(key, g);
      }
    }
  }

  // Inter-MG leakage: per-pair share c*w(|dl|), with c set so the aggregate leaked
  // from the worst (middle) group equals xt_intermg_db exactly.
  if (profile.xt_intermg_db > kXtOffDb && profile.mode_groups.size() > 1) {
    double worst = 0.0;
    for (int from : profile.mode_groups) {
      double s = 0.0;
      for (int to : profile.mode_groups)
        if (to != from) s += mg_weight(to - from);
      worst = std::max(worst, s);
    }
    const double c = std::pow(10.0, profile.xt_intermg_db / 10.0) / worst;
    for (Direction dir : {Direction::Forward, Direction::Backward}) {
      for (int core = 1; core <= profile.cores; ++core) {
        for (int to : profile.mode_groups) {
          for (int from : profile.mode_groups) {
            if (to == from) continue;
            Rng rng(substream(seed, 0xB1 + dir_int(dir), core,
                              static_cast<uint64_t>(to) * 64 + from));
            // Scaled unitary: every probe leaks exactly the configured share.
            const Eigen::Matrix4cd block =
                std::sqrt(c * mg_weight(to - from)) * haar_unitary(rng);
            ch.xt_blocks.emplace(
                std::make_pair(GroupKey{core, to, dir}, GroupKey{core, from, dir}),
                block);
          }
        }
      }
    }
  }

  // Inter-core leakage: same mode group, split evenly across the other cores.
  if (profile.xt_intercore_db > kXtOffDb && profile.cores > 1) {
    const double share =
        std::pow(10.0, profile.xt_intercore_db / 10.0) / (profile.cores - 1);
    for (Direction dir : {Direction::Forward, Direction::Backward}) {
      for (int mg : profile.mode_groups) {
        for (int to = 1; to <= profile.cores; ++to) {
          for (int from = 1; from <= profile.cores; ++from) {
            if (to == from) continue;
            Rng rng(substream(seed, 0xC1 + dir_int(dir),
                              static_cast<uint64_t>(to) * 256 + from, mg));
            ch.xt_blocks.emplace(
                std::make_pair(GroupKey{to, mg, dir}, GroupKey{from, mg, dir}),
                std::sqrt(share) * haar_unitary(rng));
          }
        }
      }
    }
  }
  return ch;
}

void advance_drift(Channel& ch, double dt_s, Rng& stream) {
  if (dt_s < 0.0) throw ConfigError("drift: negative dt");
  for (auto& [key, g] : ch.groups) {
    if (g.drift_rate_rad_per_s <= 0.0 || dt_s == 0.0) continue;
    const double eps = g.drift_rate_rad_per_s * dt_s;
    Eigen::Matrix4cd a;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) a(i, j) = stream.cgaussian();
    Eigen::Matrix4cd h = 0.5 * (a + a.adjoint());
    h /= h.norm();  // unit Frobenius
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(h);
    Eigen::Vector4cd phases;
    for (int i = 0; i < 4; ++i)
      phases(i) = std::exp(cplx(0.0, eps * es.eigenvalues()(i)));
    const Eigen::Matrix4cd step =
        es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
    Eigen::Matrix4cd u = g.mixing * step;
    // polar projection back onto the unitary group
    Eigen::JacobiSVD<Eigen::Matrix4cd> svd(
        u, Eigen::ComputeFullU | Eigen::ComputeFullV);
    g.mixing = svd.matrixU() * svd.matrixV().adjoint();
  }
}

namespace {

struct GroupSpectra {
  std::array<std::vector<cplx>, 4> bins;
};

void add_block_times(std::array<std::vector<cplx>, 4>& acc,
                     const Eigen::Matrix4cd& block, const GroupSpectra& src) {
  const std::size_t n = src.bins[0].size();
  for (std::size_t k = 0; k < n; ++k) {
    const cplx x0 = src.bins[0][k], x1 = src.bins[1][k], x2 = src.bins[2][k],
               x3 = src.bins[3][k];
    for (int i = 0; i < 4; ++i)
      acc[i][k] +=
          block(i, 0) * x0 + block(i, 1) * x1 + block(i, 2) * x2 + block(i, 3) * x3;
  }
}

}  // namespace

std::vector<ModeField> propagate(const Channel& ch, const std::vector<ModeField>& input) {
  if (input.empty()) throw ShapeError("propagate: no input");
  const double fs = input.front().second.sample_rate_hz;
  const std::size_t n = input.front().second.samples.size();
  if (fs <= 0.0 || n == 0) throw ShapeError("propagate: empty envelope");
  const Direction dir = input.front().first.dir;

  std::map<GroupKey, std::array<const std::vector<cplx>*, 4>> launched;
  for (const auto& [id, env] : input) {
    if (env.sample_rate_hz != fs || env.samples.size() != n)
      throw ShapeError("propagate: inputs must share sample rate and length");
    if (id.dir != dir) throw ShapeError("propagate: mixed directions in one call");
    if (id.core < 1 || id.core > ch.profile.cores)
      throw ConfigError("propagate: core out of range");
    ch.profile.mg_index(id.group());
    auto& slots = launched[GroupKey{id.core, id.group(), id.dir}];
    if (slots[id.slot()] != nullptr)
      throw ShapeError("propagate: duplicate mode " + id.str());
    slots[id.slot()] = &env.samples;
  }
  for (const auto& [key, slots] : launched)
    for (const auto* s : slots)
      if (s == nullptr) throw ShapeError("propagate: incomplete 4-mode group");

  // Delay margin: worst group delay plus DMD plus slack.
  const int lowest =
      *std::min_element(ch.profile.mode_groups.begin(), ch.profile.mode_groups.end());
  const int highest =
      *std::max_element(ch.profile.mode_groups.begin(), ch.profile.mode_groups.end());
  double max_delay_s =
      (highest - lowest) * ch.profile.dgd_ns_per_km * ch.profile.length_km * 1e-9;
  double max_dmd_s = 0.0;
  for (double v : ch.profile.intra_dmd_ps_per_km)
    max_dmd_s = std::max(max_dmd_s, v * ch.profile.length_km * 1e-12);
  const bool distributed = ch.profile.distributed_xt &&
                           ch.profile.infiber_xt_db_per_km > kXtOffDb &&
                           ch.profile.mode_groups.size() > 1;
  // Distributed sections can need a common shift so no leaked path has a negative
  // delay; fold it into the margin.
  const double common_shift_s = distributed ? max_delay_s : 0.0;
  const std::size_t margin =
      static_cast<std::size_t>(
          std::ceil((max_delay_s + max_dmd_s + common_shift_s) * fs)) +
      16;
  const std::size_t n_out = n + margin;
  const std::size_t nfft = next_fast_len(n_out);

  // Per-group post-fiber spectra (attenuation, group delay, DMD, unitary mixing).
  std::map<GroupKey, GroupSpectra> post;
  for (const auto& [key, slots] : launched) {
    const IntraGroupChannel& g = ch.groups.at(key);
    const double amp = std::pow(10.0, -ch.atten_db(key) / 20.0);
    const double gd_s = ch.group_delay_ns(key.mg) * 1e-9 + common_shift_s;
    GroupSpectra x;
    for (int j = 0; j < 4; ++j) {
      x.bins[j].assign(nfft, cplx(0.0, 0.0));
      std::copy(slots[j]->begin(), slots[j]->end(), x.bins[j].begin());
      fft_inplace(x.bins[j], false);
      const double tau = gd_s + g.delays_ps[j] * 1e-12;
      for (std::size_t k = 0; k < nfft; ++k) {
        const double fk =
            (k <= nfft / 2 ? static_cast<double>(k)
                           : static_cast<double>(k) - static_cast<double>(nfft)) *
            fs / static_cast<double>(nfft);
        x.bins[j][k] *= std::exp(cplx(0.0, -2.0 * M_PI * fk * tau));
      }
    }
    GroupSpectra y;
    for (int i = 0; i < 4; ++i) y.bins[i].assign(nfft, cplx(0.0, 0.0));
    add_block_times(y.bins, amp * g.mixing, x);
    post.emplace(key, std::move(y));
  }

  // Receive side: own field plus demux-side leakage from every other launched group.
  std::vector<ModeField> out;
  for (int core = 1; core <= ch.profile.cores; ++core) {
    for (int mg : ch.profile.mode_groups) {
      const GroupKey key{core, mg, dir};
      std::array<std::vector<cplx>, 4> acc;
      for (int i = 0; i < 4; ++i) acc[i].assign(nfft, cplx(0.0, 0.0));
      if (const auto it = post.find(key); it != post.end()) {
        for (int i = 0; i < 4; ++i) acc[i] = it->second.bins[i];
      }
      for (const auto& [from, spectra] : post) {
        if (from == key) continue;
        const auto bit = ch.xt_blocks.find(std::make_pair(key, from));
        if (bit != ch.xt_blocks.end()) {
          add_block_times(acc, bit->second, spectra);
        }
      }
      if (distributed) {
        // Five lumped in-span sections; each leaked path keeps the source group's
        // delay up to the section and the victim group's delay after it.
        const double total =
            ch.profile.length_km * std::pow(10.0, ch.profile.infiber_xt_db_per_km / 10.0);
        double worst = 0.0;
        for (int f : ch.profile.mode_groups) {
          double s = 0.0;
          for (int t : ch.profile.mode_groups)
            if (t != f) s += mg_weight(t - f);
          worst = std::max(worst, s);
        }
        for (const auto& [from, spectra] : post) {
          if (from.core != core || from.mg == mg) continue;
          const double share =
              total / worst * mg_weight(mg - from.mg) / 5.0;
          for (int sec = 0; sec < 5; ++sec) {
            const double frac = (sec + 0.5) / 5.0;
            Rng rng(substream(ch.seed, 0xD1 + dir_int(dir) * 8 + sec, core,
                              static_cast<uint64_t>(mg) * 64 + from.mg));
            const Eigen::Matrix4cd block = std::sqrt(share) * haar_unitary(rng);
            // relative to the source's own full-length delay
            const double dtau = (1.0 - frac) * (ch.group_delay_ns(mg) -
                                                ch.group_delay_ns(from.mg)) *
                                1e-9;
            GroupSpectra shifted;
            for (int j = 0; j < 4; ++j) {
              shifted.bins[j] = spectra.bins[j];
              for (std::size_t k = 0; k < nfft; ++k) {
                const double fk = (k <= nfft / 2
                                       ? static_cast<double>(k)
                                       : static_cast<double>(k) -
                                             static_cast<double>(nfft)) *
                                  fs / static_cast<double>(nfft);
                shifted.bins[j][k] *= std::exp(cplx(0.0, -2.0 * M_PI * fk * dtau));
              }
            }
            add_block_times(acc, block, shifted);
          }
        }
      }
      for (int slot = 0; slot < 4; ++slot) {
        fft_inplace(acc[slot], true);
        ModeId id;
        id.core = core;
        id.charge = slot < 2 ? mg : -mg;
        id.pol = (slot % 2 == 0) ? Polarization::R : Polarization::L;
        id.dir = dir;
        ComplexEnvelope env;
        env.sample_rate_hz = fs;
        env.samples.assign(acc[slot].begin(),
                           acc[slot].begin() + static_cast<long>(n_out));
        out.emplace_back(id, std::move(env));
      }
    }
  }
  return out;
}

double CrosstalkReport::aggregate_intermg_db(const GroupKey& from) const {
  double s = 0.0;
  for (const auto& [pair, ratio] : pair_ratio)
    if (pair.second == from && pair.first.core == from.core &&
        pair.first.mg != from.mg)
      s += ratio;
  return s > 0.0 ? 10.0 * std::log10(s) : -std::numeric_limits<double>::infinity();
}

double CrosstalkReport::aggregate_intercore_db(const GroupKey& from) const {
  double s = 0.0;
  for (const auto& [pair, ratio] : pair_ratio)
    if (pair.second == from && pair.first.core != from.core) s += ratio;
  return s > 0.0 ? 10.0 * std::log10(s) : -std::numeric_limits<double>::infinity();
}

double CrosstalkReport::worst_intermg_db() const {
  double w = -std::numeric_limits<double>::infinity();
  for (const auto& g : launched) w = std::max(w, aggregate_intermg_db(g));
  return w;
}

CrosstalkReport measure_crosstalk(const Channel& ch, Direction dir) {
  CrosstalkReport report;
  for (const auto& [key, g] : ch.groups)
    if (key.dir == dir) report.launched.push_back(key);

  for (const GroupKey& from : report.launched) {
    double own = 0.0;
    std::map<GroupKey, double> foreign;
    for (int probe = 0; probe < 4; ++probe) {
      std::vector<ModeField> input;
      for (int slot = 0; slot < 4; ++slot) {
        ModeId id;
        id.core = from.core;
        id.charge = slot < 2 ? from.mg : -from.mg;
        id.pol = (slot % 2 == 0) ? Polarization::R : Polarization::L;
        id.dir = dir;
        ComplexEnvelope env;
        env.sample_rate_hz = 24e9;
        env.samples.assign(8, cplx(0.0, 0.0));
        if (slot == probe) env.samples[0] = cplx(1.0, 0.0);
        input.emplace_back(id, env);
      }
      const auto rx = propagate(ch, input);
      for (const auto& [id, env] : rx) {
        double e = 0.0;
        for (const auto& v : env.samples) e += std::norm(v);
        const GroupKey to{id.core, id.group(), id.dir};
        if (to == from) own += e;
        else foreign[to] += e;
      }
    }
    for (const auto& [to, e] : foreign)
      if (e > 0.0 && own > 0.0) report.pair_ratio[{to, from}] = e / own;
  }
  return report;
}

ComplexEnvelope add_optical_noise(const ComplexEnvelope& sig, double osnr_db,
                                  double ref_bw_hz, Rng& rng) {
  if (std::isinf(osnr_db) && osnr_db > 0.0) return sig;
  if (!std::isfinite(osnr_db)) throw ConfigError("noise: bad OSNR");
  if (!(ref_bw_hz > 0.0)) throw ConfigError("noise: reference bandwidth must be positive");
  if (sig.samples.empty() || sig.sample_rate_hz <= 0.0)
    throw ShapeError("noise: empty signal");
  const double p_sig = mean_power(sig.samples);
  // Noise power over the full simulated band so that the slice falling in ref_bw
  // leaves exactly the requested ratio.
  const double p_noise = p_sig * (sig.sample_rate_hz / ref_bw_hz) /
                         std::pow(10.0, osnr_db / 10.0);
  const double amp = std::sqrt(p_noise);
  ComplexEnvelope out = sig;
  for (auto& v : out.samples) v += amp * rng.cgaussian();
  return out;
}

ImpulseResponse impulse_response(const Channel& ch, int core,
                                 const std::vector<int>& probe_mgs,
                                 double sample_rate_hz, Direction dir) {
  if (probe_mgs.empty()) throw ConfigError("impulse: no probe groups");
  std::vector<ModeField> input;
  for (int mg : probe_mgs) {
    ch.profile.mg_index(mg);
    for (int slot = 0; slot < 4; ++slot) {
      ModeId id;
      id.core = core;
      id.charge = slot < 2 ? mg : -mg;
      id.pol = (slot % 2 == 0) ? Polarization::R : Polarization::L;
      id.dir = dir;
      ComplexEnvelope env;
      env.sample_rate_hz = sample_rate_hz;
      env.samples.assign(16, cplx(0.0, 0.0));
      env.samples[0] = cplx(0.5, 0.0);  // equal split across the group's modes
      input.emplace_back(id, env);
    }
  }
  const auto rx = propagate(ch, input);
  ImpulseResponse ir;
  ir.sample_rate_hz = sample_rate_hz;
  for (const auto& [id, env] : rx) {
    if (id.core != core) continue;
    if (ir.power.empty()) ir.power.assign(env.samples.size(), 0.0);
    for (std::size_t i = 0; i < env.samples.size(); ++i)
      ir.power[i] += std::norm(env.samples[i]);
  }
  return ir;
}

}  // namespace oamsdm
