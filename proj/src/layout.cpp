#include "shaperl/layout.hpp"

#include <cmath>

#include "shaperl/errors.hpp"
#include "shaperl/rng.hpp"

namespace shaperl {

namespace {

// Walks the rectangle perimeter (inset into the vessel by `inset`) and
// returns the point at parameter t in [0, 1) plus the inward-facing
// tangent angle at that point.
struct PerimeterPoint {
  double r, z;
  double tangent;
};

PerimeterPoint perimeter_point(const VesselGeom& v, double inset, double t) {
  const double r0 = v.r_lo + inset, r1 = v.r_hi - inset;
  const double z0 = v.z_lo + inset, z1 = v.z_hi - inset;
  const double w = r1 - r0, h = z1 - z0;
  const double per = 2.0 * (w + h);
  double s = t * per;
  if (s < w) return {r0 + s, z0, 0.0};                       // bottom, ->
  s -= w;
  if (s < h) return {r1, z0 + s, M_PI / 2.0};                // outer, ^
  s -= h;
  if (s < w) return {r1 - s, z1, M_PI};                      // top, <-
  s -= w;
  return {r0, z1 - s, -M_PI / 2.0};                          // inner, v
}

}  // namespace

SensorLayout make_layout(const LayoutConfig& cfg) {
  if (cfg.n_probes < 1 || cfg.n_loops < 1 || cfg.n_coils < 2)
    throw ValidationError("layout: need at least 1 probe, 1 loop, 2 coils");
  if (!(cfg.vessel.r_lo > 0.0))
    throw ValidationError("layout: vessel r_lo must be > 0");
  if (!(cfg.vessel.r_hi > cfg.vessel.r_lo) || !(cfg.vessel.z_hi > cfg.vessel.z_lo))
    throw ValidationError("layout: vessel extents must be ordered");

  Rng rng = substream(cfg.seed, "layout");
  SensorLayout out;
  out.vessel = cfg.vessel;

  // Pickup probes: evenly spaced ring inset 6 cm from the wall, measuring
  // roughly along the wall tangent with a little seeded spread.
  out.probes.reserve(cfg.n_probes);
  for (int i = 0; i < cfg.n_probes; ++i) {
    const double t = (i + 0.5) / cfg.n_probes;
    const auto pp = perimeter_point(cfg.vessel, 0.06, t);
    SensorLayout::Probe p;
    p.r = pp.r + rng.uniform(-5e-3, 5e-3);
    p.z = pp.z + rng.uniform(-5e-3, 5e-3);
    p.angle = pp.tangent + rng.uniform(-0.2, 0.2);
    out.probes.push_back(p);
  }

  // Flux loops: a second ring, inset 10 cm, offset half a slot so loop and
  // probe positions interleave.
  out.loops.reserve(cfg.n_loops);
  for (int i = 0; i < cfg.n_loops; ++i) {
    const double t = static_cast<double>(i) / cfg.n_loops;
    const auto pp = perimeter_point(cfg.vessel, 0.10, t);
    SensorLayout::Loop l;
    l.r = pp.r + rng.uniform(-5e-3, 5e-3);
    l.z = pp.z + rng.uniform(-5e-3, 5e-3);
    out.loops.push_back(l);
  }

  // Shaping coils sit on the vessel boundary itself.
  out.coils.reserve(cfg.n_coils);
  for (int i = 0; i < cfg.n_coils; ++i) {
    const double t = (i + 0.25) / cfg.n_coils;
    const auto pp = perimeter_point(cfg.vessel, 0.0, t);
    SensorLayout::Coil c;
    c.r = pp.r;
    c.z = pp.z;
    c.turns = std::floor(rng.uniform(40.0, 60.0));
    c.resistance = 0.05 * (1.0 + rng.uniform(-0.1, 0.1));
    c.inductance = 5e-3 * (1.0 + rng.uniform(-0.1, 0.1));
    out.coils.push_back(c);
  }

  validate_layout(out);
  return out;
}

void validate_layout(const SensorLayout& layout) {
  const auto& v = layout.vessel;
  auto inside = [&](double r, double z) {
    return r >= v.r_lo && r <= v.r_hi && z >= v.z_lo && z <= v.z_hi;
  };
  for (const auto& p : layout.probes)
    if (!inside(p.r, p.z))
      throw ValidationError("layout: probe outside the vessel boundary");
  for (const auto& l : layout.loops)
    if (!inside(l.r, l.z))
      throw ValidationError("layout: flux loop outside the vessel boundary");
  for (const auto& c : layout.coils) {
    if (!inside(c.r, c.z))
      throw ValidationError("layout: coil outside the vessel boundary");
    if (!(c.resistance > 0.0) || !(c.inductance > 0.0) || !(c.turns > 0.0))
      throw ValidationError("layout: coil circuit parameters must be positive");
  }
}

ObsSpans obs_spans(const LayoutConfig& cfg) {
  ObsSpans s;
  s.n_probes = cfg.n_probes;
  s.n_loops = cfg.n_loops;
  s.n_coils = cfg.n_coils;
  return s;
}

ChannelType ObsSpans::type_of(int channel) const {
  if (channel < 0 || channel >= total())
    throw ValidationError("obs spans: channel index out of range");
  if (channel < loops_begin()) return ChannelType::kProbe;
  if (channel < coils_begin()) return ChannelType::kLoop;
  if (channel < ip_index()) return ChannelType::kCoil;
  if (channel == ip_index()) return ChannelType::kPlasmaCurrent;
  return ChannelType::kGoal;
}

int ObsSpans::local_index(int channel) const {
  switch (type_of(channel)) {
    case ChannelType::kProbe: return channel - probes_begin();
    case ChannelType::kLoop: return channel - loops_begin();
    case ChannelType::kCoil: return channel - coils_begin();
    case ChannelType::kPlasmaCurrent: return 0;
    case ChannelType::kGoal: return channel - goal_begin();
  }
  return -1;
}

void to_json(nlohmann::json& j, const SensorLayout& layout) {
  j = nlohmann::json::object();
  j["vessel"] = {{"r_lo", layout.vessel.r_lo},
                 {"r_hi", layout.vessel.r_hi},
                 {"z_lo", layout.vessel.z_lo},
                 {"z_hi", layout.vessel.z_hi}};
  auto& probes = j["probes"] = nlohmann::json::array();
  for (const auto& p : layout.probes)
    probes.push_back({{"r", p.r}, {"z", p.z}, {"angle", p.angle}});
  auto& loops = j["loops"] = nlohmann::json::array();
  for (const auto& l : layout.loops) loops.push_back({{"r", l.r}, {"z", l.z}});
  auto& coils = j["coils"] = nlohmann::json::array();
  for (const auto& c : layout.coils)
    coils.push_back({{"r", c.r},
                     {"z", c.z},
                     {"turns", c.turns},
                     {"resistance", c.resistance},
                     {"inductance", c.inductance}});
}

void from_json(const nlohmann::json& j, SensorLayout& layout) {
  layout = SensorLayout{};
  const auto& v = j.at("vessel");
  layout.vessel.r_lo = v.at("r_lo").get<double>();
  layout.vessel.r_hi = v.at("r_hi").get<double>();
  layout.vessel.z_lo = v.at("z_lo").get<double>();
  layout.vessel.z_hi = v.at("z_hi").get<double>();
  for (const auto& p : j.at("probes"))
    layout.probes.push_back({p.at("r").get<double>(), p.at("z").get<double>(),
                             p.at("angle").get<double>()});
  for (const auto& l : j.at("loops"))
    layout.loops.push_back({l.at("r").get<double>(), l.at("z").get<double>()});
  for (const auto& c : j.at("coils"))
    layout.coils.push_back({c.at("r").get<double>(), c.at("z").get<double>(),
                            c.at("turns").get<double>(),
                            c.at("resistance").get<double>(),
                            c.at("inductance").get<double>()});
  validate_layout(layout);
}

void to_json(nlohmann::json& j, const VesselGeom& v) {
  j = {{"r_lo", v.r_lo}, {"r_hi", v.r_hi}, {"z_lo", v.z_lo}, {"z_hi", v.z_hi}};
}

void from_json(const nlohmann::json& j, VesselGeom& v) {
  v.r_lo = j.at("r_lo").get<double>();
  v.r_hi = j.at("r_hi").get<double>();
  v.z_lo = j.at("z_lo").get<double>();
  v.z_hi = j.at("z_hi").get<double>();
}

void to_json(nlohmann::json& j, const LayoutConfig& c) {
  j = nlohmann::json::object();
  j["n_probes"] = c.n_probes;
  j["n_loops"] = c.n_loops;
  j["n_coils"] = c.n_coils;
  j["seed"] = c.seed;
  j["vessel"] = c.vessel;
}

void from_json(const nlohmann::json& j, LayoutConfig& c) {
  c.n_probes = j.at("n_probes").get<int>();
  c.n_loops = j.at("n_loops").get<int>();
  c.n_coils = j.at("n_coils").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.vessel = j.at("vessel").get<VesselGeom>();
}

}  // namespace shaperl
