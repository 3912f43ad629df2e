#include "shaperl/env.hpp"

#include <cmath>
#include <cstdio>

#include "shaperl/errors.hpp"
#include "shaperl/filament.hpp"

namespace shaperl {

namespace {

// Indices of the meter-valued parameters in goal_to_array order; the rest
// (delta_u and the four xi) are dimensionless.
constexpr int kMeterParams[] = {0, 1, 2, 3, 5, 6};

bool is_meter_param(int i) {
  for (int m : kMeterParams)
    if (m == i) return true;
  return false;
}

}  // namespace

ShapeEnvelope default_envelope() {
  ShapeEnvelope e;
  // Order: R_c, Z_c, a, z_max, delta_u, R_x, Z_x, xi_TI, xi_TO, xi_BI, xi_BO.
  e.lo = {1.55, -0.15, 0.50, 0.70, 0.10, 1.30, -1.25, -0.3, -0.3, -0.3, -0.3};
  e.hi = {1.85, 0.15, 0.65, 1.10, 0.70, 1.60, -0.95, 0.5, 0.5, 0.5, 0.5};
  return e;
}

ShapeGoal envelope_midpoint(const ShapeEnvelope& env) {
  std::array<double, kGoalDim> v{};
  for (int i = 0; i < kGoalDim; ++i) v[i] = 0.5 * (env.lo[i] + env.hi[i]);
  return goal_from_array(v);
}

ShapeGoal clamp_to_envelope(const ShapeGoal& g, const ShapeEnvelope& env,
                            double margin) {
  auto v = goal_to_array(g);
  for (int i = 0; i < kGoalDim; ++i) {
    const double lo = env.lo[i] + margin;
    const double hi = env.hi[i] - margin;
    v[i] = std::min(std::max(v[i], lo), hi);
  }
  return goal_from_array(v);
}

void validate_envelope(const ShapeEnvelope& env, double margin) {
  for (int i = 0; i < kGoalDim; ++i) {
    if (!(std::isfinite(env.lo[i]) && std::isfinite(env.hi[i])))
      throw ValidationError("envelope: bounds must be finite");
    if (!(env.hi[i] - env.lo[i] >= 2.0 * margin))
      throw ValidationError("envelope: bounds must leave room for the clamp margin");
  }
  // The whole shrunken box must contain only valid goals; with an axis-
  // aligned box it is enough to check the adversarial corners.
  const double m = margin;
  if (!(env.lo[0] + m - (env.hi[2] - m) > 0.0))
    throw ValidationError("envelope: R_c - a can reach the axis");
  if (!(env.lo[3] + m > env.hi[1] - m))
    throw ValidationError("envelope: z_max can fall below Z_c");
  if (!(env.lo[1] + m - (env.hi[6] - m) >= 1e-3))
    throw ValidationError("envelope: Z_c - Z_x can shrink below 1 mm");
  for (int i = 7; i < kGoalDim; ++i) {
    if (env.lo[i] < -1.0 || env.hi[i] > 1.0)
      throw ValidationError("envelope: squareness bounds must stay in [-1, 1]");
  }
  if (!(env.lo[2] + m > 0.0))
    throw ValidationError("envelope: minor radius can reach zero");
}

SurrogateEnv::SurrogateEnv(EnvConfig cfg) : cfg_(std::move(cfg)) {
  if (!(cfg_.dt > 0.0)) throw ValidationError("env: dt must be > 0");
  if (cfg_.episode_len < 1) throw ValidationError("env: episode_len must be >= 1");
  if (cfg_.resample_period < 1 || cfg_.resample_period > cfg_.episode_len)
    throw ValidationError("env: resample_period must be in [1, episode_len]");
  if (!(cfg_.tau_p >= 10.0 * cfg_.dt))
    throw ValidationError("env: tau_p must be >= 10 dt for a resolvable lag");
  if (!(cfg_.bus_nominal > 0.0) || cfg_.bus_jitter < 0.0)
    throw ValidationError("env: bus voltage settings invalid");
  if (!(cfg_.ip_nominal > 0.0) || !(cfg_.ip_band >= 0.0 && cfg_.ip_band < 1.0))
    throw ValidationError("env: plasma current settings invalid");
  validate_reward_config(cfg_.reward);
  validate_envelope(cfg_.envelope, cfg_.clamp_margin);

  const int n_single = cfg_.n_act - cfg_.n_paired;
  if (cfg_.n_paired < 0 || n_single < 0 ||
      n_single + 2 * cfg_.n_paired != cfg_.layout.n_coils)
    throw ValidationError(
        "env: actuator wiring must satisfy (n_act - n_paired) + 2*n_paired == n_coils");

  layout_ = make_layout(cfg_.layout);
  spans_ = obs_spans(cfg_.layout);
  for (const auto& c : layout_.coils) {
    if (!(c.inductance / c.resistance >= 10.0 * cfg_.dt))
      throw ValidationError("env: coil L/R must be >= 10 dt for a stable circuit step");
  }

  // Plasma centroid must stay well clear of every sensor.
  const auto& v = layout_.vessel;
  const double wall_margin = 0.3;
  if (cfg_.envelope.lo[0] - v.r_lo < wall_margin ||
      v.r_hi - cfg_.envelope.hi[0] < wall_margin ||
      cfg_.envelope.lo[1] - v.z_lo < wall_margin ||
      v.z_hi - cfg_.envelope.hi[1] < wall_margin)
    throw ValidationError("env: centroid envelope too close to the vessel wall");

  y_ref_ = envelope_midpoint(cfg_.envelope);
  build_response();
  precompute_greens();
}

void SurrogateEnv::build_response() {
  const int nc = cfg_.layout.n_coils;
  Rng rng = substream(cfg_.response_seed, "response");

  // Random directions per parameter, normalized per row, then scaled by a
  // per-parameter physical gain.  Row-normalized version used for the
  // conditioning check.
  Matrix unit(kGoalDim, nc);
  for (int i = 0; i < kGoalDim; ++i) {
    double norm2 = 0.0;
    for (int j = 0; j < nc; ++j) {
      unit(i, j) = rng.normal();
      norm2 += unit(i, j) * unit(i, j);
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (int j = 0; j < nc; ++j) unit(i, j) *= inv;
  }
  response_min_sv_ = min_singular_value(unit);
  if (!(response_min_sv_ > 1e-6))
    throw ValidationError(
        "env: shape response is rank deficient (smallest singular value <= 1e-6)");

  response_ = unit;
  for (int i = 0; i < kGoalDim; ++i) {
    const double gain = is_meter_param(i) ? cfg_.pos_gain : cfg_.dimless_gain;
    for (int j = 0; j < nc; ++j) response_(i, j) *= gain;
  }

  // Actuator patch: leading actuators drive one coil each, trailing ones a
  // consecutive coil pair, so columns have disjoint support (full column
  // rank by construction).
  const int n_single = cfg_.n_act - cfg_.n_paired;
  patch_ = Matrix(nc, cfg_.n_act);
  for (int a = 0; a < n_single; ++a) patch_(a, a) = 1.0;
  for (int p = 0; p < cfg_.n_paired; ++p) {
    patch_(n_single + 2 * p, n_single + p) = 1.0;
    patch_(n_single + 2 * p + 1, n_single + p) = 1.0;
  }
}

void SurrogateEnv::precompute_greens() {
  const int nc = cfg_.layout.n_coils;
  g_probe_ = Matrix(spans_.n_probes, nc);
  g_loop_ = Matrix(spans_.n_loops, nc);
  for (int c = 0; c < nc; ++c) {
    const auto& coil = layout_.coils[c];
    auto psi = [&](double r, double z) {
      return coil.turns * filament_flux(coil.r, coil.z, r, z);
    };
    for (int p = 0; p < spans_.n_probes; ++p) {
      const auto& probe = layout_.probes[p];
      const auto f = field_from_flux(psi, probe.r, probe.z);
      g_probe_(p, c) = std::cos(probe.angle) * f.br + std::sin(probe.angle) * f.bz;
    }
    for (int l = 0; l < spans_.n_loops; ++l) {
      const auto& loop = layout_.loops[l];
      g_loop_(l, c) = psi(loop.r, loop.z);
    }
  }
}

double SurrogateEnv::plasma_probe_reading(int probe_idx, double rc,
                                          double zc) const {
  const auto& probe = layout_.probes[probe_idx];
  auto psi = [&](double r, double z) { return filament_flux(rc, zc, r, z); };
  const auto f = field_from_flux(psi, probe.r, probe.z);
  return std::cos(probe.angle) * f.br + std::sin(probe.angle) * f.bz;
}

std::vector<double> SurrogateEnv::init_currents(const ShapeGoal& g) const {
  validate_goal(g);
  const auto want = goal_to_array(g);
  const auto ref = goal_to_array(y_ref_);
  std::vector<double> dy(kGoalDim);
  for (int i = 0; i < kGoalDim; ++i) dy[i] = want[i] - ref[i];
  return lstsq_solve(response_, dy);
}

EnvState SurrogateEnv::reset(const std::vector<ShapeGoal>& dataset,
                             Rng& rng) const {
  if (dataset.empty()) throw ValidationError("env reset: dataset is empty");
  const auto& init = dataset[rng.uniform_int(dataset.size())];
  const auto& target = dataset[rng.uniform_int(dataset.size())];
  const double ip =
      cfg_.ip_nominal * (1.0 + cfg_.ip_band * rng.uniform(-1.0, 1.0));
  const double bus = cfg_.bus_nominal + cfg_.bus_jitter * rng.uniform(-1.0, 1.0);
  return reset_to(init, target, ip, bus);
}

EnvState SurrogateEnv::reset_to(const ShapeGoal& init_shape,
                                const ShapeGoal& target, double ip,
                                double bus) const {
  validate_goal(init_shape);
  validate_goal(target);
  if (!(ip > 0.0) || !(bus > 0.0))
    throw ValidationError("env reset: ip and bus must be positive");
  EnvState s;
  s.shape = clamp_to_envelope(init_shape, cfg_.envelope, cfg_.clamp_margin);
  s.target = target;
  s.coil_currents = init_currents(s.shape);
  s.ip = ip;
  s.bus = bus;
  s.step_index = 0;
  s.done = false;
  s.episode_start_dshape =
      pivot_distance_mean(pivot_points(s.shape), pivot_points(s.target));
  return s;
}

std::vector<double> SurrogateEnv::observe(const EnvState& s,
                                          Rng* noise_rng) const {
  std::vector<double> obs(spans_.total(), 0.0);
  const double rc = s.shape.R_c, zc = s.shape.Z_c;
  // Probes and loops: coil contribution through the precomputed response
  // plus the moving plasma filament.
  for (int p = 0; p < spans_.n_probes; ++p) {
    double v = 0.0;
    const double* g = g_probe_.row(p);
    for (int c = 0; c < spans_.n_coils; ++c) v += g[c] * s.coil_currents[c];
    v += s.ip * plasma_probe_reading(p, rc, zc);
    obs[spans_.probes_begin() + p] = v;
  }
  for (int l = 0; l < spans_.n_loops; ++l) {
    double v = 0.0;
    const double* g = g_loop_.row(l);
    for (int c = 0; c < spans_.n_coils; ++c) v += g[c] * s.coil_currents[c];
    const auto& loop = layout_.loops[l];
    v += s.ip * filament_flux(rc, zc, loop.r, loop.z);
    obs[spans_.loops_begin() + l] = v;
  }
  for (int c = 0; c < spans_.n_coils; ++c)
    obs[spans_.coils_begin() + c] = s.coil_currents[c];
  obs[spans_.ip_index()] = s.ip;
  refresh_goal(obs, s);
  if (noise_rng != nullptr)
    add_observation_noise(obs, cfg_.noise, spans_, *noise_rng);
  return obs;
}

void SurrogateEnv::refresh_goal(std::span<double> obs, const EnvState& s) const {
  if (static_cast<int>(obs.size()) != spans_.total())
    throw ValidationError("refresh_goal: observation length mismatch");
  const auto goal = goal_to_array(s.target);
  for (int i = 0; i < kGoalDim; ++i) obs[spans_.goal_begin() + i] = goal[i];
}

StepResult SurrogateEnv::step(EnvState& s, std::span<const double> action,
                              Rng& noise_rng) const {
  if (s.done) throw ValidationError("env step: episode already finished");
  if (static_cast<int>(action.size()) != cfg_.n_act)
    throw ValidationError("env step: action dimension mismatch");
  for (double a : action) {
    if (!std::isfinite(a) || std::abs(a) > 1.0 + 1e-9)
      throw ValidationError("env step: action components must be finite in [-1, 1]");
  }

  // (1) actuator commands -> coil terminal voltages
  std::vector<double> volts(cfg_.layout.n_coils, 0.0);
  for (int c = 0; c < cfg_.layout.n_coils; ++c) {
    const double* row = patch_.row(c);
    double v = 0.0;
    for (int a = 0; a < cfg_.n_act; ++a) v += row[a] * action[a];
    volts[c] = v * s.bus;
  }

  // (2) circuit step: L dI/dt = V - R I (explicit Euler)
  for (int c = 0; c < cfg_.layout.n_coils; ++c) {
    const auto& coil = layout_.coils[c];
    s.coil_currents[c] +=
        cfg_.dt / coil.inductance * (volts[c] - coil.resistance * s.coil_currents[c]);
  }

  // (3) shape relaxation toward the equilibrium of the new currents
  const auto ref = goal_to_array(y_ref_);
  const auto eq_delta = matvec(response_, s.coil_currents);
  auto y = goal_to_array(s.shape);
  const double k = cfg_.dt / cfg_.tau_p;
  for (int i = 0; i < kGoalDim; ++i) {
    const double y_eq = ref[i] + eq_delta[i];
    y[i] += k * (y_eq - y[i]);
  }
  s.shape = clamp_to_envelope(goal_from_array(y), cfg_.envelope, cfg_.clamp_margin);

  for (double i_c : s.coil_currents) {
    if (!std::isfinite(i_c)) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "env step: non-finite coil current at step %d (bus %.1f V)",
                    s.step_index, s.bus);
      throw RuntimeFault(buf);
    }
  }

  // (4) diagnostics with sensor noise
  StepResult out;
  out.obs = observe(s, &noise_rng);

  // (5) reward against the current target
  out.info = info_for(s);
  out.reward = shape_reward(out.info.d_shape, out.info.d_xpt, cfg_.reward);

  // (6) termination: horizon reached, or the boundary drifted a full
  // tolerance beyond where the episode started
  ++s.step_index;
  s.done = s.step_index >= cfg_.episode_len ||
           out.info.d_shape > s.episode_start_dshape + cfg_.reward.geom_tol;
  out.done = s.done;
  return out;
}

bool SurrogateEnv::maybe_resample_target(EnvState& s,
                                         const std::vector<ShapeGoal>& dataset,
                                         Rng& rng) const {
  if (dataset.empty()) throw ValidationError("env: dataset is empty");
  if (s.done || s.step_index == 0 || s.step_index % cfg_.resample_period != 0)
    return false;
  s.target = dataset[rng.uniform_int(dataset.size())];
  return true;
}

StepInfo SurrogateEnv::info_for(const EnvState& s) const {
  const PivotSet cur = pivot_points(s.shape);
  const PivotSet tgt = pivot_points(s.target);
  StepInfo info;
  info.d_shape = pivot_distance_mean(cur, tgt);
  info.d_xpt = xpoint_distance(cur, tgt);
  info.delta_p = pivot_delta(cur, tgt);
  info.delta_x = xpoint_delta(cur, tgt);
  return info;
}

void to_json(nlohmann::json& j, const ShapeEnvelope& e) {
  j = nlohmann::json::object();
  j["lo"] = e.lo;
  j["hi"] = e.hi;
}

void from_json(const nlohmann::json& j, ShapeEnvelope& e) {
  const auto lo = j.at("lo").get<std::vector<double>>();
  const auto hi = j.at("hi").get<std::vector<double>>();
  if (lo.size() != kGoalDim || hi.size() != kGoalDim)
    throw ValidationError("envelope lo/hi must have 11 entries");
  std::copy(lo.begin(), lo.end(), e.lo.begin());
  std::copy(hi.begin(), hi.end(), e.hi.begin());
}

void to_json(nlohmann::json& j, const EnvConfig& c) {
  j = nlohmann::json::object();
  j["layout"] = c.layout;
  j["envelope"] = c.envelope;
  j["dt"] = c.dt;
  j["episode_len"] = c.episode_len;
  j["resample_period"] = c.resample_period;
  j["tau_p"] = c.tau_p;
  j["bus_nominal"] = c.bus_nominal;
  j["bus_jitter"] = c.bus_jitter;
  j["ip_nominal"] = c.ip_nominal;
  j["ip_band"] = c.ip_band;
  j["noise"] = c.noise;
  j["reward"] = c.reward;
  j["n_act"] = c.n_act;
  j["n_paired"] = c.n_paired;
  j["response_seed"] = c.response_seed;
  j["pos_gain"] = c.pos_gain;
  j["dimless_gain"] = c.dimless_gain;
  j["clamp_margin"] = c.clamp_margin;
}

void from_json(const nlohmann::json& j, EnvConfig& c) {
  c.layout = j.at("layout").get<LayoutConfig>();
  c.envelope = j.at("envelope").get<ShapeEnvelope>();
  c.dt = j.at("dt").get<double>();
  c.episode_len = j.at("episode_len").get<int>();
  c.resample_period = j.at("resample_period").get<int>();
  c.tau_p = j.at("tau_p").get<double>();
  c.bus_nominal = j.at("bus_nominal").get<double>();
  c.bus_jitter = j.at("bus_jitter").get<double>();
  c.ip_nominal = j.at("ip_nominal").get<double>();
  c.ip_band = j.at("ip_band").get<double>();
  c.noise = j.at("noise").get<NoiseConfig>();
  c.reward = j.at("reward").get<RewardConfig>();
  c.n_act = j.at("n_act").get<int>();
  c.n_paired = j.at("n_paired").get<int>();
  c.response_seed = j.at("response_seed").get<std::uint64_t>();
  c.pos_gain = j.at("pos_gain").get<double>();
  c.dimless_gain = j.at("dimless_gain").get<double>();
  c.clamp_margin = j.at("clamp_margin").get<double>();
}

}  // namespace shaperl
