#pragma once

#include <array>
#include <span>
#include <vector>

#include <json.hpp>

#include "shaperl/geometry.hpp"
#include "shaperl/layout.hpp"
#include "shaperl/linalg.hpp"
#include "shaperl/pipeline.hpp"
#include "shaperl/reward.hpp"
#include "shaperl/rng.hpp"

namespace shaperl {

// Axis-aligned box of valid shape parameters, in goal_to_array order.
struct ShapeEnvelope {
  std::array<double, kGoalDim> lo{};
  std::array<double, kGoalDim> hi{};
};

ShapeEnvelope default_envelope();
ShapeGoal envelope_midpoint(const ShapeEnvelope& env);

// Throws ValidationError unless every goal inside the box (shrunk by margin)
// satisfies the shape-goal invariants.
void validate_envelope(const ShapeEnvelope& env, double margin);
// Projection onto the box shrunk by `margin` on every side.
ShapeGoal clamp_to_envelope(const ShapeGoal& g, const ShapeEnvelope& env,
                            double margin);

struct EnvConfig {
  LayoutConfig layout;
  ShapeEnvelope envelope = default_envelope();
  double dt = 1e-3;            // s, control period (1 kHz)
  int episode_len = 1000;      // steps
  int resample_period = 250;   // steps between target changes
  double tau_p = 0.02;         // s, shape response time constant
  double bus_nominal = 400.0;  // V
  double bus_jitter = 50.0;    // V, uniform half-width, drawn per episode
  double ip_nominal = 1.0e6;   // A, plasma current
  double ip_band = 0.10;       // relative half-width, drawn per episode
  NoiseConfig noise;
  RewardConfig reward;
  int n_act = 14;              // actuator channels
  int n_paired = 6;            // trailing actuators that drive coil pairs
  std::uint64_t response_seed = 13;
  double pos_gain = 2e-4;      // m/A response scale, meter-valued params
  double dimless_gain = 4.8e-4;  // 1/A response scale, dimensionless params
  double clamp_margin = 1e-3;  // box projection margin
};

struct EnvState {
  std::vector<double> coil_currents;  // A
  ShapeGoal shape;                    // realized boundary parameters
  ShapeGoal target;
  double ip = 0.0;   // A, constant within the episode
  double bus = 0.0;  // V, constant within the episode
  int step_index = 0;
  double episode_start_dshape = 0.0;
  bool done = false;
};

struct StepInfo {
  double d_shape = 0.0;  // m, mean pivot distance realized vs target
  double d_xpt = 0.0;    // m, x-point distance
  std::array<double, 2 * kNumPivots> delta_p{};  // signed pivot differences
  std::array<double, 2> delta_x{};               // signed x-point difference
};

struct StepResult {
  std::vector<double> obs;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

// Reduced-order plasma shape simulator.  A stand-in, not a physics code:
// the plasma is one current filament at the centroid, diagnostics follow
// from exact filament magnetics, and the boundary parameters respond to
// coil currents through a fixed linear map with first-order lag.
class SurrogateEnv {
 public:
  explicit SurrogateEnv(EnvConfig cfg);

  const EnvConfig& config() const { return cfg_; }
  const SensorLayout& layout() const { return layout_; }
  const ObsSpans& spans() const { return spans_; }
  const Matrix& response() const { return response_; }
  const Matrix& patch() const { return patch_; }
  double response_min_sv() const { return response_min_sv_; }
  const ShapeGoal& reference_shape() const { return y_ref_; }

  // Least-squares coil currents whose equilibrium shape is `g`.
  std::vector<double> init_currents(const ShapeGoal& g) const;

  // Fresh episode: initial shape and target drawn independently from the
  // dataset, plasma current and bus voltage drawn for the episode, coil
  // currents at the inverse-model solution for the initial shape.
  EnvState reset(const std::vector<ShapeGoal>& dataset, Rng& rng) const;
  // Deterministic variant used by evaluation.
  EnvState reset_to(const ShapeGoal& init_shape, const ShapeGoal& target,
                    double ip, double bus) const;

  // Synthesizes the observation for the current state; adds sensor noise
  // when a generator is supplied.
  std::vector<double> observe(const EnvState& s, Rng* noise_rng) const;
  // Rewrites the goal block of an existing observation from the state
  // (used after a mid-episode target change; goal channels are noiseless).
  void refresh_goal(std::span<double> obs, const EnvState& s) const;

  // One control period: actuator voltages -> circuit currents -> shape lag
  // -> diagnostics (+noise) -> reward -> termination.
  StepResult step(EnvState& s, std::span<const double> action,
                  Rng& noise_rng) const;

  // Uniform redraw of the target at every multiple of resample_period
  // (never at step 0).  Returns true if the target changed.
  bool maybe_resample_target(EnvState& s,
                             const std::vector<ShapeGoal>& dataset,
                             Rng& rng) const;

  // Distances and signed differences of the current state vs its target.
  StepInfo info_for(const EnvState& s) const;

 private:
  void build_response();
  void precompute_greens();
  double plasma_probe_reading(int probe_idx, double rc, double zc) const;

  EnvConfig cfg_;
  SensorLayout layout_;
  ObsSpans spans_;
  ShapeGoal y_ref_;
  Matrix response_;        // kGoalDim x n_coils, includes row gains
  double response_min_sv_ = 0.0;
  Matrix patch_;           // n_coils x n_act, 0/1 entries
  Matrix g_probe_;         // n_probes x n_coils, reading per ampere
  Matrix g_loop_;          // n_loops x n_coils, flux per ampere
};

void to_json(nlohmann::json& j, const ShapeEnvelope& e);
void from_json(const nlohmann::json& j, ShapeEnvelope& e);
void to_json(nlohmann::json& j, const EnvConfig& c);
void from_json(const nlohmann::json& j, EnvConfig& c);

}  // namespace shaperl
