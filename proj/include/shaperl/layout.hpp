#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

namespace shaperl {

// Rectangular poloidal cross-section of the vacuum vessel.
struct VesselGeom {
  double r_lo = 1.0;
  double r_hi = 2.5;
  double z_lo = -1.4;
  double z_hi = 1.4;
};

struct LayoutConfig {
  int n_probes = 71;
  int n_loops = 43;
  int n_coils = 20;
  std::uint64_t seed = 7;
  VesselGeom vessel;
};

// Static machine description: pickup probes and flux loops around the inner
// wall, shaping coils on the vessel boundary.  Fully determined by the
// config (positions get a small seeded jitter so no two channels coincide).
struct SensorLayout {
  struct Probe {
    double r, z;
    double angle;  // measurement direction in the (r, z) plane
  };
  struct Loop {
    double r, z;
  };
  struct Coil {
    double r, z;
    double turns;
    double resistance;  // ohm
    double inductance;  // henry
  };
  std::vector<Probe> probes;
  std::vector<Loop> loops;
  std::vector<Coil> coils;
  VesselGeom vessel;
};

SensorLayout make_layout(const LayoutConfig& cfg);
void validate_layout(const SensorLayout& layout);

// Channel partition of the flat observation vector:
//   [probes | loops | coil currents | plasma current | goal(11)].
enum class ChannelType { kProbe, kLoop, kCoil, kPlasmaCurrent, kGoal };

struct ObsSpans {
  int n_probes = 0;
  int n_loops = 0;
  int n_coils = 0;

  int probes_begin() const { return 0; }
  int loops_begin() const { return n_probes; }
  int coils_begin() const { return n_probes + n_loops; }
  int ip_index() const { return n_probes + n_loops + n_coils; }
  int goal_begin() const { return ip_index() + 1; }
  int total() const { return goal_begin() + 11; }
  // Channels eligible for dropout: probes and loops only.
  int maskable() const { return n_probes + n_loops; }

  ChannelType type_of(int channel) const;
  // Index within the channel's own type block.
  int local_index(int channel) const;
};

ObsSpans obs_spans(const LayoutConfig& cfg);

void to_json(nlohmann::json& j, const SensorLayout& layout);
void from_json(const nlohmann::json& j, SensorLayout& layout);
void to_json(nlohmann::json& j, const VesselGeom& v);
void from_json(const nlohmann::json& j, VesselGeom& v);
void to_json(nlohmann::json& j, const LayoutConfig& c);
void from_json(const nlohmann::json& j, LayoutConfig& c);

}  // namespace shaperl
