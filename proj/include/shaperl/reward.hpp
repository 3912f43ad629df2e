#pragma once

#include <json.hpp>

namespace shaperl {

struct RewardConfig {
  double geom_tol = 0.08;  // m; distance at which proximity drops to 0.1
  double alpha = -5.0;     // soft-min sharpness (negative -> min-like)
};

// Smooth proximity score: 1 at zero distance, 0.1 at d == tol, -> 0 beyond.
// proximity(d) = 2 / (1 + 19^(d / tol)).
double proximity(double distance_m, double tol_m);

// Softmax-weighted combination of two scores.  With alpha < 0 the weight
// concentrates on the smaller score (soft minimum); alpha -> -inf gives the
// exact min, alpha = 0 the arithmetic mean.
double soft_min_combine(double r_a, double r_b, double alpha);

// Scalar shape reward from the boundary distance and the x-point distance.
double shape_reward(double d_shape_m, double d_xpt_m, const RewardConfig& cfg);

void validate_reward_config(const RewardConfig& cfg);

void to_json(nlohmann::json& j, const RewardConfig& cfg);
void from_json(const nlohmann::json& j, RewardConfig& cfg);

}  // namespace shaperl
