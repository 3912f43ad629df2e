#include "shaperl/reward.hpp"

#include <algorithm>
#include <cmath>

#include "shaperl/errors.hpp"

namespace shaperl {

void validate_reward_config(const RewardConfig& cfg) {
  if (!(cfg.geom_tol > 0.0))
    throw ValidationError("reward config: geom_tol must be > 0");
  if (!(cfg.alpha < 0.0))
    throw ValidationError("reward config: alpha must be < 0 (soft minimum)");
}

double proximity(double distance_m, double tol_m) {
  if (!(tol_m > 0.0)) throw ValidationError("proximity: tol must be > 0");
  if (!(distance_m >= 0.0) || !std::isfinite(distance_m))
    throw ValidationError("proximity: distance must be finite and >= 0");
  return 2.0 / (1.0 + std::pow(19.0, distance_m / tol_m));
}

double soft_min_combine(double r_a, double r_b, double alpha) {
  // Weights exp(alpha*r) computed with the max subtracted so the expression
  // stays finite for any alpha scale.
  const double m = std::max(alpha * r_a, alpha * r_b);
  const double wa = std::exp(alpha * r_a - m);
  const double wb = std::exp(alpha * r_b - m);
  return (r_a * wa + r_b * wb) / (wa + wb);
}

double shape_reward(double d_shape_m, double d_xpt_m, const RewardConfig& cfg) {
  validate_reward_config(cfg);
  const double r_shape = proximity(d_shape_m, cfg.geom_tol);
  const double r_xpt = proximity(d_xpt_m, cfg.geom_tol);
  return soft_min_combine(r_shape, r_xpt, cfg.alpha);
}

void to_json(nlohmann::json& j, const RewardConfig& cfg) {
  j = {{"geom_tol", cfg.geom_tol}, {"alpha", cfg.alpha}};
}

void from_json(const nlohmann::json& j, RewardConfig& cfg) {
  cfg.geom_tol = j.at("geom_tol").get<double>();
  cfg.alpha = j.at("alpha").get<double>();
}

}  // namespace shaperl
