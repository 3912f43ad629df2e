#include "shaperl/geometry.hpp"

#include <cmath>

#include "shaperl/errors.hpp"

namespace shaperl {

std::array<double, kGoalDim> goal_to_array(const ShapeGoal& g) {
  return {g.R_c, g.Z_c, g.a, g.z_max, g.delta_u, g.R_x,
          g.Z_x, g.xi_TI, g.xi_TO, g.xi_BI, g.xi_BO};
}

ShapeGoal goal_from_array(const std::array<double, kGoalDim>& v) {
  ShapeGoal g;
  g.R_c = v[0];
  g.Z_c = v[1];
  g.a = v[2];
  g.z_max = v[3];
  g.delta_u = v[4];
  g.R_x = v[5];
  g.Z_x = v[6];
  g.xi_TI = v[7];
  g.xi_TO = v[8];
  g.xi_BI = v[9];
  g.xi_BO = v[10];
  return g;
}

const std::array<const char*, kGoalDim>& goal_field_names() {
  static const std::array<const char*, kGoalDim> names = {
      "R_c", "Z_c", "a", "z_max", "delta_u", "R_x",
      "Z_x", "xi_TI", "xi_TO", "xi_BI", "xi_BO"};
  return names;
}

void validate_goal(const ShapeGoal& g) {
  const auto v = goal_to_array(g);
  const auto& names = goal_field_names();
  for (int i = 0; i < kGoalDim; ++i) {
    if (!std::isfinite(v[i]))
      throw ValidationError(std::string("shape goal: ") + names[i] + " must be finite");
  }
  if (!(g.a > 0.0)) throw ValidationError("shape goal: a must be > 0");
  if (!(g.R_c - g.a > 0.0))
    throw ValidationError("shape goal: R_c - a must be > 0 (inner boundary past the axis)");
  if (!(g.z_max > g.Z_c))
    throw ValidationError("shape goal: z_max must be > Z_c");
  if (!(g.Z_c - g.Z_x >= 1e-3))
    throw ValidationError("shape goal: Z_c - Z_x must be >= 1 mm");
  const char* xi_names[4] = {"xi_TI", "xi_TO", "xi_BI", "xi_BO"};
  const double xi_vals[4] = {g.xi_TI, g.xi_TO, g.xi_BI, g.xi_BO};
  for (int i = 0; i < 4; ++i) {
    if (!(xi_vals[i] >= -1.0 && xi_vals[i] <= 1.0))
      throw ValidationError(std::string("shape goal: ") + xi_names[i] + " must be in [-1, 1]");
  }
}

PivotSet pivot_points(const ShapeGoal& g) {
  validate_goal(g);
  const double r_min = g.R_c - g.a;
  const double r_max = g.R_c + g.a;
  const double p5r = g.R_c - g.a * g.delta_u;

  const Point p1{g.R_x, g.Z_x};
  const Point p3{r_min, g.Z_c};
  const Point p5{p5r, g.z_max};
  const Point p7{r_max, g.Z_c};

  // Box corners next to each interpolated point.
  const Point ti{r_min, g.z_max};
  const Point to{r_max, g.z_max};
  const Point bi{r_min, g.Z_x};
  const Point bo{r_max, g.Z_x};

  auto mid_plus = [](const Point& a, const Point& b, const Point& corner,
                     const Point& anchor, double xi) {
    return Point{0.5 * (a.r + b.r) + 0.5 * xi * (corner.r - anchor.r),
                 0.5 * (a.z + b.z) + 0.5 * xi * (corner.z - anchor.z)};
  };

  // At xi = 0 the interpolated points sit on the midpoint of their
  // neighbours; at xi = 1 they reach the box corner exactly.
  const Point p2 = mid_plus(p1, p3, bi, Point{g.R_x, g.Z_c}, g.xi_BI);
  const Point p4 = mid_plus(p5, p3, ti, Point{p5r, g.Z_c}, g.xi_TI);
  const Point p6 = mid_plus(p5, p7, to, Point{p5r, g.Z_c}, g.xi_TO);
  const Point p8 = mid_plus(p1, p7, bo, Point{g.R_x, g.Z_c}, g.xi_BO);

  PivotSet out;
  out.p = {p1, p2, p3, p4, p5, p6, p7, p8};
  return out;
}

double pivot_distance_mean(const PivotSet& a, const PivotSet& b) {
  double s = 0.0;
  for (int i = 0; i < kNumPivots; ++i) {
    const double dr = a.p[i].r - b.p[i].r;
    const double dz = a.p[i].z - b.p[i].z;
    s += std::sqrt(dr * dr + dz * dz);
  }
  return s / kNumPivots;
}

double xpoint_distance(const PivotSet& a, const PivotSet& b) {
  const int i = static_cast<int>(PivotRole::kXPoint);
  const double dr = a.p[i].r - b.p[i].r;
  const double dz = a.p[i].z - b.p[i].z;
  return std::sqrt(dr * dr + dz * dz);
}

std::array<double, 2 * kNumPivots> pivot_delta(const PivotSet& a, const PivotSet& b) {
  std::array<double, 2 * kNumPivots> d{};
  for (int i = 0; i < kNumPivots; ++i) {
    d[2 * i] = a.p[i].r - b.p[i].r;
    d[2 * i + 1] = a.p[i].z - b.p[i].z;
  }
  return d;
}

std::array<double, 2> xpoint_delta(const PivotSet& a, const PivotSet& b) {
  const int i = static_cast<int>(PivotRole::kXPoint);
  return {a.p[i].r - b.p[i].r, a.p[i].z - b.p[i].z};
}

void to_json(nlohmann::json& j, const ShapeGoal& g) {
  const auto v = goal_to_array(g);
  const auto& names = goal_field_names();
  j = nlohmann::json::object();
  for (int i = 0; i < kGoalDim; ++i) j[names[i]] = v[i];
}

void from_json(const nlohmann::json& j, ShapeGoal& g) {
  std::array<double, kGoalDim> v{};
  const auto& names = goal_field_names();
  for (int i = 0; i < kGoalDim; ++i) v[i] = j.at(names[i]).get<double>();
  g = goal_from_array(v);
}

void to_json(nlohmann::json& j, const PivotSet& p) {
  j = nlohmann::json::array();
  for (const auto& pt : p.p) j.push_back({pt.r, pt.z});
}

void from_json(const nlohmann::json& j, PivotSet& p) {
  if (!j.is_array() || j.size() != kNumPivots)
    throw ValidationError("pivot set: expected an array of 8 [r, z] pairs");
  for (int i = 0; i < kNumPivots; ++i) {
    p.p[i].r = j[i].at(0).get<double>();
    p.p[i].z = j[i].at(1).get<double>();
  }
}

}  // namespace shaperl
