#pragma once

#include <array>
#include <string>

#include <json.hpp>

namespace shaperl {

// Parametric description of a lower-single-null plasma boundary target.
// Lengths in meters; delta_u and the xi_* squareness values dimensionless.
struct ShapeGoal {
  double R_c = 0.0;      // centroid major radius
  double Z_c = 0.0;      // centroid height
  double a = 0.0;        // minor radius
  double z_max = 0.0;    // height of the topmost boundary point
  double delta_u = 0.0;  // upper triangularity
  double R_x = 0.0;      // x-point major radius
  double Z_x = 0.0;      // x-point height
  double xi_TI = 0.0;    // top-inner squareness
  double xi_TO = 0.0;    // top-outer squareness
  double xi_BI = 0.0;    // bottom-inner squareness
  double xi_BO = 0.0;    // bottom-outer squareness
};

inline constexpr int kGoalDim = 11;

// Canonical flattening order, shared by the goal observation block, the
// surrogate response model, and dataset files.
std::array<double, kGoalDim> goal_to_array(const ShapeGoal& g);
ShapeGoal goal_from_array(const std::array<double, kGoalDim>& v);
const std::array<const char*, kGoalDim>& goal_field_names();

struct Point {
  double r = 0.0;
  double z = 0.0;
};

enum class PivotRole {
  kXPoint = 0,        // p1
  kBottomInner,       // p2
  kInnerMidplane,     // p3
  kTopInner,          // p4
  kTop,               // p5
  kTopOuter,          // p6
  kOuterMidplane,     // p7
  kBottomOuter,       // p8
};

inline constexpr int kNumPivots = 8;

// Eight boundary control points in fixed order p1..p8 (index = role).
struct PivotSet {
  std::array<Point, kNumPivots> p{};
};

// Throws ValidationError naming the violated constraint.  Constraints:
// a > 0, R_c - a > 0, z_max > Z_c, Z_c - Z_x >= 1 mm, xi_* in [-1, 1],
// all fields finite.
void validate_goal(const ShapeGoal& g);

// Control-point construction.  p1 sits on the x-point, p3/p7 on the inner and
// outer midplane, p5 on the top; p2/p4/p6/p8 interpolate between their
// neighbours and the bounding-box corner controlled by the squareness values.
PivotSet pivot_points(const ShapeGoal& g);

// Mean Euclidean distance over the eight pivot pairs ("shape distance").
double pivot_distance_mean(const PivotSet& a, const PivotSet& b);
// Euclidean distance between the two x-point pivots.
double xpoint_distance(const PivotSet& a, const PivotSet& b);

// Signed pivot differences (a - b), flattened (r1,z1,...,r8,z8).
std::array<double, 2 * kNumPivots> pivot_delta(const PivotSet& a, const PivotSet& b);
// Signed x-point difference (a - b).
std::array<double, 2> xpoint_delta(const PivotSet& a, const PivotSet& b);

// JSON round-trip (nlohmann ADL hooks).
void to_json(nlohmann::json& j, const ShapeGoal& g);
void from_json(const nlohmann::json& j, ShapeGoal& g);
void to_json(nlohmann::json& j, const PivotSet& p);
void from_json(const nlohmann::json& j, PivotSet& p);

}  // namespace shaperl
