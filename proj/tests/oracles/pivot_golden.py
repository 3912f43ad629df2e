#!/usr/bin/env python3
"""Golden pivot-point vector computed in exact rational arithmetic.

Independent reference for the control-point construction implemented in
src/geometry.cpp.  Run this to regenerate the frozen constants used by
tests/test_geometry.cpp.
"""
from fractions import Fraction as F

# Boundary description: centroid (R_c, Z_c), minor radius a, top height z_max,
# upper triangularity delta_u, lower x-point (R_x, Z_x), squareness xi_*.
R_c, Z_c = F("1.7"), F("0")
a = F("0.6")
z_max = F("1.0")
delta_u = F("0.5")
R_x, Z_x = F("1.5"), F("-1.1")
xi = F("0.3")  # all four squareness parameters

r_min = R_c - a
r_max = R_c + a
p5r = R_c - a * delta_u

# Anchor corners of the bounding box.
TI = (r_min, z_max)
TO = (r_max, z_max)
BI = (r_min, Z_x)
BO = (r_max, Z_x)

p1 = (R_x, Z_x)
p3 = (r_min, Z_c)
p5 = (p5r, z_max)
p7 = (r_max, Z_c)


def mid_plus(pa, pb, corner, anchor, x):
    return (
        (pa[0] + pb[0]) / 2 + (corner[0] - anchor[0]) / 2 * x,
        (pa[1] + pb[1]) / 2 + (corner[1] - anchor[1]) / 2 * x,
    )


p2 = mid_plus(p1, p3, BI, (R_x, Z_c), xi)
p4 = mid_plus(p5, p3, TI, (p5r, Z_c), xi)
p6 = mid_plus(p5, p7, TO, (p5r, Z_c), xi)
p8 = mid_plus(p1, p7, BO, (R_x, Z_c), xi)

for i, p in enumerate([p1, p2, p3, p4, p5, p6, p7, p8], start=1):
    print(f"p{i} = ({p[0]}, {p[1]})  = ({float(p[0]):.17g}, {float(p[1]):.17g})")
