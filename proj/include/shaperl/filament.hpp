#pragma once

namespace shaperl {

// Complete elliptic integrals K and E as functions of the *complement*
// m' = 1 - k^2, evaluated together by the arithmetic-geometric mean to
// ~1e-12 relative accuracy.  Taking m' directly avoids catastrophic
// cancellation when the two filaments nearly coincide (k -> 1).
struct EllipticKE {
  double K;
  double E;
};
EllipticKE elliptic_ke_from_complement(double m_complement);

// Poloidal flux (Wb) through the horizontal circle of radius r at height z,
// produced by a coaxial circular filament of radius rs at height zs carrying
// 1 A.  Equivalently the mutual inductance of the two loops (H).
// Preconditions: rs > 0, r > 0, separation between the loops >= ~1 mm.
double filament_flux(double rs, double zs, double r, double z);

// Poloidal field components at (r, z) obtained from a central finite
// difference of a flux function psi(r, z):
//   B_r = -1/(2 pi r) dpsi/dz,   B_z = 1/(2 pi r) dpsi/dr.
struct PoloidalField {
  double br;
  double bz;
};
template <typename FluxFn>
PoloidalField field_from_flux(const FluxFn& psi, double r, double z,
                              double h = 1e-3) {
  const double inv = 1.0 / (6.283185307179586476925286766559 * r);
  const double dpsi_dr = (psi(r + h, z) - psi(r - h, z)) / (2.0 * h);
  const double dpsi_dz = (psi(r, z + h) - psi(r, z - h)) / (2.0 * h);
  return PoloidalField{-inv * dpsi_dz, inv * dpsi_dr};
}

}  // namespace shaperl
