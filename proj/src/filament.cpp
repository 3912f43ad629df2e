#include "shaperl/filament.hpp"

#include <cmath>

#include "shaperl/errors.hpp"

namespace shaperl {

namespace {
constexpr double kPi = 3.141592653589793238462643383279;
constexpr double kMu0 = 4.0e-7 * kPi;  // vacuum permeability, H/m
}  // namespace

EllipticKE elliptic_ke_from_complement(double m_complement) {
  if (!(m_complement > 0.0 && m_complement <= 1.0))
    throw ValidationError("elliptic_ke: complement must be in (0, 1]");
  // AGM with the c_n recurrence:
  //   a_{n+1} = (a_n + b_n)/2, b_{n+1} = sqrt(a_n b_n), c_{n+1} = (a_n - b_n)/2
  //   K = pi / (2 a_inf),  E = K (1 - sum 2^{n-1} c_n^2)  with c_0^2 = k^2.
  double a = 1.0;
  double b = std::sqrt(m_complement);
  double c2_sum = 0.5 * (1.0 - m_complement);  // 2^{-1} c_0^2
  double pow2 = 1.0;
  for (int n = 0; n < 64; ++n) {
    const double c = 0.5 * (a - b);
    const double an = 0.5 * (a + b);
    const double bn = std::sqrt(a * b);
    a = an;
    b = bn;
    c2_sum += pow2 * c * c;
    pow2 *= 2.0;
    if (std::abs(a - b) <= 1e-15 * a) break;
  }
  const double k_val = kPi / (2.0 * a);
  return EllipticKE{k_val, k_val * (1.0 - c2_sum)};
}

double filament_flux(double rs, double zs, double r, double z) {
  if (!(rs > 0.0) || !(r > 0.0))
    throw ValidationError("filament_flux: loop radii must be > 0");
  const double dz = z - zs;
  const double sep2 = (r - rs) * (r - rs) + dz * dz;
  if (!(sep2 >= 1e-3 * 1e-3))
    throw ValidationError("filament_flux: loops closer than 1 mm");
  const double denom = (r + rs) * (r + rs) + dz * dz;
  const double k2 = 4.0 * r * rs / denom;
  const double k2c = sep2 / denom;  // 1 - k^2 without cancellation
  const auto ke = elliptic_ke_from_complement(k2c);
  const double k = std::sqrt(k2);
  // Mutual inductance of coaxial circular filaments:
  //   M = mu0 sqrt(r rs) [ (2/k - k) K(k) - (2/k) E(k) ].
  return kMu0 * std::sqrt(r * rs) *
         ((2.0 / k - k) * ke.K - (2.0 / k) * ke.E);
}

}  // namespace shaperl
