#pragma once

#include "mscg/types.hpp"

namespace mscg {

// Complex coordinate stretch for absorbing boundary layers.  Along each
// axis the stretch factor is s(t) = 1 - i sigma(t)/omega where sigma ramps
// quadratically from zero at the interior interval edge to `strength` at
// distance `wx` (resp. `wy`) into the layer.  The profile lives in global
// lattice coordinates and composes with the per-cell geometry map.
struct PmlProfile {
  double strength = 0.0;
  double x_lo = 0.0, x_hi = 0.0, wx = 0.0;
  double y_lo = 0.0, y_hi = 0.0, wy = 0.0;

  bool enabled() const { return strength > 0.0 && (wx > 0.0 || wy > 0.0); }

  double ramp(double t, double lo, double hi, double w) const {
    if (w <= 0.0) return 0.0;
    double xi = 0.0;
    if (t < lo)
      xi = (lo - t) / w;
    else if (t > hi)
      xi = (t - hi) / w;
    if (xi > 1.0) xi = 1.0;
    return strength * xi * xi;
  }

  cplx sx(double x, double omega) const {
    return {1.0, -ramp(x, x_lo, x_hi, wx) / omega};
  }
  cplx sy(double y, double omega) const {
    return {1.0, -ramp(y, y_lo, y_hi, wy) / omega};
  }

  // Whether the stretch deviates from one anywhere inside the given box.
  bool active_in(double bx0, double by0, double bx1, double by1) const {
    if (!enabled()) return false;
    bool ax = wx > 0.0 && (bx0 < x_lo - 1e-12 || bx1 > x_hi + 1e-12);
    bool ay = wy > 0.0 && (by0 < y_lo - 1e-12 || by1 > y_hi + 1e-12);
    return ax || ay;
  }
};

} // namespace mscg
