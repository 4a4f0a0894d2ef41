#pragma once

#include "mscg/kl_radius.hpp"
#include "mscg/mesh.hpp"
#include "mscg/types.hpp"

namespace mscg {

// Geometry map data at one reference point.
struct MapJet {
  Vec x = Vec::Zero(2);        // physical position
  Mat grad = Mat::Zero(2, 2);  // deformation gradient
  double det = 0.0;            // its determinant
  Mat weak = Mat::Zero(2, 2);  // det * grad^{-1} * grad^{-T}
};

// Radial deformation of a rod cell: the rod perimeter moves from radius R0
// to r0(alpha) = R0 * (1 + theta + KL offset), points between the inner
// polygon and the rod circle and between the circle and the cell boundary
// follow by linear interpolation in the radius, and the inner polygon, its
// interior, and the cell boundary stay fixed pointwise.  All quantities are
// closed-form in the polar frame; the branch is chosen by the caller from
// the mesh element's region tag.
class RadialMap {
public:
  RadialMap(const Mat& corners, const Vec& center, double rod_radius,
            double inner_scale, const KLRadius* kl, double theta, const Vec& z);

  // Identity map (plain cells); eval returns identity jets for any region.
  static RadialMap identity();

  bool is_identity() const { return identity_; }
  const Vec& z() const { return z_; }
  double theta() const { return theta_; }

  double radius0(double alpha) const;
  double radius0_dalpha(double alpha) const;

  MapJet eval(const Vec& X, MapRegion region) const;

  // Derivative of the jet with respect to one scalar parameter:
  // param == -1 selects theta, param >= 0 selects z[param].
  MapJet param_derivative(const Vec& X, MapRegion region, int param) const;

private:
  bool identity_ = false;
  Mat corners_;
  Vec center_ = Vec::Zero(2);
  double R0_ = 0.0;
  double inner_scale_ = 0.0;
  const KLRadius* kl_ = nullptr;
  double theta_ = 0.0;
  Vec z_;
};

} // namespace mscg
