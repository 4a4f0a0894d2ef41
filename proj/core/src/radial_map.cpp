#include "mscg/radial_map.hpp"

#include "mscg/errors.hpp"

#include <cmath>

namespace mscg {

namespace {

// Polar-frame data shared by value and parameter-derivative evaluation.
struct Frame {
  double R, alpha, cosa, sina;
  double B, Bp;   // cell boundary distance and angular derivative
  double L, Lp;   // inner polygon distance and angular derivative
  double r0, r0p; // perturbed rod radius and angular derivative
  double r, a, b, d;
};

MapJet identity_jet(const Vec& X) {
  MapJet jet;
  jet.x = X;
  jet.grad = Mat::Identity(2, 2);
  jet.det = 1.0;
  jet.weak = Mat::Identity(2, 2);
  return jet;
}

Mat rotate_frame(const Frame& f, double m00, double m01, double m10, double m11) {
  Mat Q(2, 2), T(2, 2);
  Q << f.cosa, -f.sina, f.sina, f.cosa;
  T << m00, m01, m10, m11;
  return Q * T * Q.transpose();
}

} // namespace

RadialMap::RadialMap(const Mat& corners, const Vec& center, double rod_radius,
                     double inner_scale, const KLRadius* kl, double theta,
                     const Vec& z)
    : corners_(corners),
      center_(center),
      R0_(rod_radius),
      inner_scale_(inner_scale),
      kl_(kl),
      theta_(theta),
      z_(z) {
  if (kl_ && z_.size() != kl_->n_coeffs)
    throw ConfigError("KL coefficient vector length does not match the expansion");
}

RadialMap RadialMap::identity() {
  RadialMap map(Mat::Zero(4, 2), Vec::Zero(2), 1.0, 0.1, nullptr, 0.0, Vec());
  map.identity_ = true;
  return map;
}

double RadialMap::radius0(double alpha) const {
  double off = kl_ ? kl_->offset(alpha, z_) : 0.0;
  return R0_ * (1.0 + theta_ + off);
}

double RadialMap::radius0_dalpha(double alpha) const {
  return kl_ ? R0_ * kl_->offset_dalpha(alpha, z_) : 0.0;
}

namespace {

Frame make_frame(const RadialMap& map, const Mat& corners, const Vec& center,
                 double R0, double inner_scale, const Vec& X, MapRegion region) {
  Frame f;
  Vec rel = X - center;
  f.R = rel.norm();
  f.alpha = std::atan2(rel[1], rel[0]);
  f.cosa = std::cos(f.alpha);
  f.sina = std::sin(f.alpha);
  f.B = polygon_ray(corners, center, f.alpha, &f.Bp);
  f.L = inner_scale * f.B;
  f.Lp = inner_scale * f.Bp;
  f.r0 = map.radius0(f.alpha);
  f.r0p = map.radius0_dalpha(f.alpha);
  double ralpha;
  if (region == MapRegion::collar) {
    double D = R0 - f.L;
    f.r = f.L + (f.R - f.L) * (f.r0 - f.L) / D;
    f.a = (f.r0 - f.L) / D;
    double N = (f.R - f.L) * (f.r0 - f.L);
    double Np = -f.Lp * (f.r0 - f.L) + (f.R - f.L) * (f.r0p - f.Lp);
    ralpha = f.Lp + Np / D + N * f.Lp / (D * D);
  } else {
    double D = f.B - R0;
    f.r = f.r0 + (f.R - R0) * (f.B - f.r0) / D;
    f.a = (f.B - f.r0) / D;
    ralpha = f.r0p + (f.R - R0) * ((f.Bp - f.r0p) * D - (f.B - f.r0) * f.Bp) / (D * D);
  }
  f.b = ralpha / f.R;
  f.d = f.r / f.R;
  return f;
}

} // namespace

MapJet RadialMap::eval(const Vec& X, MapRegion region) const {
  if (identity_ || region == MapRegion::fixed) return identity_jet(X);
  Frame f = make_frame(*this, corners_, center_, R0_, inner_scale_, X, region);
  MapJet jet;
  jet.x = center_ + f.r * Vec{{f.cosa, f.sina}};
  jet.grad = rotate_frame(f, f.a, f.b, 0.0, f.d);
  jet.det = f.a * f.d;
  double w11 = (f.d * f.d + f.b * f.b) / (f.a * f.d);
  double w12 = -f.b / f.d;
  double w22 = f.a / f.d;
  jet.weak = rotate_frame(f, w11, w12, w12, w22);
  return jet;
}

MapJet RadialMap::param_derivative(const Vec& X, MapRegion region, int param) const {
  MapJet jet; // zero-initialized
  if (identity_ || region == MapRegion::fixed) return jet;
  Frame f = make_frame(*this, corners_, center_, R0_, inner_scale_, X, region);

  // Sensitivity of the perturbed radius function to the parameter.
  double r0_s, r0p_s;
  if (param < 0) {
    r0_s = R0_;
    r0p_s = 0.0;
  } else {
    Vec psi(kl_->n_coeffs), dpsi(kl_->n_coeffs);
    kl_->basis(f.alpha, psi.data());
    kl_->basis_dalpha(f.alpha, dpsi.data());
    r0_s = R0_ * psi[param];
    r0p_s = R0_ * dpsi[param];
  }

  double r_s, a_s, ralpha_s;
  if (region == MapRegion::collar) {
    double D = R0_ - f.L;
    double mu = (f.R - f.L) / D;
    r_s = mu * r0_s;
    a_s = r0_s / D;
    double mup = f.Lp * (f.R - R0_) / (D * D);
    ralpha_s = mup * r0_s + mu * r0p_s;
  } else {
    double D = f.B - R0_;
    double nu = (f.B - f.R) / D;
    r_s = nu * r0_s;
    a_s = -r0_s / D;
    double nup = f.Bp * (f.R - R0_) / (D * D);
    ralpha_s = nup * r0_s + nu * r0p_s;
  }
  double b_s = ralpha_s / f.R;
  double d_s = r_s / f.R;

  jet.x = r_s * Vec{{f.cosa, f.sina}};
  jet.grad = rotate_frame(f, a_s, b_s, 0.0, d_s);
  jet.det = a_s * f.d + f.a * d_s;
  double ad = f.a * f.d;
  double w11_s =
      ((2.0 * f.d * d_s + 2.0 * f.b * b_s) * ad -
       (f.d * f.d + f.b * f.b) * (a_s * f.d + f.a * d_s)) /
      (ad * ad);
  double w12_s = -(b_s * f.d - f.b * d_s) / (f.d * f.d);
  double w22_s = (a_s * f.d - f.a * d_s) / (f.d * f.d);
  jet.weak = rotate_frame(f, w11_s, w12_s, w12_s, w22_s);
  return jet;
}

} // namespace mscg
