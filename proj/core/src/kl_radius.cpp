#include "mscg/kl_radius.hpp"

#include "mscg/errors.hpp"

#include <cmath>

namespace mscg {

double KLRadius::sqrt_lambda(int d) const {
  double base = sigma * std::sqrt(std::sqrt(pi) * corr_length);
  double arg = d * pi * corr_length;
  return base * std::exp(-arg * arg / 8.0);
}

void KLRadius::basis(double alpha, double* psi) const {
  if (n_coeffs % 2 == 0) throw ConfigError("KL coefficient count must be odd");
  psi[0] = sqrt_lambda(0) / std::sqrt(2.0);
  for (int d = 1; d <= harmonics(); ++d) {
    double s = sqrt_lambda(d);
    psi[2 * d - 1] = s * std::sin(d * (alpha + pi / 2));
    psi[2 * d] = s * std::cos(d * (alpha + pi / 2));
  }
}

void KLRadius::basis_dalpha(double alpha, double* dpsi) const {
  if (n_coeffs % 2 == 0) throw ConfigError("KL coefficient count must be odd");
  dpsi[0] = 0.0;
  for (int d = 1; d <= harmonics(); ++d) {
    double s = sqrt_lambda(d);
    dpsi[2 * d - 1] = s * d * std::cos(d * (alpha + pi / 2));
    dpsi[2 * d] = -s * d * std::sin(d * (alpha + pi / 2));
  }
}

double KLRadius::offset(double alpha, const Vec& z) const {
  Vec psi(n_coeffs);
  basis(alpha, psi.data());
  return psi.dot(z);
}

double KLRadius::offset_dalpha(double alpha, const Vec& z) const {
  Vec dpsi(n_coeffs);
  basis_dalpha(alpha, dpsi.data());
  return dpsi.dot(z);
}

double KLRadius::total_std() const {
  double acc = sqrt_lambda(0) * sqrt_lambda(0) / 2.0;
  for (int d = 1; d <= harmonics(); ++d) {
    double s = sqrt_lambda(d);
    // sin and cos modes contribute s^2 sin^2 + s^2 cos^2 = s^2 at any angle.
    acc += s * s;
  }
  return std::sqrt(acc);
}

} // namespace mscg
