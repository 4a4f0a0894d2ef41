#pragma once

#include "mscg/types.hpp"

namespace mscg {

// Truncated Karhunen-Loeve model of the rod radius perturbation as a
// function of the angular coordinate.  The coefficient vector z has
// n_coeffs entries: one constant mode plus sine/cosine pairs per harmonic;
// with i.i.d. unit-variance coefficients the relative radius perturbation
// has standard deviation sigma * (sqrt(pi) * corr_length)^(1/2) *
// sqrt(sum of squared mode factors).
struct KLRadius {
  double sigma = 0.02;
  double corr_length = 1.0 / 16.0;
  int n_coeffs = 11;

  int harmonics() const { return (n_coeffs - 1) / 2; }

  // Mode amplitude sqrt(lambda_d) = sigma (sqrt(pi) L_c)^(1/2)
  // exp(-(d pi L_c)^2 / 8).
  double sqrt_lambda(int d) const;

  // Angular mode functions psi_k(alpha) and derivatives; the relative
  // radius offset is sum_k z_k psi_k(alpha).
  void basis(double alpha, double* psi) const;
  void basis_dalpha(double alpha, double* dpsi) const;

  double offset(double alpha, const Vec& z) const;
  double offset_dalpha(double alpha, const Vec& z) const;

  // Standard deviation of the total relative offset at a fixed angle for
  // unit-variance coefficients (used by the tolerance-band check).
  double total_std() const;
};

} // namespace mscg
