#pragma once

#include "mscg/types.hpp"

namespace mscg {

// Nodes and weights on the unit interval [0,1].
struct QuadRule1D {
  Vec points;
  Vec weights;
};

// Nodes (rows of `points`) and weights on the unit reference triangle
// {(x,y) : x >= 0, y >= 0, x + y <= 1}.  Weights sum to 1/2.
struct QuadRuleTri {
  Mat points;
  Vec weights;
};

// n-point Gauss-Legendre rule on [-1,1], exact for degree 2n-1.
QuadRule1D gauss_legendre(int n);

// Smallest Gauss rule on [0,1] exact for polynomials of the given degree.
QuadRule1D line_rule(int degree);

// Collapsed-coordinate product rule on the reference triangle, exact for
// total degree `degree`.  The square-to-triangle map puts a factor (1-b)
// in the integrand, so the 1D order is chosen as ceil((degree+2)/2).
QuadRuleTri triangle_rule(int degree);

} // namespace mscg
