#include "mscg/quadrature.hpp"

#include <doctest.h>

#include <cmath>

using namespace mscg;

namespace {

// Exact monomial integral over the unit triangle: a! b! / (a+b+2)!.
double tri_monomial(int a, int b) {
  double v = 1.0;
  for (int k = 1; k <= a; ++k) v *= k;
  for (int k = 1; k <= b; ++k) v *= k;
  for (int k = 1; k <= a + b + 2; ++k) v /= k;
  return v;
}

} // namespace

TEST_CASE("gauss_legendre integrates degree 2n-1 exactly") {
  for (int n = 1; n <= 12; ++n) {
    QuadRule1D g = gauss_legendre(n);
    CHECK(g.weights.sum() == doctest::Approx(2.0).epsilon(1e-14));
    for (int d = 0; d <= 2 * n - 1; ++d) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += g.weights[i] * std::pow(g.points[i], d);
      double exact = (d % 2 == 0) ? 2.0 / (d + 1) : 0.0;
      CHECK(acc == doctest::Approx(exact).epsilon(1e-13));
    }
  }
}

TEST_CASE("line_rule is exact on [0,1] for the requested degree") {
  for (int deg = 0; deg <= 21; ++deg) {
    QuadRule1D r = line_rule(deg);
    for (int d = 0; d <= deg; ++d) {
      double acc = 0.0;
      for (int i = 0; i < r.points.size(); ++i)
        acc += r.weights[i] * std::pow(r.points[i], d);
      CHECK(acc == doctest::Approx(1.0 / (d + 1)).epsilon(1e-13));
    }
  }
}

TEST_CASE("triangle_rule is exact for all monomials up to the requested degree") {
  for (int deg = 0; deg <= 14; ++deg) {
    QuadRuleTri r = triangle_rule(deg);
    CHECK(r.weights.sum() == doctest::Approx(0.5).epsilon(1e-14));
    for (int a = 0; a <= deg; ++a) {
      for (int b = 0; b + a <= deg; ++b) {
        double acc = 0.0;
        for (int i = 0; i < r.weights.size(); ++i)
          acc += r.weights[i] * std::pow(r.points(i, 0), a) * std::pow(r.points(i, 1), b);
        CHECK(acc == doctest::Approx(tri_monomial(a, b)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("triangle_rule points lie strictly inside the reference triangle") {
  QuadRuleTri r = triangle_rule(9);
  for (int i = 0; i < r.weights.size(); ++i) {
    CHECK(r.points(i, 0) > 0.0);
    CHECK(r.points(i, 1) > 0.0);
    CHECK(r.points(i, 0) + r.points(i, 1) < 1.0);
    CHECK(r.weights[i] > 0.0);
  }
}
