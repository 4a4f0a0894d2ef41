#include "mscg/quadrature.hpp"

#include <cmath>

namespace mscg {

QuadRule1D gauss_legendre(int n) {
  QuadRule1D rule;
  rule.points = Vec::Zero(n);
  rule.weights = Vec::Zero(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      // Legendre recurrence for P_n(x) and P_n'(x).
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.points[i] = -x;
    rule.points[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

QuadRule1D line_rule(int degree) {
  int n = degree / 2 + 1; // 2n-1 >= degree
  QuadRule1D g = gauss_legendre(n);
  QuadRule1D rule;
  rule.points = (g.points.array() + 1.0) * 0.5;
  rule.weights = g.weights * 0.5;
  return rule;
}

QuadRuleTri triangle_rule(int degree) {
  int n = (degree + 3) / 2; // ceil((degree+2)/2)
  QuadRule1D g = gauss_legendre(n);
  QuadRuleTri rule;
  rule.points = Mat::Zero(n * n, 2);
  rule.weights = Vec::Zero(n * n);
  int idx = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double a = g.points[i], b = g.points[j];
      rule.points(idx, 0) = 0.25 * (1.0 + a) * (1.0 - b);
      rule.points(idx, 1) = 0.5 * (1.0 + b);
      rule.weights[idx] = g.weights[i] * g.weights[j] * (1.0 - b) / 8.0;
      ++idx;
    }
  }
  return rule;
}

} // namespace mscg
