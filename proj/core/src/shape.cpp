#include "mscg/shape.hpp"

#include "mscg/errors.hpp"

#include <cmath>

namespace mscg {

namespace {

// Jacobi polynomial P_n^{(a,b)}, normalized to unit weighted L2 norm on
// [-1,1].  Recurrence follows the standard orthonormal three-term form.
double jacobi(int n, double a, double b, double x) {
  double g0 = std::pow(2.0, a + b + 1.0) / (a + b + 1.0) * std::tgamma(a + 1.0) *
              std::tgamma(b + 1.0) / std::tgamma(a + b + 1.0);
  double p0 = 1.0 / std::sqrt(g0);
  if (n == 0) return p0;
  double g1 = (a + 1.0) * (b + 1.0) / (a + b + 3.0) * g0;
  double p1 = ((a + b + 2.0) * x / 2.0 + (a - b) / 2.0) / std::sqrt(g1);
  if (n == 1) return p1;
  double aold = 2.0 / (2.0 + a + b) * std::sqrt((a + 1.0) * (b + 1.0) / (a + b + 3.0));
  for (int i = 1; i < n; ++i) {
    double h1 = 2.0 * i + a + b;
    double anew = 2.0 / (h1 + 2.0) *
                  std::sqrt((i + 1.0) * (i + 1.0 + a + b) * (i + 1.0 + a) *
                            (i + 1.0 + b) / ((h1 + 1.0) * (h1 + 3.0)));
    double bnew = -(a * a - b * b) / (h1 * (h1 + 2.0));
    double p2 = (-aold * p0 + (x - bnew) * p1) / anew;
    p0 = p1;
    p1 = p2;
    aold = anew;
  }
  return p1;
}

double jacobi_deriv(int n, double a, double b, double x) {
  if (n == 0) return 0.0;
  return std::sqrt(n * (n + a + b + 1.0)) * jacobi(n - 1, a + 1.0, b + 1.0, x);
}

// Collapsed coordinates for the unit triangle: (x,y) -> (s,t) in [-1,1]^2
// with s degenerate along the apex edge y=1.
inline void collapse(double x, double y, double& s, double& t) {
  t = 2.0 * y - 1.0;
  s = (y < 1.0 - 1e-14) ? 2.0 * x / (1.0 - y) - 1.0 : -1.0;
}

} // namespace

Mat triangle_modal_eval(int p, const Mat& pts) {
  int nm = (p + 1) * (p + 2) / 2;
  Mat out(pts.rows(), nm);
  for (Eigen::Index k = 0; k < pts.rows(); ++k) {
    double s, t;
    collapse(pts(k, 0), pts(k, 1), s, t);
    int m = 0;
    for (int i = 0; i <= p; ++i) {
      for (int j = 0; j <= p - i; ++j) {
        double v = jacobi(i, 0.0, 0.0, s) * jacobi(j, 2.0 * i + 1.0, 0.0, t) *
                   std::pow(1.0 - t, i);
        // Factor 2*sqrt(2) makes the modes orthonormal on the unit triangle.
        out(k, m++) = 2.0 * std::sqrt(2.0) * v;
      }
    }
  }
  return out;
}

void triangle_modal_grad(int p, const Mat& pts, Mat& dx, Mat& dy) {
  int nm = (p + 1) * (p + 2) / 2;
  dx.resize(pts.rows(), nm);
  dy.resize(pts.rows(), nm);
  for (Eigen::Index k = 0; k < pts.rows(); ++k) {
    double s, t;
    collapse(pts(k, 0), pts(k, 1), s, t);
    int m = 0;
    for (int i = 0; i <= p; ++i) {
      double hb = std::pow(0.5 * (1.0 - t), i > 0 ? i - 1 : 0);
      for (int j = 0; j <= p - i; ++j) {
        double fa = jacobi(i, 0.0, 0.0, s);
        double dfa = jacobi_deriv(i, 0.0, 0.0, s);
        double gb = jacobi(j, 2.0 * i + 1.0, 0.0, t);
        double dgb = jacobi_deriv(j, 2.0 * i + 1.0, 0.0, t);
        // Derivatives w.r.t. the (-1,1)-square frame of the collapsed map.
        double dr = dfa * gb;
        if (i > 0) dr *= hb;
        double ds = dfa * gb * 0.5 * (1.0 + s);
        if (i > 0) ds *= hb;
        double tmp = dgb * std::pow(0.5 * (1.0 - t), i);
        if (i > 0) tmp -= 0.5 * i * gb * hb;
        ds += fa * tmp;
        // Chain rule from the bi-unit triangle to the unit triangle doubles
        // each derivative; with the modal normalization the net factor is 4.
        double scale = 4.0 * std::pow(2.0, i + 0.5);
        dx(k, m) = scale * dr;
        dy(k, m) = scale * ds;
        ++m;
      }
    }
  }
}

TriangleBasis::TriangleBasis(int order) : p_(order) {
  if (order < 1) throw ConfigError("triangle basis order must be >= 1");
  n_ = (p_ + 1) * (p_ + 2) / 2;
  nodes_.resize(n_, 2);
  int m = 0;
  for (int j = 0; j <= p_; ++j) {
    for (int i = 0; i <= p_ - j; ++i) {
      nodes_(m, 0) = double(i) / p_;
      nodes_(m, 1) = double(j) / p_;
      ++m;
    }
  }
  Mat v = triangle_modal_eval(p_, nodes_);
  vt_lu_.compute(v.transpose());
}

Mat TriangleBasis::eval(const Mat& pts) const {
  Mat phi = triangle_modal_eval(p_, pts);
  // N(x) solves V^T N = phi(x) for each point.
  return vt_lu_.solve(phi.transpose()).transpose();
}

void TriangleBasis::eval_grad(const Mat& pts, Mat& dx, Mat& dy) const {
  Mat gx, gy;
  triangle_modal_grad(p_, pts, gx, gy);
  dx = vt_lu_.solve(gx.transpose()).transpose();
  dy = vt_lu_.solve(gy.transpose()).transpose();
}

LineBasis::LineBasis(int order) : p_(order) {
  if (order < 0) throw ConfigError("line basis order must be >= 0");
  nodes_.resize(p_ + 1);
  if (p_ == 0) {
    nodes_[0] = 0.5;
    bary_ = Vec::Ones(1);
    return;
  }
  for (int j = 0; j <= p_; ++j)
    nodes_[j] = 0.5 * (1.0 - std::cos(pi * j / p_));
  bary_.resize(p_ + 1);
  for (int j = 0; j <= p_; ++j) {
    double w = 1.0;
    for (int k = 0; k <= p_; ++k)
      if (k != j) w *= nodes_[j] - nodes_[k];
    bary_[j] = 1.0 / w;
  }
}

Mat LineBasis::eval(const Vec& pts) const {
  Mat out = Mat::Zero(pts.size(), p_ + 1);
  for (Eigen::Index k = 0; k < pts.size(); ++k) {
    double x = pts[k];
    int hit = -1;
    for (int j = 0; j <= p_; ++j) {
      if (std::abs(x - nodes_[j]) < 1e-14) {
        hit = j;
        break;
      }
    }
    if (hit >= 0) {
      out(k, hit) = 1.0;
      continue;
    }
    double denom = 0.0;
    for (int j = 0; j <= p_; ++j) denom += bary_[j] / (x - nodes_[j]);
    for (int j = 0; j <= p_; ++j) out(k, j) = bary_[j] / (x - nodes_[j]) / denom;
  }
  return out;
}

} // namespace mscg
