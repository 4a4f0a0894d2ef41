#pragma once

#include "mscg/types.hpp"

#include <Eigen/LU>

namespace mscg {

// Nodal Lagrange basis of order p on the unit reference triangle, with
// uniformly spaced nodes (i/p, j/p), i+j <= p.  Values and gradients at
// arbitrary points are obtained by solving against the Vandermonde matrix
// of an orthonormal modal (Jacobi-type) basis, which keeps the construction
// well conditioned for the moderate orders used here.
class TriangleBasis {
public:
  explicit TriangleBasis(int order);

  int order() const { return p_; }
  int size() const { return n_; }
  // Node coordinates, one row per node.
  const Mat& nodes() const { return nodes_; }

  // Basis values at the given points: result(k, i) = N_i(pts.row(k)).
  Mat eval(const Mat& pts) const;
  // Reference-coordinate gradients of all basis functions at the given
  // points, same layout as eval().
  void eval_grad(const Mat& pts, Mat& dx, Mat& dy) const;

private:
  int p_;
  int n_;
  Mat nodes_;
  Eigen::PartialPivLU<Mat> vt_lu_; // factorization of V^T
};

// Nodal Lagrange basis on [0,1] at Chebyshev-Gauss-Lobatto points,
// evaluated with barycentric weights.  Used for the interface multiplier
// spaces, where orders up to ~10 appear.
class LineBasis {
public:
  explicit LineBasis(int order);

  int order() const { return p_; }
  int size() const { return p_ + 1; }
  const Vec& nodes() const { return nodes_; }

  // Basis values at the given points: result(k, j) = L_j(pts[k]).
  Mat eval(const Vec& pts) const;

private:
  int p_;
  Vec nodes_;
  Vec bary_;
};

// Orthonormal modal basis on the unit reference triangle (used internally
// by TriangleBasis and exposed for tests).  Modes are ordered (i,j) with
// i = 0..p outer, j = 0..p-i inner.
Mat triangle_modal_eval(int p, const Mat& pts);
void triangle_modal_grad(int p, const Mat& pts, Mat& dx, Mat& dy);

} // namespace mscg
