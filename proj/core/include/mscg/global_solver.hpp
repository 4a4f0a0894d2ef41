#pragma once

#include "mscg/local_solver.hpp"

namespace mscg {

// Regular array of congruent cells spanned by two lattice vectors.  Cell
// (i, j) occupies origin_of(i, j) + the cell polygon; cross point (i, j)
// is the shared corner at origin_of(i, j).
struct Lattice {
  Vec a1 = (Vec(2) << 1, 0).finished();
  Vec a2 = (Vec(2) << 0, 1).finished();
  int nx = 1, ny = 1;

  Vec origin_of(int i, int j) const { return i * a1 + j * a2; }
  int n_cross() const { return (nx + 1) * (ny + 1); }
  int n_hfaces() const { return nx * (ny + 1); }
  int n_vfaces() const { return (nx + 1) * ny; }
  int n_faces() const { return n_hfaces() + n_vfaces(); }
};

enum class FaceBC : int { dirichlet = 0, neumann = 1 };

// An externally condensed cell (for example a reduced local model): the
// coupling block and load in local multiplier order, plus the recovery of
// the nodal field from the cell's multiplier values.
struct CondensedCell {
  CMat K;
  CVec rhs;  // empty means zero
  std::function<CVec(const CVec&)> recover;
};

// A lattice-structured interface problem.  `cell` fills in the geometry,
// materials and map of cell (i, j) plus a template cache key; the solver
// completes origin, frequency, absorption profile, face order and side
// modes (and extends the key with them).  Exterior faces default to
// dirichlet data; `exterior_bc` may switch individual faces to flux data.
// When `condensed` is set and claims a cell, its blocks are used in place
// of a full subdomain; such cells must not touch a dirichlet exterior face
// and receive no volume source.
struct GlobalProblem {
  Lattice lat;
  int face_order = 1;
  double omega = 1.0;
  PmlProfile pml;
  bool te = false;
  std::function<void(int i, int j, std::string& key, CellProblem& prob)> cell;
  std::function<bool(int i, int j, CondensedCell& out)> condensed;
  std::function<FaceBC(bool horizontal, int i, int j)> exterior_bc;
  SpaceFn dirichlet; // boundary values on dirichlet faces (null = zero)
  SpaceFn source;    // volume source (null = none)
  SpaceFn neumann;   // boundary flux on neumann faces (null = zero)
};

// Assembles and solves the interface-multiplier system: per-cell condensed
// couplings gathered over the face graph, exterior-dirichlet face dofs
// masked, boundary cross values pinned to the data, flux faces loaded by
// line quadrature against the face basis.
class GlobalSolver {
public:
  GlobalSolver(GlobalProblem prob, OperatorCache* cache = nullptr);

  // Full multiplier count including masked exterior dofs: all cross points
  // plus (face_order - 1) interior dofs per face.
  int n_mult() const;
  int cross_dof(int ci, int cj) const;
  // Global dofs of one cell in local multiplier order.
  std::vector<int> cell_dofs(int i, int j) const;

  void assemble();
  void solve();

  const CVec& lambda() const { return lambda_; }
  bool cell_is_condensed(int i, int j) const { return !ops_[idx(i, j)]; }
  // Full-template cells only; condensed cells carry no subdomain operator.
  const Subdomain& cell_op(int i, int j) const { return *ops_[idx(i, j)]; }
  const Subdomain::Instance& cell_instance(int i, int j) const {
    return insts_[idx(i, j)];
  }
  CVec cell_lambda(int i, int j) const;
  CVec cell_field(int i, int j) const;

  // L2 discrepancy of the recovered field against a reference solution,
  // returned as (error norm, reference norm) over the whole lattice.
  std::pair<double, double> l2_norms(const SpaceFn& exact) const;
  double rel_l2_error(const SpaceFn& exact) const;

  const std::vector<char>& fixed_dofs() const { return fixed_; }
  const GlobalProblem& problem() const { return prob_; }

  // Solve with the already-computed skeleton factorization (the system is
  // complex symmetric, so this also serves the adjoint).  Input and output
  // are full-size; fixed entries are ignored / returned zero.
  CVec resolve(const CVec& rhs_full) const;

  static long factorization_count();
  static long back_substitution_count();

private:
  int idx(int i, int j) const { return j * prob_.lat.nx + i; }
  int hface_dof0(int i, int j) const;
  int vface_dof0(int i, int j) const;

  GlobalProblem prob_;
  OperatorCache own_cache_;
  OperatorCache* cache_;
  std::vector<std::shared_ptr<const Subdomain>> ops_;
  std::vector<std::function<CVec(const CVec&)>> recover_;
  std::vector<Subdomain::Instance> insts_;
  std::vector<CTriplet> ktrips_;
  CVec F_;
  std::vector<char> fixed_;
  CVec fixed_vals_;
  std::vector<int> free_;
  std::vector<int> full_to_free_;
  Eigen::SparseLU<CSpMat> klu_;
  bool assembled_ = false, factorized_ = false;
  CVec lambda_;
};

} // namespace mscg
