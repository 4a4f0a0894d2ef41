#pragma once

#include "mscg/mesh.hpp"
#include "mscg/pml.hpp"
#include "mscg/radial_map.hpp"
#include "mscg/types.hpp"

#include <Eigen/SparseLU>
#include <array>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace mscg {

// Scalar field sampled at physical coordinates.
using SpaceFn = std::function<cplx(double, double)>;

// How a cell side couples to the rest of the domain.  `multiplier` sides
// carry an interface-multiplier expansion (interior faces, and exterior
// faces with flux data); `dirichlet` sides take boundary values directly at
// the finite element nodes.
enum class SideMode : int { multiplier = 0, dirichlet = 1 };

// Everything needed to assemble one subdomain: mesh, geometry map,
// materials, frequency, absorption profile, and the interface layout.
// Material coefficients enter the weak form as
//   (rho G grad u, grad w) - (det kappa^2 u, w) = (det f, w)
// with G the mapped (optionally complex-stretched) gradient coefficient;
// rho = 1, kappa^2 = omega^2 eps for TM polarization and rho = 1/eps,
// kappa^2 = omega^2 for TE.
struct CellProblem {
  std::shared_ptr<const CellMesh> mesh;
  RadialMap map = RadialMap::identity();
  double eps_rod = 1.0;
  double eps_bg = 1.0;
  bool te = false;
  double omega = 1.0;
  PmlProfile pml;
  Vec origin = Vec::Zero(2);
  int face_order = 1;
  std::array<SideMode, 4> side_modes{SideMode::multiplier, SideMode::multiplier,
                                     SideMode::multiplier, SideMode::multiplier};

  double rho_of(int material) const {
    double eps = material == 1 ? eps_rod : eps_bg;
    return te ? 1.0 / eps : 1.0;
  }
  double kappa2_of(int material) const {
    double eps = material == 1 ? eps_rod : eps_bg;
    return te ? omega * omega : omega * omega * eps;
  }
};

// Full cell operator in the reference domain; complex symmetric.
CSpMat assemble_matrix(const CellProblem& prob);

// Derivative of the cell operator with respect to one map parameter
// (param == -1: uniform radius scale; param >= 0: radius mode coefficient).
CSpMat assemble_matrix_derivative(const CellProblem& prob, int param);

// Volume load vector (det-weighted source evaluated at mapped physical
// points, offset by the cell origin).
CVec assemble_load(const CellProblem& prob, const SpaceFn& f);

// Real matrix B with x-directed energy flux  F = Re[i v^H B v]  for nodal
// fields v; requires an absorption-free cell.
Mat flux_matrix(const CellProblem& prob);
Mat flux_matrix_derivative(const CellProblem& prob, int param);

// Flattened tableau of the integration rule behind assemble_matrix, in
// element-major point order.  A matrix assembled per point from these
// weights and basis values with the true pointwise coefficients reproduces
// assemble_matrix; parameter-affine expansions of the coefficient fields
// are sampled on the same points.
struct QuadTableau {
  int nb = 0;                     // basis functions per element
  std::vector<int> elem;          // per point: element index
  Mat Xref;                       // per point: cell-coordinate position
  std::vector<MapRegion> region;  // per point: element region tag
  Vec weight;                     // per point: jacobian * rule weight
  Vec rho;                        // per point: gradient material factor
  Vec mass;                       // per point: kappa^2 / omega^2 factor
  Mat shape;                      // n_points x nb basis values
  std::vector<Mat> grad;          // per point: nb x 2 basis gradients

  int n_points() const { return int(elem.size()); }
};
QuadTableau quad_tableau(const CellProblem& prob);

// Squared physical L2 discrepancy and reference norm over the cell:
// (|u_h - u|^2, |u|^2) with the det-weighted measure.
std::pair<double, double> l2_error_sq(const CellProblem& prob, const CVec& nodal,
                                      const SpaceFn& exact);

// One subdomain statically condensed onto its interface-multiplier trace.
//
// Local multiplier layout: dofs 0..3 are the cross values at cell corners
// 0..3; then each side contributes face_order-1 interior dofs in param
// order.  Boundary node values are  u_B = P lambda + d  where rows of P
// owned by dirichlet sides vanish (those nodes take data d directly), and
// the condensed system is  K lambda = P^T (F - A u_p)|_B  with
// K = P^T (A_BB - A_BI A_II^{-1} A_IB) P.
class Subdomain {
public:
  explicit Subdomain(CellProblem prob);

  const CellProblem& problem() const { return prob_; }
  int n_mult() const { return 4 + 4 * (prob_.face_order - 1); }
  int cross_dof(int corner) const { return corner; }
  // Local multiplier dofs of one side in trace-parameter order
  // (size face_order + 1: start cross, interior dofs, end cross).
  std::vector<int> side_dofs(int side) const;

  const CSpMat& matrix() const { return A_; }
  const CMat& coupling() const { return K_; }
  const CMat& lifts() const { return U_; }        // nodal harmonic lifts
  const CMat& boundary_map() const { return P_; } // n_B x n_mult
  const std::vector<int>& boundary_nodes() const { return boundary_; }
  const std::vector<int>& interior_nodes() const { return interior_; }

  // Per-instance data: particular field (all multipliers zero) and the
  // condensed load it induces.
  struct Instance {
    CVec u_p;
    CVec rhs;
  };
  // Either function may be null: f is the volume source, g the direct
  // boundary data on dirichlet sides (evaluated at physical coordinates).
  Instance make_instance(const SpaceFn& f, const SpaceFn& g, const Vec& origin) const;

  // Nodal field for given local multiplier values.
  CVec recover(const Instance& inst, const CVec& lambda_local) const;

  // Solve A_II x = b_I with the cached factorization.
  CVec interior_solve(const CVec& b_interior) const;

  // Number of sparse factorizations performed since process start (used to
  // verify operator caching).
  static long factorization_count();

private:
  CellProblem prob_;
  CSpMat A_;
  std::vector<int> interior_, boundary_;
  std::vector<int> slot_; // node -> index within its partition
  CSpMat A_II_, A_IB_;
  Eigen::SparseLU<CSpMat> lu_;
  CMat P_, U_, K_;
};

// Keyed store of condensed subdomain templates.
class OperatorCache {
public:
  // Returns the cached operator for `key`, building it on miss.
  std::shared_ptr<const Subdomain> get(const std::string& key,
                                       const std::function<CellProblem()>& make);
  std::size_t size() const { return store_.size(); }
  void clear() { store_.clear(); }

private:
  std::map<std::string, std::shared_ptr<const Subdomain>> store_;
};

} // namespace mscg
