#include "mscg/local_solver.hpp"

#include "mscg/errors.hpp"
#include "mscg/quadrature.hpp"
#include "mscg/shape.hpp"

#include <atomic>
#include <cmath>

namespace mscg {

namespace {

using C2 = Eigen::Matrix2cd;
using R2 = Eigen::Matrix2d;

std::atomic<long> g_factorizations{0};

constexpr int kSideEnds[4][2] = {{0, 1}, {1, 2}, {3, 2}, {0, 3}};

// Per-element isoparametric data at the quadrature points.
struct ElemGeom {
  Mat coords;       // nb x 2 nodal positions (cell coordinates)
  Mat X;            // nq x 2 quadrature positions
  std::vector<Mat> gradX; // per qp: nb x 2 cell-coordinate basis gradients
  Vec jxw;          // detJ * weight
};

struct AssemblyKit {
  TriangleBasis basis;
  QuadRuleTri rule;
  Mat N, dxi, deta;

  AssemblyKit(int order, int degree) : basis(order), rule(triangle_rule(degree)) {
    N = basis.eval(rule.points);
    basis.eval_grad(rule.points, dxi, deta);
  }

  ElemGeom geom(const CellMesh& mesh, int e) const {
    const int nb = basis.size();
    const int nq = int(rule.points.rows());
    ElemGeom g;
    g.coords.resize(nb, 2);
    for (int i = 0; i < nb; ++i) g.coords.row(i) = mesh.nodes.row(mesh.conn(e, i));
    g.X = N * g.coords;
    g.gradX.resize(nq);
    g.jxw.resize(nq);
    for (int q = 0; q < nq; ++q) {
      Vec gxi = dxi.row(q).transpose(), geta = deta.row(q).transpose();
      R2 J;
      J << gxi.dot(g.coords.col(0)), geta.dot(g.coords.col(0)),
          gxi.dot(g.coords.col(1)), geta.dot(g.coords.col(1));
      double detJ = J.determinant();
      if (detJ <= 0.0) throw SolverError("degenerate element in cell mesh");
      g.jxw[q] = detJ * rule.weights[q];
      R2 JinvT = J.inverse().transpose();
      Mat gref(nb, 2);
      gref.col(0) = dxi.row(q).transpose();
      gref.col(1) = deta.row(q).transpose();
      g.gradX[q] = gref * JinvT.transpose();
    }
    return g;
  }
};

struct PointCoef {
  C2 G;     // gradient coefficient without the material factor
  cplx det; // measure factor
};

C2 stretch_at(const PmlProfile& pml, const Vec& phys, double omega) {
  C2 S = C2::Zero();
  S(0, 0) = pml.sx(phys[0], omega);
  S(1, 1) = pml.sy(phys[1], omega);
  return S;
}

PointCoef coef_value(const MapJet& jet, bool pml_on, const PmlProfile& pml,
                     const Vec& origin, double omega) {
  PointCoef c;
  if (!pml_on) {
    c.G = jet.weak.cast<cplx>();
    c.det = jet.det;
    return c;
  }
  C2 M = stretch_at(pml, origin + jet.x, omega) * jet.grad.cast<cplx>();
  cplx det = M.determinant();
  C2 Minv = M.inverse();
  c.G = det * Minv * Minv.transpose();
  c.det = det;
  return c;
}

// Parameter derivative of the coefficients.  The stretch is treated as
// constant: absorbing layers never overlap parameter-mapped cells.
PointCoef coef_deriv(const MapJet& jet, const MapJet& jet_s, bool pml_on,
                     const PmlProfile& pml, const Vec& origin, double omega) {
  PointCoef c;
  if (!pml_on) {
    c.G = jet_s.weak.cast<cplx>();
    c.det = jet_s.det;
    return c;
  }
  C2 S = stretch_at(pml, origin + jet.x, omega);
  C2 M = S * jet.grad.cast<cplx>();
  C2 dM = S * jet_s.grad.cast<cplx>();
  cplx det = M.determinant();
  C2 Minv = M.inverse();
  cplx ddet = det * (Minv * dM).trace();
  C2 dMinv = -Minv * dM * Minv;
  c.G = ddet * (Minv * Minv.transpose()) +
        det * (dMinv * Minv.transpose() + Minv * dMinv.transpose());
  c.det = ddet;
  return c;
}

bool pml_active(const CellProblem& prob) {
  if (!prob.pml.enabled()) return false;
  double x0 = prob.mesh->corners.col(0).minCoeff() + prob.origin[0];
  double x1 = prob.mesh->corners.col(0).maxCoeff() + prob.origin[0];
  double y0 = prob.mesh->corners.col(1).minCoeff() + prob.origin[1];
  double y1 = prob.mesh->corners.col(1).maxCoeff() + prob.origin[1];
  return prob.pml.active_in(x0, y0, x1, y1);
}

CSpMat assemble_impl(const CellProblem& prob, bool derivative, int param) {
  const CellMesh& mesh = *prob.mesh;
  AssemblyKit kit(mesh.order, 2 * mesh.order + 4);
  const int nb = kit.basis.size();
  const int nq = int(kit.rule.points.rows());
  const bool pml_on = pml_active(prob);

  std::vector<CTriplet> trips;
  trips.reserve(std::size_t(mesh.n_elems()) * nb * nb);
  CMat Ae(nb, nb);

  for (int e = 0; e < mesh.n_elems(); ++e) {
    ElemGeom g = kit.geom(mesh, e);
    double rho = prob.rho_of(mesh.material[e]);
    double kappa2 = prob.kappa2_of(mesh.material[e]);
    Ae.setZero();
    for (int q = 0; q < nq; ++q) {
      Vec X = g.X.row(q).transpose();
      MapJet jet = prob.map.eval(X, mesh.region[e]);
      PointCoef c;
      if (!derivative) {
        c = coef_value(jet, pml_on, prob.pml, prob.origin, prob.omega);
      } else {
        MapJet jet_s = prob.map.param_derivative(X, mesh.region[e], param);
        c = coef_deriv(jet, jet_s, pml_on, prob.pml, prob.origin, prob.omega);
      }
      C2 Cg = rho * c.G;
      cplx cm = c.det * kappa2;
      const Mat& gx = g.gradX[q];
      double w = g.jxw[q];
      for (int i = 0; i < nb; ++i) {
        cplx gi0 = Cg(0, 0) * gx(i, 0) + Cg(0, 1) * gx(i, 1);
        cplx gi1 = Cg(1, 0) * gx(i, 0) + Cg(1, 1) * gx(i, 1);
        for (int j = 0; j < nb; ++j) {
          cplx stiff = gi0 * gx(j, 0) + gi1 * gx(j, 1);
          Ae(i, j) += w * (stiff - cm * kit.N(q, i) * kit.N(q, j));
        }
      }
    }
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nb; ++j)
        trips.emplace_back(mesh.conn(e, i), mesh.conn(e, j), Ae(i, j));
  }

  CSpMat A(mesh.n_nodes(), mesh.n_nodes());
  A.setFromTriplets(trips.begin(), trips.end());
  return A;
}

} // namespace

CSpMat assemble_matrix(const CellProblem& prob) { return assemble_impl(prob, false, 0); }

QuadTableau quad_tableau(const CellProblem& prob) {
  const CellMesh& mesh = *prob.mesh;
  AssemblyKit kit(mesh.order, 2 * mesh.order + 4);
  const int nb = kit.basis.size();
  const int nq = int(kit.rule.points.rows());
  const int npts = mesh.n_elems() * nq;

  QuadTableau tab;
  tab.nb = nb;
  tab.elem.resize(npts);
  tab.Xref.resize(npts, 2);
  tab.region.resize(npts);
  tab.weight.resize(npts);
  tab.rho.resize(npts);
  tab.mass.resize(npts);
  tab.shape.resize(npts, nb);
  tab.grad.resize(npts);

  const double w2 = prob.omega * prob.omega;
  for (int e = 0; e < mesh.n_elems(); ++e) {
    ElemGeom g = kit.geom(mesh, e);
    double rho = prob.rho_of(mesh.material[e]);
    double mass = prob.kappa2_of(mesh.material[e]) / w2;
    for (int q = 0; q < nq; ++q) {
      int p = e * nq + q;
      tab.elem[p] = e;
      tab.Xref.row(p) = g.X.row(q);
      tab.region[p] = mesh.region[e];
      tab.weight[p] = g.jxw[q];
      tab.rho[p] = rho;
      tab.mass[p] = mass;
      tab.shape.row(p) = kit.N.row(q);
      tab.grad[p] = g.gradX[q];
    }
  }
  return tab;
}

CSpMat assemble_matrix_derivative(const CellProblem& prob, int param) {
  return assemble_impl(prob, true, param);
}

CVec assemble_load(const CellProblem& prob, const SpaceFn& f) {
  const CellMesh& mesh = *prob.mesh;
  AssemblyKit kit(mesh.order, 2 * mesh.order + 4);
  const int nb = kit.basis.size();
  const int nq = int(kit.rule.points.rows());
  const bool pml_on = pml_active(prob);

  CVec F = CVec::Zero(mesh.n_nodes());
  for (int e = 0; e < mesh.n_elems(); ++e) {
    ElemGeom g = kit.geom(mesh, e);
    for (int q = 0; q < nq; ++q) {
      Vec X = g.X.row(q).transpose();
      MapJet jet = prob.map.eval(X, mesh.region[e]);
      PointCoef c = coef_value(jet, pml_on, prob.pml, prob.origin, prob.omega);
      cplx fv = f(prob.origin[0] + jet.x[0], prob.origin[1] + jet.x[1]);
      cplx scale = g.jxw[q] * c.det * fv;
      for (int i = 0; i < nb; ++i) F[mesh.conn(e, i)] += scale * kit.N(q, i);
    }
  }
  return F;
}

Mat flux_matrix(const CellProblem& prob) {
  if (pml_active(prob))
    throw SolverError("energy flux requested inside an absorbing layer");
  const CellMesh& mesh = *prob.mesh;
  AssemblyKit kit(mesh.order, 2 * mesh.order + 4);
  const int nb = kit.basis.size();
  const int nq = int(kit.rule.points.rows());

  Mat B = Mat::Zero(mesh.n_nodes(), mesh.n_nodes());
  for (int e = 0; e < mesh.n_elems(); ++e) {
    ElemGeom g = kit.geom(mesh, e);
    double rho = prob.rho_of(mesh.material[e]);
    for (int q = 0; q < nq; ++q) {
      Vec X = g.X.row(q).transpose();
      MapJet jet = prob.map.eval(X, mesh.region[e]);
      R2 IG = jet.grad.inverse().transpose();
      double c = g.jxw[q] * jet.det * rho;
      const Mat& gx = g.gradX[q];
      for (int i = 0; i < nb; ++i) {
        double di = IG(0, 0) * gx(i, 0) + IG(0, 1) * gx(i, 1);
        for (int j = 0; j < nb; ++j)
          B(mesh.conn(e, i), mesh.conn(e, j)) += c * di * kit.N(q, j);
      }
    }
  }
  return B;
}

Mat flux_matrix_derivative(const CellProblem& prob, int param) {
  if (pml_active(prob))
    throw SolverError("energy flux requested inside an absorbing layer");
  const CellMesh& mesh = *prob.mesh;
  AssemblyKit kit(mesh.order, 2 * mesh.order + 4);
  const int nb = kit.basis.size();
  const int nq = int(kit.rule.points.rows());

  Mat B = Mat::Zero(mesh.n_nodes(), mesh.n_nodes());
  for (int e = 0; e < mesh.n_elems(); ++e) {
    ElemGeom g = kit.geom(mesh, e);
    double rho = prob.rho_of(mesh.material[e]);
    for (int q = 0; q < nq; ++q) {
      Vec X = g.X.row(q).transpose();
      MapJet jet = prob.map.eval(X, mesh.region[e]);
      MapJet jet_s = prob.map.param_derivative(X, mesh.region[e], param);
      R2 Ginv = jet.grad.inverse();
      R2 IG = Ginv.transpose();
      R2 dIG = -(Ginv * jet_s.grad * Ginv).transpose();
      double c = g.jxw[q] * jet.det * rho;
      double dc = g.jxw[q] * jet_s.det * rho;
      const Mat& gx = g.gradX[q];
      for (int i = 0; i < nb; ++i) {
        double di = IG(0, 0) * gx(i, 0) + IG(0, 1) * gx(i, 1);
        double ddi = dIG(0, 0) * gx(i, 0) + dIG(0, 1) * gx(i, 1);
        for (int j = 0; j < nb; ++j)
          B(mesh.conn(e, i), mesh.conn(e, j)) +=
              dc * di * kit.N(q, j) + c * ddi * kit.N(q, j);
      }
    }
  }
  return B;
}

std::pair<double, double> l2_error_sq(const CellProblem& prob, const CVec& nodal,
                                      const SpaceFn& exact) {
  const CellMesh& mesh = *prob.mesh;
  AssemblyKit kit(mesh.order, 2 * mesh.order + 6);
  const int nb = kit.basis.size();
  const int nq = int(kit.rule.points.rows());

  double err = 0.0, ref = 0.0;
  for (int e = 0; e < mesh.n_elems(); ++e) {
    ElemGeom g = kit.geom(mesh, e);
    for (int q = 0; q < nq; ++q) {
      Vec X = g.X.row(q).transpose();
      MapJet jet = prob.map.eval(X, mesh.region[e]);
      cplx uh = 0.0;
      for (int i = 0; i < nb; ++i) uh += kit.N(q, i) * nodal[mesh.conn(e, i)];
      cplx ue = exact(prob.origin[0] + jet.x[0], prob.origin[1] + jet.x[1]);
      double w = g.jxw[q] * jet.det;
      err += w * std::norm(uh - ue);
      ref += w * std::norm(ue);
    }
  }
  return {err, ref};
}

std::vector<int> Subdomain::side_dofs(int side) const {
  const int pf = prob_.face_order;
  std::vector<int> dofs;
  dofs.reserve(pf + 1);
  dofs.push_back(cross_dof(kSideEnds[side][0]));
  for (int k = 0; k < pf - 1; ++k) dofs.push_back(4 + side * (pf - 1) + k);
  dofs.push_back(cross_dof(kSideEnds[side][1]));
  return dofs;
}

Subdomain::Subdomain(CellProblem prob) : prob_(std::move(prob)) {
  const CellMesh& mesh = *prob_.mesh;
  A_ = assemble_matrix(prob_);

  slot_.assign(mesh.n_nodes(), -1);
  for (int i = 0; i < mesh.n_nodes(); ++i) {
    if (mesh.on_boundary[i]) {
      slot_[i] = int(boundary_.size());
      boundary_.push_back(i);
    } else {
      slot_[i] = int(interior_.size());
      interior_.push_back(i);
    }
  }
  const int nI = int(interior_.size()), nB = int(boundary_.size());

  std::vector<CTriplet> tII, tIB, tBB, tBI;
  for (int col = 0; col < A_.outerSize(); ++col) {
    for (CSpMat::InnerIterator it(A_, col); it; ++it) {
      int r = int(it.row()), c = int(it.col());
      bool rb = mesh.on_boundary[r], cb = mesh.on_boundary[c];
      if (!rb && !cb)
        tII.emplace_back(slot_[r], slot_[c], it.value());
      else if (!rb && cb)
        tIB.emplace_back(slot_[r], slot_[c], it.value());
      else if (rb && cb)
        tBB.emplace_back(slot_[r], slot_[c], it.value());
      else
        tBI.emplace_back(slot_[r], slot_[c], it.value());
    }
  }
  A_II_.resize(nI, nI);
  A_II_.setFromTriplets(tII.begin(), tII.end());
  A_IB_.resize(nI, nB);
  A_IB_.setFromTriplets(tIB.begin(), tIB.end());
  CSpMat A_BB(nB, nB), A_BI(nB, nI);
  A_BB.setFromTriplets(tBB.begin(), tBB.end());
  A_BI.setFromTriplets(tBI.begin(), tBI.end());

  if (nI > 0) {
    lu_.compute(A_II_);
    if (lu_.info() != Eigen::Success)
      throw SolverError("interior factorization failed");
    ++g_factorizations;
  }

  // Boundary sampling matrix: one owning side per node; dirichlet-side
  // nodes (corners included) keep zero rows and take data directly.
  const int pf = prob_.face_order;
  P_ = CMat::Zero(nB, n_mult());
  std::vector<char> on_dirichlet(mesh.n_nodes(), 0);
  for (int s = 0; s < 4; ++s)
    if (prob_.side_modes[s] == SideMode::dirichlet)
      for (const auto& [node, t] : mesh.side_nodes[s]) on_dirichlet[node] = 1;

  LineBasis lb(pf);
  std::vector<char> written(nB, 0);
  for (int s = 0; s < 4; ++s) {
    if (prob_.side_modes[s] == SideMode::dirichlet) continue;
    const auto& sn = mesh.side_nodes[s];
    Vec params(sn.size());
    for (size_t k = 0; k < sn.size(); ++k) params[int(k)] = sn[k].second;
    Mat vals = lb.eval(params);
    std::vector<int> dofs = side_dofs(s);
    for (size_t k = 0; k < sn.size(); ++k) {
      int node = sn[k].first;
      if (on_dirichlet[node]) continue;
      int row = slot_[node];
      if (written[row]) continue;
      written[row] = 1;
      for (int b = 0; b <= pf; ++b) P_(row, dofs[b]) = vals(int(k), b);
    }
  }

  // Harmonic lifts and the condensed coupling block.
  CMat RB = -(A_IB_ * P_);
  CMat U_I = nI > 0 ? CMat(lu_.solve(RB)) : CMat(0, n_mult());
  U_ = CMat::Zero(mesh.n_nodes(), n_mult());
  for (int i = 0; i < nI; ++i) U_.row(interior_[i]) = U_I.row(i);
  for (int b = 0; b < nB; ++b) U_.row(boundary_[b]) = P_.row(b);
  K_ = P_.transpose() * (A_BB * P_ + A_BI * U_I);
}

Subdomain::Instance Subdomain::make_instance(const SpaceFn& f, const SpaceFn& g,
                                             const Vec& origin) const {
  const CellMesh& mesh = *prob_.mesh;
  const int nI = int(interior_.size()), nB = int(boundary_.size());

  // The operator template may be shared between cells at different positions;
  // data functions must be sampled at this instance's location.
  CellProblem placed = prob_;
  placed.origin = origin;

  CVec F = f ? assemble_load(placed, f) : CVec::Zero(mesh.n_nodes());
  CVec d = CVec::Zero(nB);
  if (g) {
    for (int s = 0; s < 4; ++s) {
      if (prob_.side_modes[s] != SideMode::dirichlet) continue;
      for (const auto& [node, t] : mesh.side_nodes[s])
        d[slot_[node]] = g(origin[0] + mesh.nodes(node, 0), origin[1] + mesh.nodes(node, 1));
    }
  }

  CVec F_I(nI);
  for (int i = 0; i < nI; ++i) F_I[i] = F[interior_[i]];
  CVec u_I = nI > 0 ? CVec(lu_.solve(CVec(F_I - A_IB_ * d))) : CVec(0);

  Instance inst;
  inst.u_p = CVec::Zero(mesh.n_nodes());
  for (int i = 0; i < nI; ++i) inst.u_p[interior_[i]] = u_I[i];
  for (int b = 0; b < nB; ++b) inst.u_p[boundary_[b]] = d[b];

  CVec resid = F - A_ * inst.u_p;
  CVec resid_B(nB);
  for (int b = 0; b < nB; ++b) resid_B[b] = resid[boundary_[b]];
  inst.rhs = P_.transpose() * resid_B;
  return inst;
}

CVec Subdomain::recover(const Instance& inst, const CVec& lambda_local) const {
  return inst.u_p + U_ * lambda_local;
}

CVec Subdomain::interior_solve(const CVec& b_interior) const {
  if (interior_.empty()) return CVec(0);
  return lu_.solve(b_interior);
}

long Subdomain::factorization_count() { return g_factorizations.load(); }

std::shared_ptr<const Subdomain> OperatorCache::get(
    const std::string& key, const std::function<CellProblem()>& make) {
  auto it = store_.find(key);
  if (it != store_.end()) return it->second;
  auto op = std::make_shared<const Subdomain>(make());
  store_.emplace(key, op);
  return op;
}

} // namespace mscg
