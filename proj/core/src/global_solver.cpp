#include "mscg/global_solver.hpp"

#include "mscg/errors.hpp"
#include "mscg/quadrature.hpp"
#include "mscg/shape.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>

namespace mscg {

namespace {
std::atomic<long> g_skeleton_factorizations{0};
std::atomic<long> g_back_substitutions{0};
} // namespace

GlobalSolver::GlobalSolver(GlobalProblem prob, OperatorCache* cache)
    : prob_(std::move(prob)), cache_(cache ? cache : &own_cache_) {
  if (!prob_.cell) throw ConfigError("lattice problem needs a cell builder");
  if (prob_.lat.nx < 1 || prob_.lat.ny < 1)
    throw ConfigError("lattice needs at least one cell");
  if (prob_.face_order < 1) throw ConfigError("face order must be at least 1");
}

int GlobalSolver::n_mult() const {
  return prob_.lat.n_cross() + prob_.lat.n_faces() * (prob_.face_order - 1);
}

int GlobalSolver::cross_dof(int ci, int cj) const {
  return cj * (prob_.lat.nx + 1) + ci;
}

int GlobalSolver::hface_dof0(int i, int j) const {
  int face = j * prob_.lat.nx + i;
  return prob_.lat.n_cross() + face * (prob_.face_order - 1);
}

int GlobalSolver::vface_dof0(int i, int j) const {
  int face = prob_.lat.n_hfaces() + j * (prob_.lat.nx + 1) + i;
  return prob_.lat.n_cross() + face * (prob_.face_order - 1);
}

std::vector<int> GlobalSolver::cell_dofs(int i, int j) const {
  const int pfi = prob_.face_order - 1;
  std::vector<int> dofs;
  dofs.reserve(4 + 4 * pfi);
  dofs.push_back(cross_dof(i, j));
  dofs.push_back(cross_dof(i + 1, j));
  dofs.push_back(cross_dof(i + 1, j + 1));
  dofs.push_back(cross_dof(i, j + 1));
  // Sides 0..3 own the faces below/right/above/left of the cell; canonical
  // side directions coincide with the face parameter directions.
  int starts[4] = {hface_dof0(i, j), vface_dof0(i + 1, j), hface_dof0(i, j + 1),
                   vface_dof0(i, j)};
  for (int s = 0; s < 4; ++s)
    for (int k = 0; k < pfi; ++k) dofs.push_back(starts[s] + k);
  return dofs;
}

void GlobalSolver::assemble() {
  const Lattice& lat = prob_.lat;
  const int n = n_mult();
  ops_.assign(std::size_t(lat.nx) * lat.ny, nullptr);
  recover_.assign(std::size_t(lat.nx) * lat.ny, nullptr);
  insts_.resize(std::size_t(lat.nx) * lat.ny);
  ktrips_.clear();
  F_ = CVec::Zero(n);
  fixed_.assign(n, 0);
  fixed_vals_ = CVec::Zero(n);

  auto ext_bc = [&](bool horizontal, int i, int j) {
    return prob_.exterior_bc ? prob_.exterior_bc(horizontal, i, j)
                             : FaceBC::dirichlet;
  };

  for (int j = 0; j < lat.ny; ++j) {
    for (int i = 0; i < lat.nx; ++i) {
      CondensedCell cc;
      if (prob_.condensed && prob_.condensed(i, j, cc)) {
        bool edge = (j == 0 && ext_bc(true, i, 0) == FaceBC::dirichlet) ||
                    (i == lat.nx - 1 &&
                     ext_bc(false, lat.nx, j) == FaceBC::dirichlet) ||
                    (j == lat.ny - 1 &&
                     ext_bc(true, i, lat.ny) == FaceBC::dirichlet) ||
                    (i == 0 && ext_bc(false, 0, j) == FaceBC::dirichlet);
        if (edge)
          throw ConfigError("condensed cell touches a dirichlet exterior face");
        std::vector<int> g = cell_dofs(i, j);
        if (cc.K.rows() != int(g.size()) || cc.K.cols() != int(g.size()))
          throw ConfigError("condensed coupling block has the wrong size");
        recover_[idx(i, j)] = std::move(cc.recover);
        for (int a = 0; a < int(g.size()); ++a) {
          if (cc.rhs.size()) F_[g[a]] += cc.rhs[a];
          for (int b = 0; b < int(g.size()); ++b)
            ktrips_.emplace_back(g[a], g[b], cc.K(a, b));
        }
        continue;
      }
      CellProblem cp;
      std::string key;
      prob_.cell(i, j, key, cp);
      cp.origin = lat.origin_of(i, j);
      cp.omega = prob_.omega;
      cp.pml = prob_.pml;
      cp.te = prob_.te;
      cp.face_order = prob_.face_order;
      cp.side_modes = {SideMode::multiplier, SideMode::multiplier,
                       SideMode::multiplier, SideMode::multiplier};
      if (j == 0 && ext_bc(true, i, 0) == FaceBC::dirichlet)
        cp.side_modes[0] = SideMode::dirichlet;
      if (i == lat.nx - 1 && ext_bc(false, lat.nx, j) == FaceBC::dirichlet)
        cp.side_modes[1] = SideMode::dirichlet;
      if (j == lat.ny - 1 && ext_bc(true, i, lat.ny) == FaceBC::dirichlet)
        cp.side_modes[2] = SideMode::dirichlet;
      if (i == 0 && ext_bc(false, 0, j) == FaceBC::dirichlet)
        cp.side_modes[3] = SideMode::dirichlet;

      key += "|m";
      for (int s = 0; s < 4; ++s)
        key += cp.side_modes[s] == SideMode::dirichlet ? 'd' : 'm';
      // Absorption depends on the cell position when active there.
      if (prob_.pml.enabled()) {
        double x0 = cp.mesh->corners.col(0).minCoeff() + cp.origin[0];
        double x1 = cp.mesh->corners.col(0).maxCoeff() + cp.origin[0];
        double y0 = cp.mesh->corners.col(1).minCoeff() + cp.origin[1];
        double y1 = cp.mesh->corners.col(1).maxCoeff() + cp.origin[1];
        if (prob_.pml.active_in(x0, y0, x1, y1)) {
          char pos[64];
          std::snprintf(pos, sizeof pos, "|o%.6f,%.6f", cp.origin[0], cp.origin[1]);
          key += pos;
        }
      }

      auto op = cache_->get(key, [&] { return cp; });
      ops_[idx(i, j)] = op;
      insts_[idx(i, j)] = op->make_instance(prob_.source, prob_.dirichlet, cp.origin);

      std::vector<int> g = cell_dofs(i, j);
      const CMat& K = op->coupling();
      for (int a = 0; a < int(g.size()); ++a) {
        F_[g[a]] += insts_[idx(i, j)].rhs[a];
        for (int b = 0; b < int(g.size()); ++b)
          ktrips_.emplace_back(g[a], g[b], K(a, b));
      }
    }
  }

  // Exterior faces: mask dirichlet dofs and pin their cross values; load
  // neumann faces by line quadrature against the face basis.
  const int pf = prob_.face_order;
  LineBasis lb(pf);
  QuadRule1D rule = line_rule(2 * pf + 2);
  Mat lbq = lb.eval(rule.points);

  auto handle_face = [&](bool horizontal, int i, int j) {
    FaceBC bc = ext_bc(horizontal, i, j);
    Vec start = lat.origin_of(i, j);
    Vec dir = horizontal ? lat.a1 : lat.a2;
    int dof0 = horizontal ? hface_dof0(i, j) : vface_dof0(i, j);
    int ca = cross_dof(i, j);
    int cb = horizontal ? cross_dof(i + 1, j) : cross_dof(i, j + 1);
    if (bc == FaceBC::dirichlet) {
      for (int k = 0; k < pf - 1; ++k) {
        fixed_[dof0 + k] = 1;
        fixed_vals_[dof0 + k] = 0.0;
      }
      for (int c : {ca, cb}) {
        fixed_[c] = 1;
        Vec pos = c == ca ? start : Vec(start + dir);
        fixed_vals_[c] = prob_.dirichlet ? prob_.dirichlet(pos[0], pos[1]) : 0.0;
      }
    } else {
      double len = dir.norm();
      for (int q = 0; q < rule.points.size(); ++q) {
        Vec pos = start + rule.points[q] * dir;
        cplx h = prob_.neumann ? prob_.neumann(pos[0], pos[1]) : 0.0;
        cplx w = rule.weights[q] * len * h;
        F_[ca] += w * lbq(q, 0);
        F_[cb] += w * lbq(q, pf);
        for (int k = 0; k < pf - 1; ++k) F_[dof0 + k] += w * lbq(q, k + 1);
      }
    }
  };

  for (int i = 0; i < lat.nx; ++i) {
    handle_face(true, i, 0);
    handle_face(true, i, lat.ny);
  }
  for (int j = 0; j < lat.ny; ++j) {
    handle_face(false, 0, j);
    handle_face(false, lat.nx, j);
  }

  free_.clear();
  full_to_free_.assign(n, -1);
  for (int d = 0; d < n; ++d) {
    if (!fixed_[d]) {
      full_to_free_[d] = int(free_.size());
      free_.push_back(d);
    }
  }
  assembled_ = true;
  factorized_ = false;
}

void GlobalSolver::solve() {
  if (!assembled_) assemble();
  const int n = n_mult();
  const int nf = int(free_.size());
  lambda_ = fixed_vals_;

  if (nf == 0) return;

  std::vector<CTriplet> red;
  red.reserve(ktrips_.size());
  CVec rhs = CVec::Zero(nf);
  for (int d = 0; d < n; ++d)
    if (!fixed_[d]) rhs[full_to_free_[d]] = F_[d];
  for (const auto& t : ktrips_) {
    int r = int(t.row()), c = int(t.col());
    if (fixed_[r]) continue;
    if (fixed_[c])
      rhs[full_to_free_[r]] -= t.value() * fixed_vals_[c];
    else
      red.emplace_back(full_to_free_[r], full_to_free_[c], t.value());
  }

  CSpMat K(nf, nf);
  K.setFromTriplets(red.begin(), red.end());
  klu_.compute(K);
  if (klu_.info() != Eigen::Success)
    throw SolverError("skeleton factorization failed");
  ++g_skeleton_factorizations;
  factorized_ = true;

  CVec sol = klu_.solve(rhs);
  ++g_back_substitutions;
  for (int f = 0; f < nf; ++f) lambda_[free_[f]] = sol[f];
}

CVec GlobalSolver::resolve(const CVec& rhs_full) const {
  const int nf = int(free_.size());
  CVec out = CVec::Zero(n_mult());
  if (nf == 0) return out;
  if (!factorized_) throw SolverError("skeleton system not factorized yet");
  CVec rhs(nf);
  for (int f = 0; f < nf; ++f) rhs[f] = rhs_full[free_[f]];
  CVec sol = klu_.solve(rhs);
  ++g_back_substitutions;
  for (int f = 0; f < nf; ++f) out[free_[f]] = sol[f];
  return out;
}

CVec GlobalSolver::cell_lambda(int i, int j) const {
  std::vector<int> g = cell_dofs(i, j);
  CVec loc(g.size());
  for (size_t a = 0; a < g.size(); ++a) loc[int(a)] = lambda_[g[a]];
  return loc;
}

CVec GlobalSolver::cell_field(int i, int j) const {
  if (!ops_[idx(i, j)]) return recover_[idx(i, j)](cell_lambda(i, j));
  return ops_[idx(i, j)]->recover(insts_[idx(i, j)], cell_lambda(i, j));
}

std::pair<double, double> GlobalSolver::l2_norms(const SpaceFn& exact) const {
  double err = 0.0, ref = 0.0;
  for (int j = 0; j < prob_.lat.ny; ++j) {
    for (int i = 0; i < prob_.lat.nx; ++i) {
      if (!ops_[idx(i, j)])
        throw SolverError("field norms need full subdomains in every cell");
      CellProblem placed = ops_[idx(i, j)]->problem();
      placed.origin = prob_.lat.origin_of(i, j);
      auto [e2, r2] = l2_error_sq(placed, cell_field(i, j), exact);
      err += e2;
      ref += r2;
    }
  }
  return {std::sqrt(err), std::sqrt(ref)};
}

double GlobalSolver::rel_l2_error(const SpaceFn& exact) const {
  auto [err, ref] = l2_norms(exact);
  return err / ref;
}

long GlobalSolver::factorization_count() { return g_skeleton_factorizations.load(); }
long GlobalSolver::back_substitution_count() { return g_back_substitutions.load(); }

} // namespace mscg
