#include "mscg/reduced_basis.hpp"

#include "mscg/errors.hpp"
#include "mscg/rng.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

namespace mscg {

namespace {

const double kSqrt3 = 1.7320508075688772935;

void run_parallel(int n, int workers, const std::function<void(int)>& body) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex guard;
  std::vector<std::thread> pool;
  const int nt = std::min(workers, n);
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(guard);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

void check_unstretched(const CellProblem& tmpl) {
  if (!tmpl.pml.enabled()) return;
  const CellMesh& mesh = *tmpl.mesh;
  double x0 = mesh.corners.col(0).minCoeff() + tmpl.origin[0];
  double x1 = mesh.corners.col(0).maxCoeff() + tmpl.origin[0];
  double y0 = mesh.corners.col(1).minCoeff() + tmpl.origin[1];
  double y1 = mesh.corners.col(1).maxCoeff() + tmpl.origin[1];
  if (tmpl.pml.active_in(x0, y0, x1, y1))
    throw ConfigError("reduced models cannot cover absorbing cells");
}

// Sparse blocks of a symmetric cell matrix split by the interior/boundary
// node partition.
struct SplitBlocks {
  SpMat II, IB, BB;
};

SplitBlocks split_blocks(const SpMat& A, const CellMesh& mesh,
                         const std::vector<int>& slot) {
  std::vector<Triplet> tII, tIB, tBB;
  for (int col = 0; col < A.outerSize(); ++col) {
    for (SpMat::InnerIterator it(A, col); it; ++it) {
      int r = int(it.row()), c = int(it.col());
      bool rb = mesh.on_boundary[r], cb = mesh.on_boundary[c];
      if (!rb && !cb)
        tII.emplace_back(slot[r], slot[c], it.value());
      else if (!rb && cb)
        tIB.emplace_back(slot[r], slot[c], it.value());
      else if (rb && cb)
        tBB.emplace_back(slot[r], slot[c], it.value());
    }
  }
  int nI = 0, nB = 0;
  for (int v = 0; v < mesh.n_nodes(); ++v) (mesh.on_boundary[v] ? nB : nI)++;
  SplitBlocks out;
  out.II.resize(nI, nI);
  out.II.setFromTriplets(tII.begin(), tII.end());
  out.IB.resize(nI, nB);
  out.IB.setFromTriplets(tIB.begin(), tIB.end());
  out.BB.resize(nB, nB);
  out.BB.setFromTriplets(tBB.begin(), tBB.end());
  return out;
}

std::vector<int> node_slots(const CellMesh& mesh) {
  std::vector<int> slot(mesh.n_nodes());
  int nI = 0, nB = 0;
  for (int v = 0; v < mesh.n_nodes(); ++v)
    slot[v] = mesh.on_boundary[v] ? nB++ : nI++;
  return slot;
}

} // namespace

// ---------------------------------------------------------------------------
// Coefficient fields and affine-term assembly.
// ---------------------------------------------------------------------------

Vec grad_field(const QuadTableau& tab, const RadialMap& map) {
  const int n = tab.n_points();
  Vec out(3 * n);
  for (int p = 0; p < n; ++p) {
    MapJet jet = map.eval(tab.Xref.row(p).transpose(), tab.region[p]);
    out[p] = jet.weak(0, 0);
    out[n + p] = jet.weak(1, 1);
    out[2 * n + p] = jet.weak(0, 1);
  }
  return out;
}

Vec det_field(const QuadTableau& tab, const RadialMap& map) {
  const int n = tab.n_points();
  Vec out(n);
  for (int p = 0; p < n; ++p)
    out[p] = map.eval(tab.Xref.row(p).transpose(), tab.region[p]).det;
  return out;
}

SpMat grad_term(const CellMesh& mesh, const QuadTableau& tab, const Vec& g3) {
  const int npts = tab.n_points();
  const int nq = npts / mesh.n_elems();
  const int nb = tab.nb;
  std::vector<Triplet> trips;
  trips.reserve(std::size_t(mesh.n_elems()) * nb * nb);
  Mat Ae(nb, nb);
  for (int e = 0; e < mesh.n_elems(); ++e) {
    Ae.setZero();
    for (int q = 0; q < nq; ++q) {
      int p = e * nq + q;
      double G00 = g3[p], G11 = g3[npts + p], G01 = g3[2 * npts + p];
      double c = tab.weight[p] * tab.rho[p];
      const Mat& gx = tab.grad[p];
      for (int i = 0; i < nb; ++i) {
        double gi0 = G00 * gx(i, 0) + G01 * gx(i, 1);
        double gi1 = G01 * gx(i, 0) + G11 * gx(i, 1);
        for (int j = 0; j < nb; ++j)
          Ae(i, j) += c * (gi0 * gx(j, 0) + gi1 * gx(j, 1));
      }
    }
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nb; ++j)
        trips.emplace_back(mesh.conn(e, i), mesh.conn(e, j), Ae(i, j));
  }
  SpMat A(mesh.n_nodes(), mesh.n_nodes());
  A.setFromTriplets(trips.begin(), trips.end());
  return A;
}

SpMat mass_term(const CellMesh& mesh, const QuadTableau& tab, const Vec& g) {
  const int npts = tab.n_points();
  const int nq = npts / mesh.n_elems();
  const int nb = tab.nb;
  std::vector<Triplet> trips;
  trips.reserve(std::size_t(mesh.n_elems()) * nb * nb);
  Mat Ae(nb, nb);
  for (int e = 0; e < mesh.n_elems(); ++e) {
    Ae.setZero();
    for (int q = 0; q < nq; ++q) {
      int p = e * nq + q;
      double c = tab.weight[p] * tab.mass[p] * g[p];
      for (int i = 0; i < nb; ++i)
        for (int j = 0; j < nb; ++j)
          Ae(i, j) += c * tab.shape(p, i) * tab.shape(p, j);
    }
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nb; ++j)
        trips.emplace_back(mesh.conn(e, i), mesh.conn(e, j), Ae(i, j));
  }
  SpMat A(mesh.n_nodes(), mesh.n_nodes());
  A.setFromTriplets(trips.begin(), trips.end());
  return A;
}

// ---------------------------------------------------------------------------
// Empirical interpolation.
// ---------------------------------------------------------------------------

namespace {

double deim_error(const Mat& fields, const Mat& U, const std::vector<int>& rows,
                  int m, double scale) {
  Mat Pm(m, m), Fm(m, fields.cols());
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) Pm(i, j) = U(rows[i], j);
    Fm.row(i) = fields.row(rows[i]);
  }
  Mat C = Pm.partialPivLu().solve(Fm);
  double err = (fields - U.leftCols(m) * C).cwiseAbs().maxCoeff();
  return err / scale;
}

} // namespace

DeimData deim_pick(const Mat& fields, double tol, int max_modes) {
  if (fields.cols() < 1 || fields.rows() < 1)
    throw ConfigError("empty interpolation training set");
  const double scale = fields.cwiseAbs().maxCoeff();
  if (scale <= 0.0) throw SolverError("interpolation training fields vanish");

  Eigen::BDCSVD<Mat> svd(fields, Eigen::ComputeThinU);
  const Vec& sv = svd.singularValues();
  int rank = 0;
  while (rank < sv.size() && sv[rank] > sv[0] * 1e-13) ++rank;
  int cap = max_modes > 0 ? std::min(max_modes, rank) : rank;
  const Mat& U = svd.matrixU();

  // Greedy magic rows: each mode's row maximizes the residual against the
  // interpolation built from the previous modes.
  std::vector<int> rows;
  rows.reserve(cap);
  for (int m = 0; m < cap; ++m) {
    Vec r = U.col(m);
    if (m > 0) {
      Mat Pm(m, m);
      Vec um(m);
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) Pm(i, j) = U(rows[i], j);
        um[i] = U(rows[i], m);
      }
      r -= U.leftCols(m) * Pm.partialPivLu().solve(um);
    }
    int best = 0;
    r.cwiseAbs().maxCoeff(&best);
    rows.push_back(best);
  }

  // Smallest mode count under the tolerance: exponential growth, then
  // bisection on the (practically monotone) training error.
  int lo = 0, hi = 0;  // err(lo) >= tol, err(hi) < tol
  double err_hi = deim_error(fields, U, rows, cap, scale);
  if (err_hi >= tol)
    throw SolverError("interpolation tolerance unreachable with the training set");
  for (int m = 1; m < cap; m *= 2) {
    double e = deim_error(fields, U, rows, m, scale);
    if (e < tol) {
      hi = m;
      err_hi = e;
      break;
    }
    lo = m;
  }
  if (hi == 0) hi = cap;
  while (hi - lo > 1) {
    int mid = (lo + hi) / 2;
    double e = deim_error(fields, U, rows, mid, scale);
    if (e < tol) {
      hi = mid;
      err_hi = e;
    } else {
      lo = mid;
    }
  }

  DeimData out;
  out.modes = U.leftCols(hi);
  out.rows.assign(rows.begin(), rows.begin() + hi);
  out.interp.resize(hi, hi);
  for (int i = 0; i < hi; ++i)
    for (int j = 0; j < hi; ++j) out.interp(i, j) = U(rows[i], j);
  out.fit_error = err_hi;
  return out;
}

AffineExpansion deim_build(const CellProblem& tmpl, const MapFamily& family,
                           const std::vector<CellParams>& train, double tol) {
  check_unstretched(tmpl);
  if (train.empty()) throw ConfigError("empty training parameter set");
  QuadTableau tab = quad_tableau(tmpl);
  const int npts = tab.n_points();
  const int M = int(train.size());

  Mat FG(3 * npts, M), Fg(npts, M);
  for (int m = 0; m < M; ++m) {
    RadialMap map = family(train[m]);
    FG.col(m) = grad_field(tab, map);
    Fg.col(m) = det_field(tab, map);
  }

  DeimData dg = deim_pick(FG, tol);
  DeimData dd = deim_pick(Fg, tol);

  AffineExpansion aff;
  aff.grad_modes = std::move(dg.modes);
  aff.det_modes = std::move(dd.modes);
  aff.grad_interp = std::move(dg.interp);
  aff.det_interp = std::move(dd.interp);
  aff.grad_fit = dg.fit_error;
  aff.det_fit = dd.fit_error;

  const int Q = int(dg.rows.size()), K = int(dd.rows.size());
  aff.grad_X.resize(Q, 2);
  aff.grad_region.resize(Q);
  aff.grad_comp.resize(Q);
  for (int q = 0; q < Q; ++q) {
    int row = dg.rows[q];
    int comp = row / npts, p = row % npts;
    aff.grad_X.row(q) = tab.Xref.row(p);
    aff.grad_region[q] = tab.region[p];
    aff.grad_comp[q] = comp;
  }
  aff.det_X.resize(K, 2);
  aff.det_region.resize(K);
  for (int k = 0; k < K; ++k) {
    int p = dd.rows[k];
    aff.det_X.row(k) = tab.Xref.row(p);
    aff.det_region[k] = tab.region[p];
  }
  return aff;
}

Vec AffineExpansion::grad_coefs(const RadialMap& map) const {
  const int Q = this->Q();
  Vec vals(Q);
  for (int q = 0; q < Q; ++q) {
    MapJet jet = map.eval(grad_X.row(q).transpose(), grad_region[q]);
    vals[q] = grad_comp[q] == 0   ? jet.weak(0, 0)
              : grad_comp[q] == 1 ? jet.weak(1, 1)
                                  : jet.weak(0, 1);
  }
  return grad_interp.partialPivLu().solve(vals);
}

Vec AffineExpansion::det_coefs(const RadialMap& map) const {
  const int K = this->K();
  Vec vals(K);
  for (int k = 0; k < K; ++k)
    vals[k] = map.eval(det_X.row(k).transpose(), det_region[k]).det;
  return det_interp.partialPivLu().solve(vals);
}

Vec AffineExpansion::grad_coefs_dparam(const RadialMap& map, int param) const {
  const int Q = this->Q();
  Vec vals(Q);
  for (int q = 0; q < Q; ++q) {
    MapJet jet = map.param_derivative(grad_X.row(q).transpose(), grad_region[q], param);
    vals[q] = grad_comp[q] == 0   ? jet.weak(0, 0)
              : grad_comp[q] == 1 ? jet.weak(1, 1)
                                  : jet.weak(0, 1);
  }
  return grad_interp.partialPivLu().solve(vals);
}

Vec AffineExpansion::det_coefs_dparam(const RadialMap& map, int param) const {
  const int K = this->K();
  Vec vals(K);
  for (int k = 0; k < K; ++k)
    vals[k] =
        map.param_derivative(det_X.row(k).transpose(), det_region[k], param).det;
  return det_interp.partialPivLu().solve(vals);
}

// ---------------------------------------------------------------------------
// Snapshots and POD.
// ---------------------------------------------------------------------------

Mat snapshot_generate(const CellProblem& tmpl, const MapFamily& family,
                      const TrainingSet& train, const SpaceFn& f, int workers) {
  check_unstretched(tmpl);
  if (train.params.empty() || train.omegas.empty())
    throw ConfigError("empty snapshot training set");
  const CellMesh& mesh = *tmpl.mesh;
  QuadTableau tab = quad_tableau(tmpl);
  std::vector<int> slot = node_slots(mesh);

  Subdomain sub(tmpl);
  Mat P = sub.boundary_map().real();
  const std::vector<int>& interior = sub.interior_nodes();
  const int nI = int(interior.size());
  const int W = int(train.omegas.size());
  const int per_pair = sub.n_mult() + (f ? 1 : 0);

  std::vector<Mat> blocks(train.params.size());
  run_parallel(int(train.params.size()), workers, [&](int m) {
    RadialMap map = family(train.params[m]);
    SpMat Sg = grad_term(mesh, tab, grad_field(tab, map));
    SpMat Tm = mass_term(mesh, tab, det_field(tab, map));
    SplitBlocks S = split_blocks(Sg, mesh, slot);
    SplitBlocks T = split_blocks(Tm, mesh, slot);

    Vec F_I;
    if (f) {
      CellProblem placed = tmpl;
      placed.map = map;
      CVec F = assemble_load(placed, f);
      F_I.resize(nI);
      for (int i = 0; i < nI; ++i) F_I[i] = F[interior[i]].real();
    }

    Mat block(nI, std::size_t(W) * per_pair);
    int col = 0;
    for (int w = 0; w < W; ++w) {
      double w2 = train.omegas[w] * train.omegas[w];
      SpMat A_II = S.II - w2 * T.II;
      Eigen::SparseLU<SpMat> lu(A_II);
      if (lu.info() != Eigen::Success) {
        std::fprintf(stderr,
                     "snapshot pair (param %d, omega %.6g) skipped: "
                     "interior operator singular\n",
                     m, train.omegas[w]);
        block.middleCols(col, per_pair).setZero();
        col += per_pair;
        continue;
      }
      Mat rhs = -((S.IB - w2 * T.IB) * P);
      block.middleCols(col, sub.n_mult()) = lu.solve(rhs);
      col += sub.n_mult();
      if (f) block.col(col++) = lu.solve(F_I);
    }
    blocks[m] = std::move(block);
  });

  Mat Y(nI, std::size_t(train.params.size()) * W * per_pair);
  int at = 0;
  for (const Mat& b : blocks) {
    Y.middleCols(at, int(b.cols())) = b;
    at += int(b.cols());
  }
  return Y;
}

ReducedModel pod_compress(const CellProblem& tmpl, const AffineExpansion& aff,
                          const Mat& snapshots, int n_max) {
  check_unstretched(tmpl);
  if (n_max < 1) throw ConfigError("reduced basis size must be positive");
  if (aff.grad_modes.cols() == 0)
    throw ConfigError("affine expansion is missing its offline modes");
  const CellMesh& mesh = *tmpl.mesh;
  QuadTableau tab = quad_tableau(tmpl);
  std::vector<int> slot = node_slots(mesh);

  Subdomain sub(tmpl);
  Mat P = sub.boundary_map().real();
  const int nI = int(sub.interior_nodes().size());
  if (snapshots.rows() != nI)
    throw ConfigError("snapshot rows do not match the template interior");

  // Energy inner product of the unperturbed cell: stiffness plus mass.
  RadialMap id = RadialMap::identity();
  SpMat Wm = grad_term(mesh, tab, grad_field(tab, id)) +
             mass_term(mesh, tab, det_field(tab, id));
  SpMat W_II = split_blocks(Wm, mesh, slot).II;
  Eigen::SimplicialLLT<SpMat> llt(W_II);
  if (llt.info() != Eigen::Success)
    throw SolverError("energy weight factorization failed");

  Mat Z = llt.matrixU() * (llt.permutationP() * snapshots);
  Eigen::BDCSVD<Mat> svd(Z, Eigen::ComputeThinU);
  const Vec& sv = svd.singularValues();
  int rank = 0;
  while (rank < sv.size() && sv[rank] > sv[0] * 1e-13) ++rank;
  if (rank < 1) throw SolverError("snapshot set has no energy content");
  if (n_max > rank) {
    std::fprintf(stderr,
                 "reduced basis truncated: %d modes requested, snapshot rank %d\n",
                 n_max, rank);
    n_max = rank;
  }

  ReducedModel rm;
  rm.affine = aff;
  rm.sing = sv.head(rank);
  rm.basis.resize(nI, n_max);
  for (int n = 0; n < n_max; ++n)
    rm.basis.col(n) =
        llt.permutationPinv() * Mat(llt.matrixU().solve(svd.matrixU().col(n)));
  rm.lift = P;
  rm.interior = sub.interior_nodes();
  rm.boundary = sub.boundary_nodes();
  rm.n_max = n_max;
  rm.n_mult = sub.n_mult();
  rm.tmpl_hash = template_hash(tmpl);

  auto project = [&](const SpMat& A, std::vector<Mat>& rr, std::vector<Mat>& re,
                     std::vector<Mat>& ee) {
    SplitBlocks b = split_blocks(A, mesh, slot);
    rr.push_back(rm.basis.transpose() * (b.II * rm.basis));
    re.push_back(rm.basis.transpose() * (b.IB * P));
    ee.push_back(P.transpose() * (b.BB * P));
  };
  for (int q = 0; q < aff.Q(); ++q)
    project(grad_term(mesh, tab, aff.grad_modes.col(q)), rm.S_rr, rm.S_re,
            rm.S_ee);
  for (int k = 0; k < aff.K(); ++k)
    project(mass_term(mesh, tab, aff.det_modes.col(k)), rm.T_rr, rm.T_re,
            rm.T_ee);
  return rm;
}

// ---------------------------------------------------------------------------
// Online condensation.
// ---------------------------------------------------------------------------

RbCondensed rb_condense(const ReducedModel& rm, const MapFamily& family,
                        const CellParams& params, double omega, int N) {
  if (N < 1 || N > rm.n_max)
    throw ConfigError("reduced basis size out of range");
  RadialMap map = family(params);
  Vec s = rm.affine.grad_coefs(map);
  Vec t = rm.affine.det_coefs(map);
  const int nm = rm.n_mult;
  const double w2 = omega * omega;

  Mat Ahat = Mat::Zero(N, N), Bhat = Mat::Zero(N, nm),
      Kee = Mat::Zero(nm, nm);
  for (int q = 0; q < int(s.size()); ++q) {
    Ahat += s[q] * rm.S_rr[q].topLeftCorner(N, N);
    Bhat += s[q] * rm.S_re[q].topRows(N);
    Kee += s[q] * rm.S_ee[q];
  }
  for (int k = 0; k < int(t.size()); ++k) {
    Ahat -= (w2 * t[k]) * rm.T_rr[k].topLeftCorner(N, N);
    Bhat -= (w2 * t[k]) * rm.T_re[k].topRows(N);
    Kee -= (w2 * t[k]) * rm.T_ee[k];
  }

  RbCondensed rc;
  rc.chat = -Ahat.partialPivLu().solve(Bhat);
  Mat Kn = Kee + Bhat.transpose() * rc.chat;
  Kn = 0.5 * (Kn + Kn.transpose()).eval();
  rc.K = Kn.cast<cplx>();
  return rc;
}

CVec rb_recover(const ReducedModel& rm, const RbCondensed& rc,
                const CVec& lambda) {
  const int n = int(rm.interior.size() + rm.boundary.size());
  const int N = int(rc.chat.rows());
  Vec lr = lambda.real(), li = lambda.imag();
  Vec br = rm.lift * lr, bi = rm.lift * li;
  Vec ur = rm.basis.leftCols(N) * (rc.chat * lr);
  Vec ui = rm.basis.leftCols(N) * (rc.chat * li);
  CVec u = CVec::Zero(n);
  for (std::size_t b = 0; b < rm.boundary.size(); ++b)
    u[rm.boundary[b]] = cplx(br[int(b)], bi[int(b)]);
  for (std::size_t i = 0; i < rm.interior.size(); ++i)
    u[rm.interior[i]] = cplx(ur[int(i)], ui[int(i)]);
  return u;
}

// ---------------------------------------------------------------------------
// Training driver and lattice integration.
// ---------------------------------------------------------------------------

std::vector<CellParams> rb_training_params(const CrystalConfig& cfg, int count,
                                           bool with_modes, std::uint64_t seed) {
  std::vector<CellParams> out;
  out.reserve(count + 1);
  out.push_back({});  // the unperturbed cell anchors the family
  const int D = cfg.kl.n_coeffs;
  for (int d = 1; d <= count; ++d) {
    CellParams p;
    p.theta = rng_uniform(seed, 0, d, cfg.theta_lo, cfg.theta_hi);
    if (with_modes) {
      p.z = Vec(D);
      for (int k = 0; k < D; ++k)
        p.z[k] = rng_uniform(seed, 1 + k, d, -kSqrt3, kSqrt3);
    }
    out.push_back(std::move(p));
  }
  return out;
}

CellIndex rb_home_cell(const Crystal& cr) {
  const CrystalConfig& cfg = cr.config();
  if (!cfg.design_cells.empty()) return cfg.design_cells.front();
  if (!cfg.random_cells.empty()) return cfg.random_cells.front();
  for (int j = 0; j < cfg.lat.ny; ++j)
    for (int i = 0; i < cfg.lat.nx; ++i)
      if (!cr.is_defect(i, j) && !cr.in_absorber(i, j)) return {i, j};
  throw ConfigError("crystal has no rod cell to train a reduced model on");
}

ReducedModel rb_train(const Crystal& cr, const RbTrainOptions& opt) {
  const CrystalConfig& cfg = cr.config();
  CellIndex home = rb_home_cell(cr);
  CellProblem tmpl = cr.cell_problem(home.first, home.second);

  std::vector<CellParams> params =
      rb_training_params(cfg, opt.n_param, opt.with_modes, opt.seed);
  MapFamily family = [&cr](const CellParams& p) { return cr.map_for(p); };

  AffineExpansion aff = deim_build(tmpl, family, params, opt.deim_tol);

  double lo = opt.omega_lo > 0.0 ? opt.omega_lo : cfg.omega * 0.995;
  double hi = opt.omega_hi > 0.0 ? opt.omega_hi : cfg.omega * 1.005;
  std::vector<double> omegas;
  if (opt.n_omega <= 1) {
    omegas.push_back(0.5 * (lo + hi));
  } else {
    for (int w = 0; w < opt.n_omega; ++w)
      omegas.push_back(lo + (hi - lo) * w / (opt.n_omega - 1));
  }

  Mat Y = snapshot_generate(tmpl, family, {params, omegas}, nullptr,
                            opt.workers);
  ReducedModel rm = pod_compress(tmpl, aff, Y, opt.n_max);
  rm.omega_lo = lo;
  rm.omega_hi = hi;
  rm.theta_lo = cfg.theta_lo;
  rm.theta_hi = cfg.theta_hi;
  rm.n_param = opt.n_param;
  rm.n_omega = opt.n_omega;
  rm.n_modes = opt.with_modes ? cfg.kl.n_coeffs : 0;
  rm.deim_tol = opt.deim_tol;
  return rm;
}

GlobalProblem rb_problem(const Crystal& cr, const ReducedModel& rm,
                         double omega, const std::vector<CellParams>& overlays,
                         int N) {
  auto omap = std::make_shared<std::map<CellIndex, CellParams>>();
  for (const CellParams& p : overlays) {
    if (cr.is_defect(p.i, p.j))
      throw ConfigError("reduced cell (" + std::to_string(p.i) + ", " +
                        std::to_string(p.j) + ") has no rod");
    if (cr.in_absorber(p.i, p.j))
      throw ConfigError("reduced cell (" + std::to_string(p.i) + ", " +
                        std::to_string(p.j) + ") lies in the absorbing ring");
    (*omap)[{p.i, p.j}] = p;
  }

  GlobalProblem gp = cr.problem_at(omega);
  const Crystal* pc = &cr;
  const ReducedModel* pm = &rm;
  gp.condensed = [pc, pm, omap, omega, N](int i, int j, CondensedCell& out) {
    auto it = omap->find({i, j});
    if (it == omap->end()) return false;
    MapFamily family = [pc](const CellParams& p) { return pc->map_for(p); };
    auto rc = std::make_shared<RbCondensed>(
        rb_condense(*pm, family, it->second, omega, N));
    out.K = rc->K;
    out.recover = [pm, rc](const CVec& lam) { return rb_recover(*pm, *rc, lam); };
    return true;
  };
  return gp;
}

// ---------------------------------------------------------------------------
// Persistence.
// ---------------------------------------------------------------------------

namespace {

const char kMagic[8] = {'M', 'S', 'C', 'G', 'R', 'B', '1', '\n'};

std::uint64_t fnv_bytes(std::uint64_t h, const void* data, std::size_t n) {
  const unsigned char* b = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

template <class T>
std::uint64_t fnv_pod(std::uint64_t h, const T& v) {
  return fnv_bytes(h, &v, sizeof v);
}

void wr(std::ostream& os, const void* data, std::size_t n) {
  os.write(static_cast<const char*>(data), std::streamsize(n));
}
void wr_i64(std::ostream& os, std::int64_t v) { wr(os, &v, sizeof v); }
void wr_u64(std::ostream& os, std::uint64_t v) { wr(os, &v, sizeof v); }
void wr_f64(std::ostream& os, double v) { wr(os, &v, sizeof v); }
void wr_mat(std::ostream& os, const Mat& m) {
  wr(os, m.data(), sizeof(double) * std::size_t(m.size()));
}
void wr_vec(std::ostream& os, const Vec& v) {
  wr(os, v.data(), sizeof(double) * std::size_t(v.size()));
}

void rd(std::istream& is, void* data, std::size_t n) {
  is.read(static_cast<char*>(data), std::streamsize(n));
  if (!is) throw ConfigError("truncated reduced-model file");
}
std::int64_t rd_i64(std::istream& is) {
  std::int64_t v;
  rd(is, &v, sizeof v);
  return v;
}
std::uint64_t rd_u64(std::istream& is) {
  std::uint64_t v;
  rd(is, &v, sizeof v);
  return v;
}
double rd_f64(std::istream& is) {
  double v;
  rd(is, &v, sizeof v);
  return v;
}
Mat rd_mat(std::istream& is, int rows, int cols) {
  Mat m(rows, cols);
  rd(is, m.data(), sizeof(double) * std::size_t(m.size()));
  return m;
}
Vec rd_vec(std::istream& is, int n) {
  Vec v(n);
  rd(is, v.data(), sizeof(double) * std::size_t(v.size()));
  return v;
}

} // namespace

std::uint64_t template_hash(const CellProblem& tmpl) {
  const CellMesh& mesh = *tmpl.mesh;
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = fnv_pod(h, mesh.order);
  std::int64_t nn = mesh.n_nodes(), ne = mesh.n_elems();
  h = fnv_pod(h, nn);
  h = fnv_pod(h, ne);
  h = fnv_bytes(h, mesh.nodes.data(), sizeof(double) * std::size_t(mesh.nodes.size()));
  h = fnv_bytes(h, mesh.conn.data(), sizeof(int) * std::size_t(mesh.conn.size()));
  h = fnv_bytes(h, mesh.material.data(), sizeof(int) * mesh.material.size());
  h = fnv_pod(h, tmpl.te);
  h = fnv_pod(h, tmpl.face_order);
  h = fnv_pod(h, tmpl.eps_rod);
  h = fnv_pod(h, tmpl.eps_bg);
  return h;
}

void save_model(std::ostream& os, const ReducedModel& rm) {
  wr(os, kMagic, sizeof kMagic);
  wr_u64(os, rm.tmpl_hash);
  const int nI = int(rm.interior.size()), nB = int(rm.boundary.size());
  for (std::int64_t v : {std::int64_t(rm.n_max), std::int64_t(rm.n_mult),
                         std::int64_t(nI), std::int64_t(nB),
                         std::int64_t(rm.affine.Q()), std::int64_t(rm.affine.K()),
                         std::int64_t(rm.sing.size()), std::int64_t(rm.n_param),
                         std::int64_t(rm.n_omega), std::int64_t(rm.n_modes)})
    wr_i64(os, v);
  for (double v : {rm.omega_lo, rm.omega_hi, rm.theta_lo, rm.theta_hi,
                   rm.deim_tol, rm.affine.grad_fit, rm.affine.det_fit})
    wr_f64(os, v);

  wr_vec(os, rm.sing);
  wr_mat(os, rm.basis);
  wr_mat(os, rm.lift);
  for (int v : rm.interior) wr_i64(os, v);
  for (int v : rm.boundary) wr_i64(os, v);

  const AffineExpansion& a = rm.affine;
  wr_mat(os, a.grad_X);
  for (MapRegion r : a.grad_region) wr_i64(os, std::int64_t(r));
  for (int c : a.grad_comp) wr_i64(os, c);
  wr_mat(os, a.grad_interp);
  wr_mat(os, a.det_X);
  for (MapRegion r : a.det_region) wr_i64(os, std::int64_t(r));
  wr_mat(os, a.det_interp);

  for (int q = 0; q < a.Q(); ++q) {
    wr_mat(os, rm.S_rr[q]);
    wr_mat(os, rm.S_re[q]);
    wr_mat(os, rm.S_ee[q]);
  }
  for (int k = 0; k < a.K(); ++k) {
    wr_mat(os, rm.T_rr[k]);
    wr_mat(os, rm.T_re[k]);
    wr_mat(os, rm.T_ee[k]);
  }
}

ReducedModel load_model(std::istream& is, const CellProblem& tmpl) {
  char magic[8];
  rd(is, magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw ConfigError("not a reduced-model file");
  ReducedModel rm;
  rm.tmpl_hash = rd_u64(is);
  if (rm.tmpl_hash != template_hash(tmpl))
    throw ConfigError("reduced model was trained for a different template");
  rm.n_max = int(rd_i64(is));
  rm.n_mult = int(rd_i64(is));
  const int nI = int(rd_i64(is)), nB = int(rd_i64(is));
  const int Q = int(rd_i64(is)), K = int(rd_i64(is));
  const int ns = int(rd_i64(is));
  rm.n_param = int(rd_i64(is));
  rm.n_omega = int(rd_i64(is));
  rm.n_modes = int(rd_i64(is));
  rm.omega_lo = rd_f64(is);
  rm.omega_hi = rd_f64(is);
  rm.theta_lo = rd_f64(is);
  rm.theta_hi = rd_f64(is);
  rm.deim_tol = rd_f64(is);
  rm.affine.grad_fit = rd_f64(is);
  rm.affine.det_fit = rd_f64(is);

  rm.sing = rd_vec(is, ns);
  rm.basis = rd_mat(is, nI, rm.n_max);
  rm.lift = rd_mat(is, nB, rm.n_mult);
  rm.interior.resize(nI);
  for (int& v : rm.interior) v = int(rd_i64(is));
  rm.boundary.resize(nB);
  for (int& v : rm.boundary) v = int(rd_i64(is));

  AffineExpansion& a = rm.affine;
  a.grad_X = rd_mat(is, Q, 2);
  a.grad_region.resize(Q);
  for (MapRegion& r : a.grad_region) r = MapRegion(rd_i64(is));
  a.grad_comp.resize(Q);
  for (int& c : a.grad_comp) c = int(rd_i64(is));
  a.grad_interp = rd_mat(is, Q, Q);
  a.det_X = rd_mat(is, K, 2);
  a.det_region.resize(K);
  for (MapRegion& r : a.det_region) r = MapRegion(rd_i64(is));
  a.det_interp = rd_mat(is, K, K);

  for (int q = 0; q < Q; ++q) {
    rm.S_rr.push_back(rd_mat(is, rm.n_max, rm.n_max));
    rm.S_re.push_back(rd_mat(is, rm.n_max, rm.n_mult));
    rm.S_ee.push_back(rd_mat(is, rm.n_mult, rm.n_mult));
  }
  for (int k = 0; k < K; ++k) {
    rm.T_rr.push_back(rd_mat(is, rm.n_max, rm.n_max));
    rm.T_re.push_back(rd_mat(is, rm.n_max, rm.n_mult));
    rm.T_ee.push_back(rd_mat(is, rm.n_mult, rm.n_mult));
  }
  return rm;
}

} // namespace mscg
