#include <doctest.h>

#include "mscg/kl_radius.hpp"
#include "mscg/local_solver.hpp"
#include "mscg/shape.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>

using namespace mscg;

namespace {

constexpr double kWave = 6.0;
const double kAngle = pi / 4.0;

cplx exact_u(double x, double y) {
  double xi = x * std::cos(kAngle) + y * std::sin(kAngle);
  return x * x + y * y + std::sin(kWave * xi);
}

cplx source_f(double x, double y) {
  double xi = x * std::cos(kAngle) + y * std::sin(kAngle);
  return (kWave * kWave - 1.0) * std::sin(kWave * xi) - 4.0 - x * x - y * y;
}

CellProblem square_problem(int m, int order, int pf) {
  CellProblem prob;
  prob.mesh = std::make_shared<CellMesh>(structured_cell_mesh(m, order, 1.0));
  prob.omega = 1.0;
  prob.face_order = pf;
  return prob;
}

Mat rod_corners() {
  Mat c(4, 2);
  c << 0, 0, 1, 0, 1, 1, 0, 1;
  return c;
}

CellProblem rod_problem(double theta, const Vec& z, const KLRadius* kl) {
  CellProblem prob;
  prob.mesh = std::make_shared<CellMesh>(
      trellis_cell_mesh(rod_corners(), 0.4, 0.25, 4, 1, 2, 2, 2));
  Vec c(2);
  c << 0.5, 0.5;
  prob.map = RadialMap(rod_corners(), c, 0.4, 0.25, kl, theta, z);
  prob.eps_rod = 11.4;
  prob.omega = 2 * pi * 0.38;
  prob.face_order = 6;
  return prob;
}

} // namespace

TEST_CASE("assembled operator matches first-order reference formulas") {
  for (bool te : {false, true}) {
    CellProblem prob = square_problem(3, 1, 1);
    prob.eps_bg = 2.5;
    prob.te = te;
    prob.omega = 1.7;
    CMat A = CMat(assemble_matrix(prob));

    const CellMesh& mesh = *prob.mesh;
    double rho = prob.rho_of(0), kappa2 = prob.kappa2_of(0);
    CMat ref = CMat::Zero(mesh.n_nodes(), mesh.n_nodes());
    for (int e = 0; e < mesh.n_elems(); ++e) {
      // Straight triangles carry the classical P1 stiffness/mass formulas.
      Vec a = mesh.vertices.row(mesh.tris(e, 0)).transpose();
      Vec b = mesh.vertices.row(mesh.tris(e, 1)).transpose();
      Vec c = mesh.vertices.row(mesh.tris(e, 2)).transpose();
      double area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]));
      Mat g(3, 2); // gradients of the barycentric functions
      g.row(0) << (b[1] - c[1]) / (2 * area), (c[0] - b[0]) / (2 * area);
      g.row(1) << (c[1] - a[1]) / (2 * area), (a[0] - c[0]) / (2 * area);
      g.row(2) << (a[1] - b[1]) / (2 * area), (b[0] - a[0]) / (2 * area);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          double stiff = rho * area * g.row(i).dot(g.row(j));
          double mass = kappa2 * area / 12.0 * (i == j ? 2.0 : 1.0);
          ref(mesh.conn(e, i), mesh.conn(e, j)) += stiff - mass;
        }
    }
    CHECK((A - ref).norm() < 1e-12 * ref.norm());
  }
}

TEST_CASE("absorption profile: inactive cases and composed consistency") {
  CellProblem plain = square_problem(2, 2, 2);
  CSpMat A0 = assemble_matrix(plain);

  // Ramps that never reach this cell leave the operator untouched.
  CellProblem far = plain;
  far.pml.strength = 25.0;
  far.pml.x_lo = -3.0;
  far.pml.x_hi = 4.0;
  far.pml.wx = 1.0;
  far.pml.y_lo = -3.0;
  far.pml.y_hi = 4.0;
  far.pml.wy = 1.0;
  CHECK((CMat(assemble_matrix(far)) - CMat(A0)).norm() == 0.0);

  // A vanishingly weak layer over the cell reproduces the real path.
  CellProblem weak = plain;
  weak.pml.strength = 1e-14;
  weak.pml.x_lo = -1.0;
  weak.pml.x_hi = 0.5;
  weak.pml.wx = 1.0;
  CMat Aw = CMat(assemble_matrix(weak));
  CHECK((Aw - CMat(A0)).norm() < 1e-10 * CMat(A0).norm());

  // A genuine layer produces a complex symmetric operator with damping.
  CellProblem strong = weak;
  strong.pml.strength = 20.0;
  CMat As = CMat(assemble_matrix(strong));
  CHECK(As.imag().norm() > 1e-3 * As.real().norm());
  CHECK((As - As.transpose()).norm() < 1e-12 * As.norm());
}

TEST_CASE("condensed coupling equals the dense Schur complement") {
  CellProblem prob = square_problem(2, 2, 3);
  Subdomain sub(prob);

  const CellMesh& mesh = *prob.mesh;
  CMat A = CMat(sub.matrix());
  const auto& In = sub.interior_nodes();
  const auto& Bn = sub.boundary_nodes();
  int nI = int(In.size()), nB = int(Bn.size());
  CMat A_II(nI, nI), A_IB(nI, nB), A_BI(nB, nI), A_BB(nB, nB);
  for (int i = 0; i < nI; ++i)
    for (int j = 0; j < nI; ++j) A_II(i, j) = A(In[i], In[j]);
  for (int i = 0; i < nI; ++i)
    for (int j = 0; j < nB; ++j) A_IB(i, j) = A(In[i], Bn[j]);
  for (int i = 0; i < nB; ++i)
    for (int j = 0; j < nI; ++j) A_BI(i, j) = A(Bn[i], In[j]);
  for (int i = 0; i < nB; ++i)
    for (int j = 0; j < nB; ++j) A_BB(i, j) = A(Bn[i], Bn[j]);

  CMat S = A_BB - A_BI * A_II.inverse() * A_IB;
  CMat K_ref = sub.boundary_map().transpose() * S * sub.boundary_map();
  CHECK((CMat(sub.coupling()) - K_ref).norm() < 1e-10 * K_ref.norm());
  CHECK((CMat(sub.coupling()) - CMat(sub.coupling()).transpose()).norm() <
        1e-12 * K_ref.norm());

  // Lift columns are discrete-harmonic: interior residual vanishes.
  CMat AU = A * sub.lifts();
  double interior_resid = 0.0;
  for (int i : In) interior_resid += AU.row(i).norm();
  CHECK(interior_resid < 1e-9);

  CHECK(mesh.n_nodes() == 25);
  CHECK(sub.n_mult() == 4 + 4 * 2);
}

TEST_CASE("square trace space makes the condensed solve match direct FE") {
  // With face order = nodes-per-side - 1 the trace sampling matrix is
  // square and invertible, so the interface formulation reproduces the
  // plain FE solution with natural boundary conditions exactly.
  CellProblem prob = square_problem(2, 2, 4);
  Subdomain sub(prob);
  CHECK(int(sub.boundary_nodes().size()) == sub.n_mult());

  auto inst = sub.make_instance(source_f, nullptr, prob.origin);
  CVec lambda = sub.coupling().partialPivLu().solve(inst.rhs);
  CVec u_mscg = sub.recover(inst, lambda);

  CVec F = assemble_load(prob, source_f);
  Eigen::SparseLU<CSpMat> lu(sub.matrix());
  REQUIRE(lu.info() == Eigen::Success);
  CVec u_fe = lu.solve(F);

  CHECK((u_mscg - u_fe).norm() < 1e-9 * u_fe.norm());
}

TEST_CASE("single-cell dirichlet solve converges at the expected rate") {
  double errs[2];
  int idx = 0;
  for (int n : {8, 16}) {
    CellProblem prob = square_problem(n, 2, 1);
    prob.side_modes = {SideMode::dirichlet, SideMode::dirichlet, SideMode::dirichlet,
                       SideMode::dirichlet};
    Subdomain sub(prob);
    auto inst = sub.make_instance(source_f, exact_u, prob.origin);
    CVec u = sub.recover(inst, CVec::Zero(sub.n_mult()));
    auto [err2, ref2] = l2_error_sq(prob, u, exact_u);
    errs[idx++] = std::sqrt(err2 / ref2);
  }
  // Third-order accuracy for quadratic elements; magnitudes near the
  // expected plateau for this wave number.
  CHECK(errs[0] < 1.0e-3);
  CHECK(errs[0] > 2.0e-4);
  double order = std::log2(errs[0] / errs[1]);
  CHECK(order > 2.7);
  CHECK(order < 3.3);
}

TEST_CASE("operator derivative matches finite differences") {
  KLRadius kl;
  Vec z(11);
  z << 0.6, -0.8, 0.3, 1.0, -0.2, 0.5, -1.1, 0.15, 0.7, -0.45, 0.3;
  double theta = 0.02;

  for (int param : {-1, 2}) {
    CellProblem base = rod_problem(theta, z, &kl);
    CSpMat dA = assemble_matrix_derivative(base, param);

    double h = 1e-5;
    double tp = theta, tm = theta;
    Vec zp = z, zm = z;
    if (param < 0) {
      tp += h;
      tm -= h;
    } else {
      zp[param] += h;
      zm[param] -= h;
    }
    CMat Ap = CMat(assemble_matrix(rod_problem(tp, zp, &kl)));
    CMat Am = CMat(assemble_matrix(rod_problem(tm, zm, &kl)));
    CMat fd = (Ap - Am) / (2 * h);
    CHECK((CMat(dA) - fd).norm() < 1e-6 * fd.norm());
  }

  // Zero perturbation leaves the trellis cell operator equal to the
  // unmapped one.
  CellProblem fixed = rod_problem(0.0, Vec::Zero(11), &kl);
  CellProblem none = fixed;
  none.map = RadialMap::identity();
  CHECK((CMat(assemble_matrix(fixed)) - CMat(assemble_matrix(none))).norm() <
        1e-10 * CMat(assemble_matrix(none)).norm());
}

TEST_CASE("energy flux matrix integrates a plane wave") {
  CellProblem prob = square_problem(8, 2, 1);
  const CellMesh& mesh = *prob.mesh;
  double k = 3.0;
  CVec v(mesh.n_nodes());
  for (int i = 0; i < mesh.n_nodes(); ++i)
    v[i] = std::exp(cplx(0.0, k * mesh.nodes(i, 0)));
  Mat B = flux_matrix(prob);
  cplx q = v.adjoint() * (B * v);
  double flux = (cplx(0, 1) * q).real();
  // exp(ikx): Re[i u d/dx conj(u)] = k over the unit cell.
  CHECK(flux == doctest::Approx(k).epsilon(2e-4));
}

TEST_CASE("flux matrix derivative matches finite differences") {
  KLRadius kl;
  Vec z(11);
  z << 0.2, -0.4, 0.9, 0.1, -0.6, 0.35, -0.2, 0.5, -0.15, 0.25, -0.3;
  double h = 1e-5;
  for (int param : {-1, 3}) {
    CellProblem base = rod_problem(0.01, z, &kl);
    Mat dB = flux_matrix_derivative(base, param);
    double tp = 0.01, tm = 0.01;
    Vec zp = z, zm = z;
    if (param < 0) {
      tp += h;
      tm -= h;
    } else {
      zp[param] += h;
      zm[param] -= h;
    }
    Mat fd = (flux_matrix(rod_problem(tp, zp, &kl)) -
              flux_matrix(rod_problem(tm, zm, &kl))) /
             (2 * h);
    CHECK((dB - fd).norm() < 1e-6 * fd.norm());
  }
}

TEST_CASE("operator cache reuses templates without refactorizing") {
  OperatorCache cache;
  auto make = [] { return square_problem(2, 1, 1); };
  auto a = cache.get("cell", make);
  long count = Subdomain::factorization_count();
  auto b = cache.get("cell", make);
  CHECK(a.get() == b.get());
  CHECK(Subdomain::factorization_count() == count);
  auto c = cache.get("other", make);
  CHECK(c.get() != a.get());
  CHECK(Subdomain::factorization_count() == count + 1);
  CHECK(cache.size() == 2);
}
