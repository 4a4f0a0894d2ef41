#include <doctest.h>

#include "mscg/errors.hpp"
#include "mscg/reduced_basis.hpp"
#include "mscg/rng.hpp"

#include <sstream>

using namespace mscg;

namespace {

// Small rod lattice with one design cell, no absorber: cheap enough for
// exhaustive reduced-basis checks.
CrystalConfig mini_cfg() {
  CrystalConfig c;
  c.lat.nx = 4;
  c.lat.ny = 3;
  c.eps_rod = 8.0;
  c.eps_bg = 1.0;
  c.rod_radius = 0.3;
  c.inner_scale = 0.35;
  c.order = 2;
  c.face_order = 3;
  c.spokes = 4;
  c.rings_fixed = 1;
  c.rings_collar = 1;
  c.rings_outer = 1;
  c.omega = 1.5;
  c.src_center = (Vec(2) << 0.5, 1.5).finished();
  c.src_width = 0.15;
  c.design_cells = {{2, 1}};
  c.random_cells = {{1, 1}};
  c.output_cells = {{3, 1}};
  c.theta_lo = -0.08;
  c.theta_hi = 0.05;
  return c;
}

CellParams draw_params(const CrystalConfig& cfg, std::uint64_t seed, int index) {
  CellParams p;
  p.i = cfg.design_cells.front().first;
  p.j = cfg.design_cells.front().second;
  p.theta = rng_uniform(seed, 0, index, cfg.theta_lo, cfg.theta_hi);
  p.z = Vec(cfg.kl.n_coeffs);
  for (int k = 0; k < cfg.kl.n_coeffs; ++k)
    p.z[k] = rng_uniform(seed, 1 + k, index, -std::sqrt(3.0), std::sqrt(3.0));
  return p;
}

} // namespace

TEST_CASE("greedy interpolation recovers low-rank field families") {
  const int dim = 40, cols = 12;
  Mat base(dim, 3);
  for (int i = 0; i < dim; ++i)
    for (int k = 0; k < 3; ++k)
      base(i, k) = rng_uniform(11, k, i, -1.0, 1.0);
  Mat fields(dim, cols);
  for (int j = 0; j < cols; ++j) {
    double s = rng_uniform(12, 0, j, -2.0, 2.0);
    double t = rng_uniform(12, 1, j, -2.0, 2.0);
    fields.col(j) = base.col(0) + s * base.col(1) + t * base.col(2);
  }

  DeimData dd = deim_pick(fields, 1e-10);
  CHECK(int(dd.rows.size()) == dd.modes.cols());
  CHECK(dd.modes.cols() == 3);
  CHECK(dd.fit_error < 1e-12);

  // A fresh member of the family is recovered exactly from its magic rows.
  Vec fresh = base.col(0) + 0.77 * base.col(1) - 1.31 * base.col(2);
  Vec at_rows(dd.rows.size());
  for (size_t r = 0; r < dd.rows.size(); ++r) at_rows[r] = fresh[dd.rows[r]];
  Vec rebuilt = dd.modes * dd.interp.partialPivLu().solve(at_rows);
  CHECK((rebuilt - fresh).cwiseAbs().maxCoeff() < 1e-10 * fresh.cwiseAbs().maxCoeff());

  // Identical columns collapse to a single mode.
  Mat flat = fields.col(0).replicate(1, 5);
  CHECK(deim_pick(flat, 1e-10).modes.cols() == 1);

  // A mode cap below the family rank makes the tolerance unreachable.
  Mat noise(dim, 5);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < 5; ++j) noise(i, j) = rng_uniform(13, j, i, -1.0, 1.0);
  CHECK_THROWS_AS(deim_pick(noise, 1e-14, 3), SolverError);
}

TEST_CASE("tableau terms rebuild the mapped cell operator") {
  Crystal cr(mini_cfg());
  CellParams p = draw_params(cr.config(), 21, 4);
  CellProblem prob = cr.cell_problem(p.i, p.j, &p);
  QuadTableau tab = quad_tableau(prob);

  SpMat rebuilt = grad_term(*prob.mesh, tab, grad_field(tab, prob.map));
  SpMat mass = mass_term(*prob.mesh, tab, det_field(tab, prob.map));
  rebuilt -= (prob.omega * prob.omega) * mass;

  CSpMat full = assemble_matrix(prob);
  Mat diff = Mat(full.real()) - Mat(rebuilt);
  CHECK(diff.norm() < 1e-12 * Mat(rebuilt).norm());
  CHECK(Mat(full.imag()).norm() == 0.0);  // absorption-free cell
}

TEST_CASE("coefficient interpolation is exact at magic points and on training maps") {
  Crystal cr(mini_cfg());
  const CrystalConfig& cfg = cr.config();
  MapFamily fam = [&cr](const CellParams& q) { return cr.map_for(q); };
  CellProblem tmpl = cr.cell_problem(2, 1);
  QuadTableau tab = quad_tableau(tmpl);

  std::vector<CellParams> train = rb_training_params(cfg, 8, true, 303);
  AffineExpansion aff = deim_build(tmpl, fam, train, 1e-6);
  CHECK(aff.grad_fit < 1e-6);
  CHECK(aff.det_fit < 1e-6);
  CHECK(int(aff.grad_region.size()) == aff.Q());
  CHECK(int(aff.det_region.size()) == aff.K());

  for (int t : {0, 3, 7}) {
    RadialMap map = fam(train[t]);
    Vec g = grad_field(tab, map);
    Vec d = det_field(tab, map);
    Vec gc = aff.grad_coefs(map);
    Vec dc = aff.det_coefs(map);
    Vec grec = aff.grad_modes * gc;
    Vec drec = aff.det_modes * dc;
    CHECK((grec - g).cwiseAbs().maxCoeff() < 2e-6 * g.cwiseAbs().maxCoeff());
    CHECK((drec - d).cwiseAbs().maxCoeff() < 2e-6 * d.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("snapshots are the interior traces of the harmonic lifts") {
  Crystal cr(mini_cfg());
  const CrystalConfig& cfg = cr.config();
  MapFamily fam = [&cr](const CellParams& q) { return cr.map_for(q); };
  CellProblem tmpl = cr.cell_problem(2, 1);
  Subdomain sub(tmpl);
  const std::vector<int>& in = sub.interior_nodes();
  int n_mult = sub.n_mult();

  TrainingSet train;
  train.params = {CellParams{2, 1, 0.0, Vec()}, draw_params(cfg, 31, 1),
                  draw_params(cfg, 31, 2)};
  train.omegas = {cfg.omega};
  Mat snaps = snapshot_generate(tmpl, fam, train, nullptr, 2);
  REQUIRE(snaps.rows() == int(in.size()));
  REQUIRE(snaps.cols() == 3 * n_mult);

  // Unmapped block: matches the template's lift family directly.
  for (int k = 0; k < n_mult; ++k)
    for (size_t r = 0; r < in.size(); ++r)
      CHECK(snaps(r, k) == doctest::Approx(sub.lifts()(in[r], k).real()).epsilon(1e-9).scale(1.0));

  // Mapped block: matches the lifts of the overlaid subdomain.
  Subdomain mapped(cr.cell_problem(2, 1, &train.params[2]));
  double worst = 0;
  for (int k = 0; k < n_mult; ++k)
    for (size_t r = 0; r < in.size(); ++r)
      worst = std::max(worst, std::abs(snaps(r, 2 * n_mult + k) -
                                       mapped.lifts()(in[r], k).real()));
  CHECK(worst < 1e-9);
}

TEST_CASE("compression yields an energy-orthonormal decreasing basis") {
  Crystal cr(mini_cfg());
  const CrystalConfig& cfg = cr.config();
  MapFamily fam = [&cr](const CellParams& q) { return cr.map_for(q); };
  CellProblem tmpl = cr.cell_problem(2, 1);
  QuadTableau tab = quad_tableau(tmpl);

  std::vector<CellParams> plist = rb_training_params(cfg, 5, true, 404);
  TrainingSet train;
  train.params = plist;
  train.omegas = {0.98 * cfg.omega, cfg.omega};
  Mat snaps = snapshot_generate(tmpl, fam, train, nullptr, 2);
  AffineExpansion aff = deim_build(tmpl, fam, plist, 1e-8);
  ReducedModel rm = pod_compress(tmpl, aff, snaps, 40);
  REQUIRE(rm.n_max == 40);
  REQUIRE(rm.n_mult == 12);

  for (int n = 1; n < int(rm.sing.size()); ++n) CHECK(rm.sing[n] <= rm.sing[n - 1]);

  // Energy weight: reference-cell stiffness plus mass on the interior block.
  Vec id3 = Vec::Zero(3 * tab.n_points());
  id3.head(tab.n_points()).setOnes();
  id3.segment(tab.n_points(), tab.n_points()).setOnes();
  SpMat W = grad_term(*tmpl.mesh, tab, id3);
  W += mass_term(*tmpl.mesh, tab, Vec::Ones(tab.n_points()));
  Mat Wii(rm.interior.size(), rm.interior.size());
  Mat Wd = Mat(W);
  for (size_t a = 0; a < rm.interior.size(); ++a)
    for (size_t b = 0; b < rm.interior.size(); ++b)
      Wii(a, b) = Wd(rm.interior[a], rm.interior[b]);
  Mat gram = rm.basis.transpose() * Wii * rm.basis;
  CHECK((gram - Mat::Identity(rm.n_max, rm.n_max)).cwiseAbs().maxCoeff() < 1e-10);

  // A constant snapshot family has a one-dimensional spectrum.
  Mat flat = snaps.col(0).replicate(1, 6);
  ReducedModel one = pod_compress(tmpl, aff, flat, 1);
  CHECK(one.n_max == 1);
  if (one.sing.size() > 1) CHECK(one.sing[1] < 1e-12 * one.sing[0]);
}

TEST_CASE("reduced condensation reproduces the full coupling on training data") {
  Crystal cr(mini_cfg());
  const CrystalConfig& cfg = cr.config();
  MapFamily fam = [&cr](const CellParams& q) { return cr.map_for(q); };
  CellProblem tmpl = cr.cell_problem(2, 1);

  std::vector<CellParams> plist = rb_training_params(cfg, 6, true, 505);
  TrainingSet train;
  train.params = plist;
  train.omegas = {cfg.omega};
  AffineExpansion aff = deim_build(tmpl, fam, plist, 1e-12);
  Mat snaps = snapshot_generate(tmpl, fam, train, nullptr, 2);
  ReducedModel rm = pod_compress(tmpl, aff, snaps, int(snaps.cols()));

  const CellParams& q = plist[3];
  Subdomain full(cr.cell_problem(2, 1, &q));
  RbCondensed rc = rb_condense(rm, fam, q, cfg.omega, rm.n_max);
  double rel = (rc.K - full.coupling()).norm() / full.coupling().norm();
  CHECK(rel < 1e-8);
  CHECK((rc.K - rc.K.transpose()).norm() == 0.0);

  // Recovery agrees with the full subdomain field for arbitrary traces.
  CVec lam = CVec::Zero(rm.n_mult);
  for (int k = 0; k < rm.n_mult; ++k)
    lam[k] = cplx(rng_uniform(61, 0, k, -1.0, 1.0), rng_uniform(61, 1, k, -1.0, 1.0));
  Subdomain::Instance inst = full.make_instance(nullptr, nullptr, tmpl.origin);
  CVec u_full = full.recover(inst, lam);
  CVec u_rb = rb_recover(rm, rc, lam);
  CHECK((u_rb - u_full).norm() < 1e-8 * u_full.norm());

  CHECK_THROWS_AS(rb_condense(rm, fam, q, cfg.omega, 0), ConfigError);
  CHECK_THROWS_AS(rb_condense(rm, fam, q, cfg.omega, rm.n_max + 1), ConfigError);
}

TEST_CASE("held-out condensation error shrinks as the basis grows") {
  Crystal cr(mini_cfg());
  const CrystalConfig& cfg = cr.config();
  MapFamily fam = [&cr](const CellParams& q) { return cr.map_for(q); };
  CellProblem tmpl = cr.cell_problem(2, 1);

  RbTrainOptions opt;
  opt.n_param = 48;
  opt.n_omega = 2;
  opt.deim_tol = 1e-8;
  opt.n_max = 500;  // clamped to the snapshot rank
  opt.seed = 606;
  opt.workers = 2;
  ReducedModel rm = rb_train(cr, opt);
  REQUIRE(rm.n_max > 8);

  auto val_err = [&](int N) {
    double worst = 0;
    for (int d = 0; d < 5; ++d) {
      CellParams q = draw_params(cfg, 71, d);
      Subdomain full(cr.cell_problem(2, 1, &q));
      RbCondensed rc = rb_condense(rm, fam, q, cfg.omega, N);
      worst = std::max(worst,
                       (rc.K - full.coupling()).norm() / full.coupling().norm());
    }
    return worst;
  };
  double coarse = val_err(4);
  double fine = val_err(rm.n_max);
  CHECK(fine < coarse);
  CHECK(fine < 5e-2);
}

TEST_CASE("reduced lattice solve matches the full solve on a training point") {
  Crystal cr(mini_cfg());
  const CrystalConfig& cfg = cr.config();

  RbTrainOptions opt;
  opt.n_param = 6;
  opt.n_omega = 2;
  opt.omega_lo = 0.98 * cfg.omega;
  opt.omega_hi = cfg.omega;  // drive frequency is a training frequency
  opt.deim_tol = 1e-12;
  opt.n_max = 600;
  opt.seed = 2026;
  opt.workers = 2;
  ReducedModel rm = rb_train(cr, opt);
  CHECK(rm.tmpl_hash == template_hash(cr.cell_problem(2, 1)));
  CHECK(rm.n_param == 6);
  CHECK(rm.n_omega == 2);

  std::vector<CellParams> train = rb_training_params(cfg, 6, true, 2026);
  CellParams q = train[4];
  q.i = 2;
  q.j = 1;
  std::vector<CellParams> overlays = {q};

  GlobalSolver gs_full(cr.problem(overlays));
  gs_full.assemble();
  gs_full.solve();

  GlobalProblem red = rb_problem(cr, rm, cfg.omega, overlays, rm.n_max);
  GlobalSolver gs_rb(red);
  gs_rb.assemble();
  gs_rb.solve();
  CHECK(gs_rb.cell_is_condensed(2, 1));
  CHECK(!gs_rb.cell_is_condensed(1, 1));

  double p_full = output_power(gs_full, cfg.output_cells);
  double p_rb = output_power(gs_rb, cfg.output_cells);
  CHECK(p_rb == doctest::Approx(p_full).epsilon(1e-6));

  CVec u_full = gs_full.cell_field(2, 1);
  CVec u_rb = gs_rb.cell_field(2, 1);
  CHECK((u_rb - u_full).norm() < 1e-6 * u_full.norm());

  SpaceFn zero = [](double, double) { return cplx(0.0, 0.0); };
  CHECK_THROWS_AS(gs_rb.l2_norms(zero), SolverError);
}

TEST_CASE("model persistence round-trips and guards the template") {
  Crystal cr(mini_cfg());
  const CrystalConfig& cfg = cr.config();
  MapFamily fam = [&cr](const CellParams& q) { return cr.map_for(q); };
  CellProblem tmpl = cr.cell_problem(2, 1);

  RbTrainOptions opt;
  opt.n_param = 4;
  opt.n_omega = 1;
  opt.deim_tol = 1e-8;
  opt.n_max = 20;
  opt.seed = 808;
  opt.workers = 2;
  ReducedModel rm = rb_train(cr, opt);

  std::stringstream ss;
  save_model(ss, rm);
  std::string blob = ss.str();

  std::stringstream in(blob);
  ReducedModel back = load_model(in, tmpl);
  std::stringstream again;
  save_model(again, back);
  CHECK(again.str() == blob);

  CellParams q = draw_params(cfg, 91, 0);
  RbCondensed a = rb_condense(rm, fam, q, cfg.omega, rm.n_max);
  RbCondensed b = rb_condense(back, fam, q, cfg.omega, back.n_max);
  CHECK((a.K - b.K).norm() == 0.0);

  CellProblem other = tmpl;
  other.eps_rod = 9.0;
  std::stringstream in2(blob);
  CHECK_THROWS_AS(load_model(in2, other), ConfigError);

  std::stringstream empty;
  CHECK_THROWS_AS(load_model(empty, tmpl), ConfigError);
}

TEST_CASE("training draws are deterministic and live in the design box") {
  CrystalConfig cfg = mini_cfg();
  std::vector<CellParams> a = rb_training_params(cfg, 50, true, 1234);
  std::vector<CellParams> b = rb_training_params(cfg, 50, true, 1234);
  std::vector<CellParams> c = rb_training_params(cfg, 50, true, 4321);
  REQUIRE(a.size() == 51);
  CHECK(a[0].theta == 0.0);
  bool all_same = true, any_diff = false;
  for (size_t k = 0; k < a.size(); ++k) {
    all_same = all_same && a[k].theta == b[k].theta && a[k].z == b[k].z;
    any_diff = any_diff || a[k].theta != c[k].theta;
    CHECK(a[k].theta >= cfg.theta_lo);
    CHECK(a[k].theta <= cfg.theta_hi);
    if (a[k].z.size()) {
      REQUIRE(a[k].z.size() == cfg.kl.n_coeffs);
      CHECK(a[k].z.cwiseAbs().maxCoeff() <= std::sqrt(3.0));
    }
  }
  CHECK(all_same);
  CHECK(any_diff);

  std::vector<CellParams> t = rb_training_params(cfg, 20, false, 1234);
  for (const CellParams& p : t)
    if (p.z.size()) CHECK(p.z.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reduction refuses absorbing templates") {
  Crystal cr(gaas_line_defect(9, 9, 2, 4));
  CellProblem absorbing = cr.cell_problem(0, 0);
  MapFamily fam = [&cr](const CellParams& q) { return cr.map_for(q); };
  std::vector<CellParams> train = {CellParams{0, 0, 0.0, Vec()}};
  CHECK_THROWS_AS(deim_build(absorbing, fam, train, 1e-6), ConfigError);
  TrainingSet ts;
  ts.params = train;
  ts.omegas = {cr.config().omega};
  CHECK_THROWS_AS(snapshot_generate(absorbing, fam, ts), ConfigError);

  // Overlay targets are validated before any reduced data is touched.
  ReducedModel dummy;
  CHECK_THROWS_AS(rb_problem(cr, dummy, cr.config().omega,
                             {CellParams{0, 0, 0.0, Vec()}}, 1),
                  ConfigError);  // absorbing ring
  CHECK_THROWS_AS(rb_problem(cr, dummy, cr.config().omega,
                             {CellParams{4, 4, 0.0, Vec()}}, 1),
                  ConfigError);  // defect cell has no rod
}
