#include "mscg/adjoint_opt.hpp"

#include "mscg/errors.hpp"
#include "mscg/rng.hpp"

#include <Eigen/Eigenvalues>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

namespace mscg {

namespace {

CVec apply_real(const Mat& M, const CVec& v) {
  Vec re = M * v.real();
  Vec im = M * v.imag();
  return re.cast<cplx>() + cplx(0.0, 1.0) * im.cast<cplx>();
}

cplx dotu(const CVec& a, const CVec& b) {  // unconjugated pairing
  return (a.array() * b.array()).sum();
}

CVec gather(const CVec& full, const std::vector<int>& idx) {
  CVec out(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) out[k] = full[idx[k]];
  return out;
}

void check_ports(const CrystalConfig& cfg, const std::vector<CellParams>& ov) {
  for (const CellParams& p : ov)
    for (const CellIndex& c : cfg.output_cells)
      if (p.i == c.first && p.j == c.second)
        throw ConfigError("output port cells cannot carry geometry overlays");
}

// Linearization of  s = sum_i |T_i| / (2 omega)  about the recovered output
// fields: the returned full-size vector g satisfies ds = Re[g^H dLambda].
CVec qoi_linearization(const GlobalSolver& gs, const std::vector<CellIndex>& cells,
                       double omega) {
  CVec g = CVec::Zero(gs.n_mult());
  for (const CellIndex& c : cells) {
    const Subdomain& sub = gs.cell_op(c.first, c.second);
    Mat B = flux_matrix(sub.problem());
    CVec v = gs.cell_field(c.first, c.second);
    CVec Bv = apply_real(B, v);
    CVec Btv = apply_real(B.transpose(), v);
    double flux = (cplx(0.0, 1.0) * dotu(v.conjugate(), Bv)).real();
    double sgn = flux >= 0.0 ? 1.0 : -1.0;
    if (std::abs(flux) < 1e-12)
      std::fprintf(stderr,
                   "note: port flux in cell (%d, %d) sits at the sign "
                   "tie-break, using +\n",
                   c.first, c.second);
    // d|T| = Re[w^H dv] with w = 2 c H v, H = i (B - B^T) / 2.
    CVec w = cplx(0.0, sgn / (2.0 * omega)) * (Bv - Btv);
    CVec gc = sub.lifts().adjoint() * w;
    std::vector<int> dofs = gs.cell_dofs(c.first, c.second);
    for (size_t k = 0; k < dofs.size(); ++k) g[dofs[k]] += gc[k];
  }
  return g;
}

} // namespace

void gauss_legendre(int order, double a, double b, Vec& nodes, Vec& weights) {
  if (order < 1) throw ConfigError("quadrature order must be positive");
  Mat J = Mat::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    double bk = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = J(k - 1, k) = bk;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  nodes = Vec(order);
  weights = Vec(order);
  for (int i = 0; i < order; ++i) {
    nodes[i] = a + 0.5 * (es.eigenvalues()[i] + 1.0) * (b - a);
    double q0 = es.eigenvectors()(0, i);
    weights[i] = 2.0 * q0 * q0 * 0.5 * (b - a);
  }
}

// ---------------------------------------------------------------------------
// Adjoint gradients.
// ---------------------------------------------------------------------------

PowerGradient power_gradient(const Crystal& cr,
                             const std::vector<CellParams>& overlays,
                             double omega) {
  const CrystalConfig& cfg = cr.config();
  check_ports(cfg, overlays);

  GlobalSolver gs(cr.problem_at(omega, overlays));
  gs.assemble();
  gs.solve();

  PowerGradient out;
  out.value = output_power(gs, cfg.output_cells);

  CVec g = qoi_linearization(gs, cfg.output_cells, omega);
  long before = GlobalSolver::back_substitution_count();
  // K is complex symmetric:  Re[g^H dLambda] = Re[psi^T (-dK Lambda)] with
  // K psi = conj(g), reusing the primal factorization.
  CVec psi = gs.resolve(g.conjugate());
  out.adjoint_solves = GlobalSolver::back_substitution_count() - before;

  const int D = cfg.kl.n_coeffs;
  for (const CellParams& p : overlays) {
    const Subdomain& sub = gs.cell_op(p.i, p.j);
    CVec lam = gs.cell_lambda(p.i, p.j);
    CVec psi_m = gather(psi, gs.cell_dofs(p.i, p.j));
    // The condensed coupling is K^m = U^T A U over the harmonic lifts, and
    // its parameter derivative collapses to U^T (dA) U because A U vanishes
    // on the interior rows.
    CVec u = sub.lifts() * lam;
    CVec y = sub.lifts() * psi_m;
    Vec grad(1 + D);
    for (int t = 0; t <= D; ++t) {
      CSpMat dA = assemble_matrix_derivative(sub.problem(), t - 1);
      grad[t] = -dotu(y, dA * u).real();
    }
    out.cell_grad.push_back(std::move(grad));
  }
  return out;
}

PowerGradient power_gradient_rb(const Crystal& cr, const ReducedModel& rm,
                                const std::vector<CellParams>& overlays,
                                double omega, int N) {
  const CrystalConfig& cfg = cr.config();
  check_ports(cfg, overlays);

  GlobalSolver gs(rb_problem(cr, rm, omega, overlays, N));
  gs.assemble();
  gs.solve();

  PowerGradient out;
  out.value = output_power(gs, cfg.output_cells);

  CVec g = qoi_linearization(gs, cfg.output_cells, omega);
  long before = GlobalSolver::back_substitution_count();
  CVec psi = gs.resolve(g.conjugate());
  out.adjoint_solves = GlobalSolver::back_substitution_count() - before;

  MapFamily fam = [&cr](const CellParams& q) { return cr.map_for(q); };
  const int D = cfg.kl.n_coeffs;
  const int Q = rm.affine.Q(), K = rm.affine.K();
  const double w2 = omega * omega;

  for (const CellParams& p : overlays) {
    RbCondensed rc = rb_condense(rm, fam, p, omega, N);
    CVec lam = gs.cell_lambda(p.i, p.j);
    CVec psi_m = gather(psi, gs.cell_dofs(p.i, p.j));
    CVec ur = apply_real(rc.chat, lam);
    CVec yr = apply_real(rc.chat, psi_m);

    // Pairing of each affine block with the lifted reduced states: the
    // derivative of the condensed coupling against one coefficient is the
    // block sandwiched between [chat psi; psi] and [chat lam; lam].
    auto pair_with = [&](const Mat& rr, const Mat& re, const Mat& ee) {
      cplx s = dotu(yr, apply_real(rr.topLeftCorner(N, N), ur));
      s += dotu(yr, apply_real(re.topRows(N), lam));
      s += dotu(psi_m, apply_real(re.topRows(N).transpose(), ur));
      s += dotu(psi_m, apply_real(ee, lam));
      return s;
    };
    std::vector<cplx> aS(Q), aT(K);
    for (int q = 0; q < Q; ++q)
      aS[q] = pair_with(rm.S_rr[q], rm.S_re[q], rm.S_ee[q]);
    for (int k = 0; k < K; ++k)
      aT[k] = pair_with(rm.T_rr[k], rm.T_re[k], rm.T_ee[k]);

    RadialMap map = cr.map_for(p);
    Vec grad(1 + D);
    for (int t = 0; t <= D; ++t) {
      Vec ds = rm.affine.grad_coefs_dparam(map, t - 1);
      Vec dz = rm.affine.det_coefs_dparam(map, t - 1);
      cplx total = 0.0;
      for (int q = 0; q < Q; ++q) total += ds[q] * aS[q];
      for (int k = 0; k < K; ++k) total -= w2 * dz[k] * aT[k];
      grad[t] = -total.real();
    }
    out.cell_grad.push_back(std::move(grad));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Projected BFGS with Armijo backtracking.
// ---------------------------------------------------------------------------

namespace {

struct MinResult {
  Vec x;
  double value = 0.0;
  double proj_grad = 0.0;
  int iters = 0;
  bool converged = false;
  bool line_search_failed = false;
  std::vector<double> trace;
};

// Minimizes m over the box from x0.
MinResult minimize_box(const BoxObjective& m, const Vec& lo, const Vec& hi,
                       const Vec& x0, const OptOptions& opt) {
  const int n = int(lo.size());
  auto clamp = [&](const Vec& v) { return v.cwiseMax(lo).cwiseMin(hi).eval(); };
  const double edge = 1e-12;

  MinResult res;
  Vec x = clamp(x0);
  Vec g(n);
  double fv = m(x, &g);
  res.trace.push_back(fv);
  Mat H = Mat::Identity(n, n);
  double last_step = 0.0;
  auto active_count = [&](const Vec& v) {
    int a = 0;
    for (int i = 0; i < n; ++i)
      if (v[i] <= lo[i] + edge || v[i] >= hi[i] - edge) ++a;
    return a;
  };

  for (int iter = 0; iter < opt.max_iters; ++iter) {
    res.iters = iter;
    Vec pg = g;
    for (int i = 0; i < n; ++i)
      if ((x[i] <= lo[i] + edge && g[i] > 0.0) ||
          (x[i] >= hi[i] - edge && g[i] < 0.0))
        pg[i] = 0.0;
    res.proj_grad = pg.lpNorm<Eigen::Infinity>();
    if (opt.iter_callback)
      opt.iter_callback(iter, fv, res.proj_grad, last_step, active_count(x));
    if (res.proj_grad < opt.grad_tol) {
      res.converged = true;
      break;
    }

    Vec xn(n), gn(n);
    double fn = 0.0;
    auto try_direction = [&](const Vec& d) {
      double t = 1.0;
      for (int bt = 0; bt < opt.max_backtracks; ++bt, t *= 0.5) {
        xn = clamp(x + t * d);
        Vec dx = xn - x;
        if (dx.lpNorm<Eigen::Infinity>() == 0.0) return false;
        fn = m(xn, &gn);
        if (fn <= fv + opt.armijo * g.dot(dx)) return true;
      }
      return false;
    };

    Vec d = -(H * g);
    bool steepest = false;
    if (d.dot(g) >= 0.0) {  // not a descent direction: reset curvature
      H.setIdentity();
      d = -g;
      steepest = true;
    }
    bool ok = try_direction(d);
    if (!ok && !steepest) {  // damped restart along steepest descent
      H.setIdentity();
      ok = try_direction(-g);
    }
    if (!ok) {
      res.line_search_failed = true;
      break;
    }

    Vec s = xn - x, y = gn - g;
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      Mat V = Mat::Identity(n, n) - (s * y.transpose()) / sy;
      H = V * H * V.transpose() + (s * s.transpose()) / sy;
    }
    last_step = s.norm();
    x = xn;
    fv = fn;
    g = gn;
    res.trace.push_back(fv);
  }

  res.x = x;
  res.value = fv;
  return res;
}

} // namespace

OptResult maximize_box(const BoxObjective& f, const Vec& lo, const Vec& hi,
                       const Vec& x0, const OptOptions& opt) {
  if (lo.size() != hi.size() || lo.size() != x0.size() || lo.size() == 0)
    throw ConfigError("inconsistent box bounds");
  if ((hi.array() < lo.array()).any()) throw ConfigError("empty design box");

  BoxObjective neg = [&f](const Vec& x, Vec* grad) {
    double v = f(x, grad);
    if (grad) *grad = -*grad;
    return -v;
  };
  OptOptions inner = opt;
  if (opt.iter_callback) {
    auto cb = opt.iter_callback;
    inner.iter_callback = [cb](int it, double fv, double gn, double st, int a) {
      cb(it, -fv, gn, st, a);  // report the maximization objective
    };
  }
  MinResult mr = minimize_box(neg, lo, hi, x0, inner);

  OptResult res;
  res.x = mr.x;
  res.value = -mr.value;
  res.proj_grad = mr.proj_grad;
  res.iters = mr.iters;
  res.converged = mr.converged;
  res.line_search_failed = mr.line_search_failed;
  for (double v : mr.trace) res.trace.push_back(-v);
  for (int i = 0; i < lo.size(); ++i)
    if (res.x[i] <= lo[i] + 1e-12 || res.x[i] >= hi[i] - 1e-12)
      res.active.push_back(i);
  return res;
}

OptResult maximize_multistart(const BoxObjective& f, const Vec& lo,
                              const Vec& hi, const OptOptions& opt) {
  const int n = int(lo.size());
  if (opt.warm_start.size() > 0) {
    if (opt.warm_start.size() != n)
      throw ConfigError("warm start length does not match the design box");
    return maximize_box(f, lo, hi, opt.warm_start, opt);
  }
  const int S = std::max(1, opt.starts);
  // Latin hypercube: one stratum midpoint per start and coordinate, with
  // an independent stratum permutation per coordinate.
  Mat x0(n, S);
  for (int d = 0; d < n; ++d) {
    std::vector<int> perm(S);
    for (int k = 0; k < S; ++k) perm[k] = k;
    for (int k = S - 1; k > 0; --k) {
      int j = int(rng_bits(opt.seed, 7000 + d, k) % std::uint64_t(k + 1));
      std::swap(perm[k], perm[j]);
    }
    for (int k = 0; k < S; ++k)
      x0(d, k) = lo[d] + (perm[k] + 0.5) / S * (hi[d] - lo[d]);
  }

  bool have = false;
  OptResult best;
  for (int k = 0; k < S; ++k) {
    OptResult r = maximize_box(f, lo, hi, x0.col(k), opt);
    if (!have || r.value > best.value) {
      best = std::move(r);
      have = true;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Robust sample-average composition.
// ---------------------------------------------------------------------------

OptResult maximize_robust_saa(const SaaObjective& f, int n_draws,
                              const Vec& nodes, const Vec& weights,
                              double gamma, const Vec& lo, const Vec& hi,
                              const OptOptions& opt) {
  if (n_draws < 1) throw ConfigError("robust objective needs at least one draw");
  if (nodes.size() < 1 || nodes.size() != weights.size())
    throw ConfigError("quadrature nodes and weights disagree");
  if (weights.minCoeff() <= 0.0)
    throw ConfigError("quadrature weights must be positive");
  if (gamma < 0.0) throw ConfigError("variance weight must be nonnegative");

  const int R = n_draws, T = int(nodes.size());
  const int dim = int(lo.size());
  const Vec wn = weights / weights.sum();
  const double eps_v = 1e-12;

  auto batch = [&](const Vec& x, Mat& s, std::vector<Vec>* gr) {
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mx;
    auto work = [&] {
      try {
        for (int k = next.fetch_add(1); k < R * T; k = next.fetch_add(1)) {
          int r = k / T, t = k % T;
          Vec grad(dim);
          double v = f(r, nodes[t], x, gr ? &grad : nullptr);
          s(r, t) = v;
          if (gr) (*gr)[k] = grad;
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mx);
        if (!err) err = std::current_exception();
      }
    };
    int n_threads = std::min(std::max(1, opt.workers), R * T);
    if (n_threads == 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      for (int i = 0; i < n_threads; ++i) pool.emplace_back(work);
      for (std::thread& th : pool) th.join();
    }
    if (err) std::rethrow_exception(err);
  };

  BoxObjective J = [&](const Vec& x, Vec* grad) {
    Mat s(R, T);
    std::vector<Vec> gr;
    if (grad) gr.resize(R * T);
    batch(x, s, grad ? &gr : nullptr);
    double E = 0.0;
    for (int r = 0; r < R; ++r)
      for (int t = 0; t < T; ++t) E += wn[t] * s(r, t);
    E /= R;
    double V = 0.0;
    for (int r = 0; r < R; ++r)
      for (int t = 0; t < T; ++t) V += wn[t] * (s(r, t) - E) * (s(r, t) - E);
    V /= R;
    double root = std::sqrt(V + eps_v);
    if (grad) {
      grad->setZero(dim);
      for (int r = 0; r < R; ++r)
        for (int t = 0; t < T; ++t) {
          double coef = wn[t] * (1.0 - gamma * (s(r, t) - E) / root) / R;
          *grad += coef * gr[r * T + t];
        }
    }
    return E - gamma * root;
  };

  OptResult res = maximize_multistart(J, lo, hi, opt);

  // Statistical context at the optimum: spread of the per-draw means.
  if (R >= 2) {
    Mat s(R, T);
    batch(res.x, s, nullptr);
    Vec bar = s * wn;
    double mu = bar.mean();
    double vd = (bar.array() - mu).square().sum() / (R - 1);
    res.noise_half_width = 1.96 * std::sqrt(vd / R);
    double gain = res.value - res.trace.front();
    res.within_noise = gain < res.noise_half_width;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Lattice design drivers.
// ---------------------------------------------------------------------------

namespace {

void check_design(const LatticeDesign& d) {
  if (!d.crystal) throw ConfigError("design problem needs a crystal");
  const CrystalConfig& cfg = d.crystal->config();
  if (cfg.design_cells.empty())
    throw ConfigError("the crystal declares no design cells");
  if (!(cfg.theta_lo < cfg.theta_hi))
    throw ConfigError("the design box is empty");
  if (d.reduced && (d.n_modes < 1 || d.n_modes > d.reduced->n_max))
    throw ConfigError("reduced basis size out of range");
}

PowerGradient design_eval(const LatticeDesign& d, const Vec& theta,
                          const std::vector<CellParams>& extra, double omega) {
  const CrystalConfig& cfg = d.crystal->config();
  std::vector<CellParams> ov;
  for (size_t k = 0; k < cfg.design_cells.size(); ++k) {
    CellParams p;
    p.i = cfg.design_cells[k].first;
    p.j = cfg.design_cells[k].second;
    p.theta = theta[long(k)];
    ov.push_back(p);
  }
  ov.insert(ov.end(), d.frozen.begin(), d.frozen.end());
  ov.insert(ov.end(), extra.begin(), extra.end());
  if (d.reduced)
    return power_gradient_rb(*d.crystal, *d.reduced, ov, omega, d.n_modes);
  return power_gradient(*d.crystal, ov, omega);
}

void design_box(const LatticeDesign& d, Vec& lo, Vec& hi) {
  const CrystalConfig& cfg = d.crystal->config();
  int n = int(cfg.design_cells.size());
  lo = Vec::Constant(n, cfg.theta_lo);
  hi = Vec::Constant(n, cfg.theta_hi);
}

void frequency_rule(double omega_lo, double omega_hi, int order, Vec& nodes,
                    Vec& weights) {
  if (omega_hi < omega_lo) throw ConfigError("empty frequency interval");
  if (order < 1) throw ConfigError("quadrature order must be positive");
  if (omega_hi - omega_lo < 1e-14 * std::abs(omega_hi) || order == 1) {
    nodes = Vec::Constant(1, 0.5 * (omega_lo + omega_hi));
    weights = Vec::Constant(1, 1.0);
    return;
  }
  gauss_legendre(order, omega_lo, omega_hi, nodes, weights);
}

} // namespace

OptResult optimize_deterministic(const LatticeDesign& d, double omega,
                                 const OptOptions& opt) {
  check_design(d);
  Vec lo, hi;
  design_box(d, lo, hi);
  int n = int(lo.size());
  BoxObjective J = [&](const Vec& x, Vec* grad) {
    PowerGradient pg = design_eval(d, x, {}, omega);
    if (grad)
      for (int k = 0; k < n; ++k) (*grad)[k] = pg.cell_grad[k][0];
    return pg.value;
  };
  return maximize_multistart(J, lo, hi, opt);
}

OptResult optimize_robust_frequency(const LatticeDesign& d, double omega_lo,
                                    double omega_hi, int quad_order,
                                    double gamma, const OptOptions& opt) {
  check_design(d);
  Vec lo, hi;
  design_box(d, lo, hi);
  int n = int(lo.size());
  Vec nodes, weights;
  frequency_rule(omega_lo, omega_hi, quad_order, nodes, weights);
  SaaObjective f = [&](int, double om, const Vec& x, Vec* grad) {
    PowerGradient pg = design_eval(d, x, {}, om);
    if (grad)
      for (int k = 0; k < n; ++k) (*grad)[k] = pg.cell_grad[k][0];
    return pg.value;
  };
  return maximize_robust_saa(f, 1, nodes, weights, gamma, lo, hi, opt);
}

OptResult optimize_robust_geometry(const LatticeDesign& d,
                                   const GeometryRobustOptions& g,
                                   const OptOptions& opt) {
  check_design(d);
  if (!d.reduced)
    throw ConfigError("geometry-robust optimization runs on the reduced model");
  const CrystalConfig& cfg = d.crystal->config();
  StochasticSpace sp = crystal_space(cfg);
  if (sp.cells.empty())
    throw ConfigError("the crystal declares no stochastic cells");
  if (g.n_draws < 1) throw ConfigError("need at least one geometry draw");

  Mat draws = sample_params(sp, g.draw_seed, 0, g.n_draws);
  std::vector<std::vector<CellParams>> extra(g.n_draws);
  for (int r = 0; r < g.n_draws; ++r)
    extra[r] = space_overlays(sp, draws.col(r));

  Vec lo, hi;
  design_box(d, lo, hi);
  int n = int(lo.size());
  double w_lo = g.omega_lo, w_hi = g.omega_hi;
  if (w_lo == 0.0 && w_hi == 0.0) w_lo = w_hi = cfg.omega;
  Vec nodes, weights;
  frequency_rule(w_lo, w_hi, g.quad_order, nodes, weights);

  SaaObjective f = [&](int r, double om, const Vec& x, Vec* grad) {
    PowerGradient pg = design_eval(d, x, extra[r], om);
    if (grad)
      for (int k = 0; k < n; ++k) (*grad)[k] = pg.cell_grad[k][0];
    return pg.value;
  };
  return maximize_robust_saa(f, g.n_draws, nodes, weights, g.gamma, lo, hi, opt);
}

// ---------------------------------------------------------------------------
// Fixed-design sample models.
// ---------------------------------------------------------------------------

namespace {

std::vector<CellParams> design_overlays(const CrystalConfig& cfg, const Vec& theta) {
  if (theta.size() != long(cfg.design_cells.size()))
    throw ConfigError("design vector length does not match the design cells");
  std::vector<CellParams> ov;
  for (size_t k = 0; k < cfg.design_cells.size(); ++k) {
    CellParams p;
    p.i = cfg.design_cells[k].first;
    p.j = cfg.design_cells[k].second;
    p.theta = theta[long(k)];
    ov.push_back(p);
  }
  return ov;
}

} // namespace

SampleFn full_power_model(const Crystal& cr, const Vec& theta, double omega) {
  std::vector<CellParams> fixed = design_overlays(cr.config(), theta);
  StochasticSpace sp = crystal_space(cr.config());
  const Crystal* pc = &cr;
  return [pc, sp, fixed, omega](const Vec& draw) {
    std::vector<CellParams> ov = fixed;
    std::vector<CellParams> rnd = space_overlays(sp, draw);
    ov.insert(ov.end(), rnd.begin(), rnd.end());
    GlobalSolver gs(pc->problem_at(omega, ov));
    gs.assemble();
    gs.solve();
    return output_power(gs, pc->config().output_cells);
  };
}

SampleFn rb_power_model(const Crystal& cr, const ReducedModel& rm, int N,
                        const Vec& theta, double omega) {
  std::vector<CellParams> fixed = design_overlays(cr.config(), theta);
  StochasticSpace sp = crystal_space(cr.config());
  const Crystal* pc = &cr;
  const ReducedModel* pm = &rm;
  return [pc, pm, sp, fixed, omega, N](const Vec& draw) {
    std::vector<CellParams> ov = fixed;
    std::vector<CellParams> rnd = space_overlays(sp, draw);
    ov.insert(ov.end(), rnd.begin(), rnd.end());
    GlobalSolver gs(rb_problem(*pc, *pm, omega, ov, N));
    gs.assemble();
    gs.solve();
    return output_power(gs, pc->config().output_cells);
  };
}

} // namespace mscg
