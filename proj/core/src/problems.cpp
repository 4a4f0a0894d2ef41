#include "mscg/problems.hpp"

#include "mscg/errors.hpp"
#include "mscg/quadrature.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

namespace mscg {

// ---------------------------------------------------------------------------
// Manufactured planewave problem.
// ---------------------------------------------------------------------------

SpaceFn planewave_solution(const PlanewaveCase& pc) {
  double w = pc.omega, cx = std::cos(pc.angle), cy = std::sin(pc.angle);
  return [=](double x, double y) -> cplx {
    return x * x + y * y + std::sin(w * (x * cx + y * cy));
  };
}

SpaceFn planewave_source(const PlanewaveCase& pc) {
  double w2 = pc.omega * pc.omega;
  return [=](double x, double y) -> cplx { return -4.0 - w2 * (x * x + y * y); };
}

double planewave_norm(const PlanewaveCase& pc) {
  QuadRule1D g = gauss_legendre(24);
  SpaceFn u = planewave_solution(pc);
  double acc = 0.0;
  for (int i = 0; i < g.points.size(); ++i) {
    double x = 0.5 * (g.points[i] + 1.0);
    for (int j = 0; j < g.points.size(); ++j) {
      double y = 0.5 * (g.points[j] + 1.0);
      acc += 0.25 * g.weights[i] * g.weights[j] * std::norm(u(x, y));
    }
  }
  return std::sqrt(acc);
}

static void check_split(int n, int p, int q) {
  if (n < 1 || p < 1 || q < 1 || n % q != 0)
    throw ConfigError("mesh size " + std::to_string(n) + " not divisible into " +
                      std::to_string(q) + " subdomains per side");
  (void)p;
}

int monolithic_node_count(int n, int p) {
  check_split(n, p, 1);
  return (n * p + 1) * (n * p + 1);
}

int subdomain_node_count(int n, int p, int q) {
  check_split(n, p, q);
  int m = n * p / q;
  return (m + 1) * (m + 1);
}

int face_polynomial_order(int n, int p, int q) {
  check_split(n, p, q);
  return std::min(10, n * p / q);
}

int interface_dof_count(int n, int p, int q) {
  int pf = face_polynomial_order(n, p, q);
  return (q + 1) * (2 * q * pf - q + 1);
}

GlobalProblem planewave_problem(int n, int p, int q, const PlanewaveCase& pc) {
  check_split(n, p, q);
  int m = n / q;
  GlobalProblem gp;
  gp.lat.a1 = (Vec(2) << 1.0 / q, 0.0).finished();
  gp.lat.a2 = (Vec(2) << 0.0, 1.0 / q).finished();
  gp.lat.nx = gp.lat.ny = q;
  gp.face_order = face_polynomial_order(n, p, q);
  gp.omega = pc.omega;
  auto mesh =
      std::make_shared<const CellMesh>(structured_cell_mesh(m, p, 1.0 / q));
  gp.cell = [mesh](int, int, std::string& key, CellProblem& cp) {
    cp.mesh = mesh;
    key = "pw";
  };
  gp.dirichlet = planewave_solution(pc);
  gp.source = planewave_source(pc);
  return gp;
}

std::vector<ConvergenceRow> convergence_study(const std::vector<int>& ns, int p,
                                              int q, const PlanewaveCase& pc) {
  SpaceFn exact = planewave_solution(pc);
  std::vector<ConvergenceRow> rows;
  for (int n : ns) {
    GlobalSolver gs(planewave_problem(n, p, q, pc));
    gs.assemble();
    gs.solve();
    ConvergenceRow row;
    row.n = n;
    row.error = gs.l2_norms(exact).first;
    if (!rows.empty() && row.n > rows.back().n)
      row.order = std::log2(rows.back().error / row.error) /
                  std::log2(double(row.n) / rows.back().n);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Crystal factories.
// ---------------------------------------------------------------------------

static const double kTwoPi = 6.283185307179586476925;

CrystalConfig gaas_line_defect(int nx, int ny, int layers, int defect_row) {
  CrystalConfig c;
  c.lat.nx = nx;
  c.lat.ny = ny;
  c.te = false;
  c.eps_rod = 11.4;
  c.eps_bg = 1.0;
  // Rod radius near the widest part of the transverse-magnetic gap map, so
  // the guided defect mode decays steeply into the bulk.
  c.rod_radius = 0.2;
  c.inner_scale = 0.22;
  c.omega = kTwoPi * 0.38;  // inside the first stop band
  c.pml.strength = 2.0 * c.omega;
  c.pml.x_lo = layers;
  c.pml.x_hi = nx - layers;
  c.pml.wx = layers;
  c.pml.y_lo = layers;
  c.pml.y_hi = ny - layers;
  c.pml.wy = layers;
  for (int i = 0; i < nx; ++i) c.defects.insert({i, defect_row});
  c.src_center = (Vec(2) << layers + 0.5, defect_row + 0.5).finished();
  int probe_i = nx - layers - 2;
  c.probe_axis = {probe_i, defect_row};
  c.probe_off_lo = {probe_i, defect_row - 2};
  c.probe_off_hi = {probe_i, defect_row + 2};
  return c;
}

CrystalConfig silicon_bend(int nx, int ny, int layers, int entry_row, int bend_col) {
  CrystalConfig c;
  c.lat.a1 = (Vec(2) << 1.0, 0.0).finished();
  c.lat.a2 = (Vec(2) << 0.5, 0.8660254037844386468).finished();
  c.lat.nx = nx;
  c.lat.ny = ny;
  c.te = true;
  c.eps_rod = 1.0;  // air holes
  c.eps_bg = 12.1;
  c.rod_radius = 275.0 / 800.0;
  c.inner_scale = 0.3;
  c.omega = kTwoPi * 0.305;  // inside the transverse-electric stop band
  double h2 = c.lat.a2[1];
  c.pml.strength = 2.0 * c.omega;
  // The slanted lattice cannot ramp the stretch along its skew edges with an
  // axis-aligned box; the box is placed to absorb the entry arm's back
  // radiation while leaving every annotated cell unstretched.  Elsewhere the
  // stop band itself keeps fields away from the walls.
  c.pml.x_lo = layers + 0.5 * entry_row;
  c.pml.x_hi = nx + 0.5 * ny;
  c.pml.wx = layers;
  c.pml.y_lo = layers * h2;
  c.pml.y_hi = (ny - layers) * h2;
  c.pml.wy = layers * h2;
  for (int i = 0; i <= bend_col; ++i) c.defects.insert({i, entry_row});
  for (int j = entry_row; j < ny; ++j) c.defects.insert({bend_col, j});
  c.src_center = c.lat.origin_of(layers, entry_row) +
                 0.5 * (c.lat.a1 + c.lat.a2);
  int j_out = ny - layers - 1;
  c.output_cells = {{bend_col - 1, j_out}, {bend_col, j_out}, {bend_col + 1, j_out}};
  c.design_cells = {{bend_col + 1, entry_row},     {bend_col + 1, entry_row + 1},
                    {bend_col + 1, entry_row - 1}, {bend_col, entry_row - 1},
                    {bend_col - 1, entry_row - 1}, {bend_col - 1, entry_row + 1}};
  c.random_cells = c.design_cells;
  c.random_cells.push_back({bend_col - 1, j_out});
  c.random_cells.push_back({bend_col + 1, j_out});
  c.theta_lo = -0.127;
  c.theta_hi = 0.047;
  return c;
}

// ---------------------------------------------------------------------------
// Crystal.
// ---------------------------------------------------------------------------

static Mat cell_corners(const Lattice& lat) {
  Mat c(4, 2);
  c.row(0).setZero();
  c.row(1) = lat.a1.transpose();
  c.row(2) = (lat.a1 + lat.a2).transpose();
  c.row(3) = lat.a2.transpose();
  return c;
}

static std::string cell_name(int i, int j) {
  return "(" + std::to_string(i) + ", " + std::to_string(j) + ")";
}

Crystal::Crystal(CrystalConfig cfg) : cfg_(std::move(cfg)) {
  const Lattice& lat = cfg_.lat;
  if (lat.nx < 1 || lat.ny < 1) throw ConfigError("empty lattice");
  if (cfg_.omega <= 0.0) throw ConfigError("nonpositive frequency");
  if (cfg_.order < 1 || cfg_.face_order < 1)
    throw ConfigError("polynomial orders must be positive");

  Mat corners = cell_corners(lat);
  Vec center = 0.5 * (lat.a1 + lat.a2);
  for (int k = 0; k < 256; ++k) {
    double alpha = kTwoPi * k / 256;
    double ray = polygon_ray(corners, center, alpha);
    if (cfg_.rod_radius >= ray)
      throw ConfigError("rod does not fit inside the cell");
    if (cfg_.inner_scale * ray >= cfg_.rod_radius)
      throw ConfigError("fixed inner polygon reaches the rod surface");
  }

  auto in_lattice = [&](const CellIndex& c) {
    return c.first >= 0 && c.first < lat.nx && c.second >= 0 && c.second < lat.ny;
  };
  for (const CellIndex& d : cfg_.defects)
    if (!in_lattice(d))
      throw ConfigError("defect cell " + cell_name(d.first, d.second) +
                        " outside the lattice");

  mesh_ = std::make_shared<const CellMesh>(
      trellis_cell_mesh(corners, cfg_.rod_radius, cfg_.inner_scale, cfg_.spokes,
                        cfg_.rings_fixed, cfg_.rings_collar, cfg_.rings_outer,
                        cfg_.order, true));

  auto check_clear = [&](const CellIndex& c, const char* what, bool needs_rod) {
    if (!in_lattice(c))
      throw ConfigError(std::string(what) + " cell " +
                        cell_name(c.first, c.second) + " outside the lattice");
    if (in_absorber(c.first, c.second))
      throw ConfigError(std::string(what) + " cell " +
                        cell_name(c.first, c.second) +
                        " lies in the absorbing ring");
    if (needs_rod && is_defect(c.first, c.second))
      throw ConfigError(std::string(what) + " cell " +
                        cell_name(c.first, c.second) + " has no rod");
  };
  for (const CellIndex& c : cfg_.output_cells) check_clear(c, "output", false);
  for (const CellIndex& c : cfg_.design_cells) check_clear(c, "design", true);
  for (const CellIndex& c : cfg_.random_cells) check_clear(c, "stochastic", true);
  for (const CellIndex* p : {&cfg_.probe_axis, &cfg_.probe_off_lo, &cfg_.probe_off_hi})
    if (p->first >= 0) check_clear(*p, "probe", false);

  double w = 2.0 * cfg_.src_width;
  if (cfg_.pml.active_in(cfg_.src_center[0] - w, cfg_.src_center[1] - w,
                         cfg_.src_center[0] + w, cfg_.src_center[1] + w))
    throw ConfigError("drive placed inside the absorbing ring");
}

bool Crystal::is_defect(int i, int j) const {
  return cfg_.defects.count({i, j}) != 0;
}

bool Crystal::in_absorber(int i, int j) const {
  Vec o = cfg_.lat.origin_of(i, j);
  Mat c = cell_corners(cfg_.lat);
  double x0 = c.col(0).minCoeff() + o[0], x1 = c.col(0).maxCoeff() + o[0];
  double y0 = c.col(1).minCoeff() + o[1], y1 = c.col(1).maxCoeff() + o[1];
  return cfg_.pml.active_in(x0, y0, x1, y1);
}

RadialMap Crystal::map_for(const CellParams& p) const {
  Vec z = p.z.size() ? p.z : Vec::Zero(cfg_.kl.n_coeffs);
  if (z.size() != cfg_.kl.n_coeffs)
    throw ConfigError("radius-mode vector has " + std::to_string(z.size()) +
                      " entries, expected " + std::to_string(cfg_.kl.n_coeffs));
  Mat corners = cell_corners(cfg_.lat);
  Vec center = 0.5 * (cfg_.lat.a1 + cfg_.lat.a2);
  RadialMap map(corners, center, cfg_.rod_radius, cfg_.inner_scale, &cfg_.kl,
                p.theta, z);
  for (int k = 0; k < 64; ++k) {
    double alpha = kTwoPi * k / 64;
    double ray = polygon_ray(corners, center, alpha);
    double r0 = map.radius0(alpha);
    if (r0 <= cfg_.inner_scale * ray || r0 >= ray)
      throw SolverError("perturbed rod surface leaves the deformable band at cell " +
                        cell_name(p.i, p.j));
  }
  return map;
}

CellProblem Crystal::cell_problem(int i, int j, const CellParams* overlay) const {
  CellProblem cp;
  cp.mesh = mesh_;
  cp.te = cfg_.te;
  cp.eps_bg = cfg_.eps_bg;
  cp.eps_rod = is_defect(i, j) ? cfg_.eps_bg : cfg_.eps_rod;
  cp.omega = cfg_.omega;
  cp.pml = cfg_.pml;
  cp.face_order = cfg_.face_order;
  cp.origin = cfg_.lat.origin_of(i, j);
  if (overlay) cp.map = map_for(*overlay);
  return cp;
}

GlobalProblem Crystal::problem(const std::vector<CellParams>& overlays) const {
  return problem_at(cfg_.omega, overlays);
}

GlobalProblem Crystal::problem_at(double omega,
                                  const std::vector<CellParams>& overlays) const {
  auto omap = std::make_shared<std::map<CellIndex, CellParams>>();
  for (const CellParams& p : overlays) {
    if (is_defect(p.i, p.j))
      throw ConfigError("mapped cell " + cell_name(p.i, p.j) + " has no rod");
    if (in_absorber(p.i, p.j))
      throw ConfigError("mapped cell " + cell_name(p.i, p.j) +
                        " lies in the absorbing ring");
    (*omap)[{p.i, p.j}] = p;
  }

  GlobalProblem gp;
  gp.lat = cfg_.lat;
  gp.face_order = cfg_.face_order;
  gp.omega = omega;
  gp.pml = cfg_.pml;
  gp.te = cfg_.te;
  gp.cell = [this, omap](int i, int j, std::string& key, CellProblem& cp) {
    cp.mesh = mesh_;
    cp.te = cfg_.te;
    cp.eps_bg = cfg_.eps_bg;
    cp.eps_rod = is_defect(i, j) ? cfg_.eps_bg : cfg_.eps_rod;
    key = cp.eps_rod == cfg_.eps_rod ? "rod" : "open";
    auto it = omap->find({i, j});
    if (it != omap->end()) {
      cp.map = map_for(it->second);
      char buf[40];
      std::snprintf(buf, sizeof(buf), "|t=%.17g", it->second.theta);
      key += buf;
      const Vec& z = cp.map.z();
      for (int d = 0; d < z.size(); ++d) {
        std::snprintf(buf, sizeof(buf), ",%.17g", z[d]);
        key += buf;
      }
    }
  };
  Vec c = cfg_.src_center;
  double w2 = cfg_.src_width * cfg_.src_width;
  double amp = cfg_.src_amp;
  gp.source = [c, w2, amp](double x, double y) -> cplx {
    if (amp == 0.0) return 0.0;
    double r2 = (x - c[0]) * (x - c[0]) + (y - c[1]) * (y - c[1]);
    return r2 > 40.0 * w2 ? 0.0 : amp * std::exp(-r2 / w2);
  };
  return gp;
}

// ---------------------------------------------------------------------------
// Measurements.
// ---------------------------------------------------------------------------

static CellProblem placed_problem(const GlobalSolver& gs, int i, int j) {
  CellProblem cp = gs.cell_op(i, j).problem();
  cp.origin = gs.problem().lat.origin_of(i, j);
  return cp;
}

double cell_flux(const GlobalSolver& gs, int i, int j) {
  Mat B = flux_matrix(placed_problem(gs, i, j));
  CVec v = gs.cell_field(i, j);
  return std::imag((v.adjoint() * (B.transpose() * v))(0));
}

double output_power(const GlobalSolver& gs, const std::vector<CellIndex>& cells) {
  double s = 0.0;
  for (const CellIndex& c : cells) s += std::abs(cell_flux(gs, c.first, c.second));
  return s / (2.0 * gs.problem().omega);
}

double cell_peak(const GlobalSolver& gs, int i, int j) {
  return gs.cell_field(i, j).cwiseAbs().maxCoeff();
}

// Amplitude of a lattice row sampled at the row's centreline: the largest
// |u| over the cell's nodes whose second reference coordinate lies in the
// middle band of the cell.  Sampling at the centreline (rather than
// anywhere in the cell) makes "amplitude k rows away" mean the field
// exactly k lattice constants off axis instead of k - 1/2.
static double row_amplitude(const GlobalSolver& gs, int i, int j) {
  const CellMesh& mesh = *gs.cell_op(i, j).problem().mesh;
  CVec v = gs.cell_field(i, j);
  double best = 0.0;
  for (int n = 0; n < mesh.n_nodes(); ++n)
    if (std::abs(mesh.nodes(n, 1) - 0.5) <= 0.2)
      best = std::max(best, std::abs(v[n]));
  return best;
}

double BandgapResult::ratio() const {
  return on_axis / std::max(off_lo, off_hi);
}

BandgapResult bandgap_probe(const Crystal& c, double omega) {
  const CrystalConfig& cfg = c.config();
  if (cfg.probe_axis.first < 0)
    throw ConfigError("crystal has no amplitude probes");
  GlobalSolver gs(c.problem_at(omega));
  gs.assemble();
  gs.solve();
  BandgapResult r;
  r.on_axis = row_amplitude(gs, cfg.probe_axis.first, cfg.probe_axis.second);
  r.off_lo = row_amplitude(gs, cfg.probe_off_lo.first, cfg.probe_off_lo.second);
  r.off_hi = row_amplitude(gs, cfg.probe_off_hi.first, cfg.probe_off_hi.second);
  return r;
}

DuctPowers free_duct_check(int nx, int ny, int layers, double omega) {
  CrystalConfig c;
  c.lat.nx = nx;
  c.lat.ny = ny;
  c.te = false;
  c.eps_rod = c.eps_bg = 1.0;
  c.rod_radius = 0.4;
  c.inner_scale = 0.42;
  c.order = 2;
  c.face_order = 6;
  c.omega = omega;
  c.pml.strength = 2.0 * omega;
  c.pml.x_lo = layers;
  c.pml.x_hi = nx - layers;
  c.pml.wx = layers;  // hard side walls: no stretch in y
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) c.defects.insert({i, j});
  c.src_center = (Vec(2) << layers + 1.5, 0.5 * ny).finished();
  Crystal cr(c);

  GlobalSolver gs(cr.problem());
  gs.assemble();
  gs.solve();

  DuctPowers p;
  int i_src = layers + 1;
  double up = 0.0, down = 0.0;
  for (int j = 0; j < ny; ++j) {
    up += cell_flux(gs, i_src - 1, j);
    down += cell_flux(gs, nx - layers - 2, j);
  }
  p.upstream = std::abs(up) / (2.0 * omega);
  p.downstream = std::abs(down) / (2.0 * omega);

  SpaceFn src = cr.problem().source;
  cplx t = 0.0;
  for (int dj = -1; dj <= 1; ++dj) {
    int j = ny / 2 + dj;
    if (j < 0 || j >= ny) continue;
    for (int di = -1; di <= 1; ++di) {
      CellProblem placed = placed_problem(gs, i_src + di, j);
      CVec F = assemble_load(placed, src);
      t += (gs.cell_field(i_src + di, j).adjoint() * F)(0);
    }
  }
  p.input = std::abs(std::imag(t)) / (2.0 * omega);
  return p;
}

// ---------------------------------------------------------------------------
// Text output.
// ---------------------------------------------------------------------------

void write_mesh(std::ostream& os, const CellMesh& mesh) {
  char buf[80];
  os << mesh.n_nodes() << " " << mesh.n_elems() << "\n";
  for (int n = 0; n < mesh.n_nodes(); ++n) {
    std::snprintf(buf, sizeof(buf), "%.9e %.9e\n", mesh.nodes(n, 0),
                  mesh.nodes(n, 1));
    os << buf;
  }
  for (int e = 0; e < mesh.n_elems(); ++e) {
    for (int k = 0; k < mesh.conn.cols(); ++k)
      os << mesh.conn(e, k) << (k + 1 < mesh.conn.cols() ? " " : "\n");
  }
}

void write_field(std::ostream& os, const GlobalSolver& gs) {
  char buf[120];
  const Lattice& lat = gs.problem().lat;
  for (int j = 0; j < lat.ny; ++j) {
    for (int i = 0; i < lat.nx; ++i) {
      Vec o = lat.origin_of(i, j);
      const CellMesh& mesh = *gs.cell_op(i, j).problem().mesh;
      CVec v = gs.cell_field(i, j);
      for (int n = 0; n < mesh.n_nodes(); ++n) {
        std::snprintf(buf, sizeof(buf), "%.9e %.9e %.9e %.9e\n",
                      o[0] + mesh.nodes(n, 0), o[1] + mesh.nodes(n, 1),
                      v[n].real(), v[n].imag());
        os << buf;
      }
    }
  }
}

} // namespace mscg
