#pragma once

#include "mscg/global_solver.hpp"

#include <iosfwd>
#include <set>
#include <utility>
#include <vector>

namespace mscg {

// ---------------------------------------------------------------------------
// Manufactured planewave problem on the unit square, used to verify the
// interface-coupled solver against a known solution.
// ---------------------------------------------------------------------------

struct PlanewaveCase {
  double omega = 6.0;                      // drive frequency = wavenumber
  double angle = 0.785398163397448309616;  // propagation angle pi/4
};

// u(x, y) = x^2 + y^2 + sin(omega (x cos a + y sin a)).  The wave part is in
// the kernel of (Laplace + omega^2), so the matching volume source for
// -Laplace(u) - omega^2 u = f is f = -4 - omega^2 (x^2 + y^2).
SpaceFn planewave_solution(const PlanewaveCase& pc);
SpaceFn planewave_source(const PlanewaveCase& pc);
// L2 norm of the solution over the unit square (tensor Gauss quadrature).
double planewave_norm(const PlanewaveCase& pc);

// Node and interface-dof counts for the n x n element unit square split
// into q x q subdomains with field order p (q must divide n).
int monolithic_node_count(int n, int p);         // (n p + 1)^2
int subdomain_node_count(int n, int p, int q);   // (n p / q + 1)^2
int face_polynomial_order(int n, int p, int q);  // min(10, n p / q)
int interface_dof_count(int n, int p, int q);    // (q+1)(2 q pf - q + 1)

// The manufactured problem discretized on q x q square subdomains of
// (n/q)^2 structured elements each, exterior data taken from the solution.
GlobalProblem planewave_problem(int n, int p, int q, const PlanewaveCase& pc = {});

struct ConvergenceRow {
  int n = 0;
  double error = 0.0;  // absolute L2 error of the recovered field
  double order = 0.0;  // observed rate against the previous row (0 for the first)
};

std::vector<ConvergenceRow> convergence_study(const std::vector<int>& ns, int p,
                                              int q, const PlanewaveCase& pc = {});

// ---------------------------------------------------------------------------
// Photonic-crystal lattices: rod/hole arrays with line defects, absorbing
// boundary ring, and a Gaussian drive in an entry defect cell.
// ---------------------------------------------------------------------------

using CellIndex = std::pair<int, int>;

struct CrystalConfig {
  Lattice lat;
  bool te = false;
  double eps_rod = 1.0, eps_bg = 1.0;
  double rod_radius = 0.3;
  double inner_scale = 0.5;  // fixed inner polygon = cell scaled by this
  int order = 2;
  int face_order = 4;
  int spokes = 4, rings_fixed = 1, rings_collar = 2, rings_outer = 3;
  double omega = 1.0;
  PmlProfile pml;
  std::set<CellIndex> defects;  // cells with the rod removed
  Vec src_center = Vec::Zero(2);
  double src_width = 0.1;
  double src_amp = 1.0;  // drive amplitude scale (zero: quiet lattice)
  KLRadius kl;  // radius-perturbation model for mapped cells

  // Study annotations filled by the factory helpers below.
  std::vector<CellIndex> output_cells;  // port power instances
  std::vector<CellIndex> design_cells;  // radius-scale design slots
  std::vector<CellIndex> random_cells;  // stochastic-perturbation slots
  double theta_lo = 0.0, theta_hi = 0.0;  // design box for the radius scale
  CellIndex probe_axis{-1, -1};           // amplitude probes for the decay check
  CellIndex probe_off_lo{-1, -1};
  CellIndex probe_off_hi{-1, -1};
};

// Square rod lattice (rods eps 11.4 in air, transverse-magnetic) with a full
// line defect along row `defect_row`, absorbing ring of `layers` cells, the
// drive in the first interior defect cell, and probes for the lateral-decay
// check placed near the far end on-axis and two rows off-axis.
CrystalConfig gaas_line_defect(int nx, int ny, int layers, int defect_row);

// Triangular lattice of air holes in a silicon slab (transverse-electric)
// with a defect running along the first lattice vector to (`bend_col`,
// `entry_row`) and then turning 60 degrees along the second lattice vector
// up through the top absorber.  Output port on the exit arm; design slots
// ring the bend; stochastic slots add the two rod cells flanking the port.
CrystalConfig silicon_bend(int nx, int ny, int layers, int entry_row, int bend_col);

// Map parameters attached to one cell: uniform radius scale `theta` plus
// per-mode radius offsets `z` (empty means all zero).
struct CellParams {
  int i = 0, j = 0;
  double theta = 0.0;
  Vec z;
};

// A validated crystal problem: shared cell mesh, per-cell materials, and
// construction of solver problems with optional per-cell geometry overlays.
// The Crystal must outlive any solver or map built from it.
class Crystal {
public:
  explicit Crystal(CrystalConfig cfg);

  const CrystalConfig& config() const { return cfg_; }
  const std::shared_ptr<const CellMesh>& cell_mesh() const { return mesh_; }

  bool is_defect(int i, int j) const;
  // Whether the absorbing stretch is active anywhere in the cell's bounding
  // box (such cells cannot carry maps, probes, ports, or the drive).
  bool in_absorber(int i, int j) const;

  RadialMap map_for(const CellParams& p) const;
  // The cell problem as the solver would see it (origin placed, overlay
  // applied if given); used by derivative and reduced-model assembly.
  CellProblem cell_problem(int i, int j, const CellParams* overlay = nullptr) const;

  GlobalProblem problem(const std::vector<CellParams>& overlays = {}) const;
  GlobalProblem problem_at(double omega,
                           const std::vector<CellParams>& overlays = {}) const;

private:
  CrystalConfig cfg_;
  std::shared_ptr<const CellMesh> mesh_;
};

// ---------------------------------------------------------------------------
// Field measurements.
// ---------------------------------------------------------------------------

// Cell-integrated x-directed time-averaged energy flux of the recovered
// field in cell (i, j): T = Int rho Im[conj(u) du/dx] (det-weighted).
double cell_flux(const GlobalSolver& gs, int i, int j);

// Port power s = sum_i |T_i| / (2 omega) over the given cells.
double output_power(const GlobalSolver& gs, const std::vector<CellIndex>& cells);

// Largest nodal amplitude in one cell.
double cell_peak(const GlobalSolver& gs, int i, int j);

struct BandgapResult {
  double on_axis = 0.0, off_lo = 0.0, off_hi = 0.0;
  double ratio() const;  // on-axis over worst off-axis amplitude
};

// Solve the crystal at the given frequency and measure the probe amplitudes.
BandgapResult bandgap_probe(const Crystal& c, double omega);

struct DuctPowers {
  double input = 0.0;      // power injected by the drive
  double upstream = 0.0;   // column flux magnitude left of the drive
  double downstream = 0.0; // column flux magnitude at the far column
};

// Rod-free duct with hard side walls and absorbing ends: the drive's power
// must match the sum of the two directed column fluxes, and the two must be
// symmetric, up to discretization error.
DuctPowers free_duct_check(int nx, int ny, int layers, double omega);

// ---------------------------------------------------------------------------
// Text output of meshes and fields.
// ---------------------------------------------------------------------------

// Nodes as "x y" lines, then element connectivity as node-index lines.
void write_mesh(std::ostream& os, const CellMesh& mesh);
// Recovered field over all cells as "x y Re Im" lines (lattice coordinates).
void write_field(std::ostream& os, const GlobalSolver& gs);

} // namespace mscg
