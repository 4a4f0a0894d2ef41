#pragma once

#include "mscg/problems.hpp"

#include <cstdint>
#include <iosfwd>

namespace mscg {

// Parameterized geometry family: builds the cell map for given parameters
// (Crystal::map_for bound to a crystal is the usual instance).
using MapFamily = std::function<RadialMap(const CellParams&)>;

// ---------------------------------------------------------------------------
// Empirical interpolation of the mapped coefficient fields.
// ---------------------------------------------------------------------------

// Greedy interpolation data over a training field matrix (columns = fields):
// left singular vectors as modes, one magic row per mode, chosen until the
// worst training reconstruction error (max norm, relative to the largest
// training sample) drops below the tolerance.
struct DeimData {
  Mat modes;              // field dimension x n_modes
  std::vector<int> rows;  // magic rows, one per mode
  Mat interp;             // modes sampled at the magic rows
  double fit_error = 0.0; // achieved max relative training error
};
DeimData deim_pick(const Mat& fields, double tol, int max_modes = -1);

// Affine expansion of the two coefficient fields of the mapped cell
// operator: the gradient coefficient (components G11, G22, G12 stacked over
// the tableau points) and the measure factor (det over tableau points).
// Coefficient functionals interpolate the true fields at the magic points,
// so reconstruction there is exact for any parameters.
struct AffineExpansion {
  // Offline data (sampled on the integration tableau; cleared on load).
  Mat grad_modes, det_modes;
  // Online interpolation data.
  Mat grad_X, det_X;                            // magic point positions
  std::vector<MapRegion> grad_region, det_region;
  std::vector<int> grad_comp;                   // 0: G11, 1: G22, 2: G12
  Mat grad_interp, det_interp;
  double grad_fit = 0.0, det_fit = 0.0;

  int Q() const { return int(grad_interp.rows()); }
  int K() const { return int(det_interp.rows()); }
  Vec grad_coefs(const RadialMap& map) const;
  Vec det_coefs(const RadialMap& map) const;
  // Derivatives of the coefficient functionals with respect to one map
  // parameter (-1: radius scale, d >= 0: radius mode d).
  Vec grad_coefs_dparam(const RadialMap& map, int param) const;
  Vec det_coefs_dparam(const RadialMap& map, int param) const;
};

// True coefficient fields of a map sampled on the tableau (training data
// and exactness checks).
Vec grad_field(const QuadTableau& tab, const RadialMap& map);  // 3 n_points
Vec det_field(const QuadTableau& tab, const RadialMap& map);   // n_points

// Affine-term matrices from a coefficient mode: stiffness-like part from a
// stacked gradient field, mass-like part from a measure field.  With the
// true fields,  grad_term - omega^2 * mass_term  reproduces the cell
// operator of the mapped problem (absorption-free cells).
SpMat grad_term(const CellMesh& mesh, const QuadTableau& tab, const Vec& g3);
SpMat mass_term(const CellMesh& mesh, const QuadTableau& tab, const Vec& g);

AffineExpansion deim_build(const CellProblem& tmpl, const MapFamily& family,
                           const std::vector<CellParams>& train, double tol);

// ---------------------------------------------------------------------------
// Weighted POD over the Dirichlet trace family.
// ---------------------------------------------------------------------------

struct TrainingSet {
  std::vector<CellParams> params;
  std::vector<double> omegas;
};

// Interior values of the harmonic lifts of every trace function, one column
// per (parameter, frequency, trace dof); with a volume source one extra
// zero-trace response column per (parameter, frequency).  Pairs whose
// interior operator fails to factorize (local resonance) are skipped with a
// note on stderr.
Mat snapshot_generate(const CellProblem& tmpl, const MapFamily& family,
                      const TrainingSet& train, const SpaceFn& f = nullptr,
                      int workers = 1);

// Reduced local model: interior basis orthonormal in the energy inner
// product (reference-cell stiffness plus mass), boundary sampling matrix,
// and the per-affine-term operator blocks projected onto the basis and the
// boundary lifts.  Self-contained for online condensation.
struct ReducedModel {
  AffineExpansion affine;
  Vec sing;                   // weighted singular-value spectrum
  Mat basis;                  // n_interior x n_max
  Mat lift;                   // n_boundary x n_mult boundary sampling
  std::vector<int> interior, boundary;  // node partitions of the template
  int n_max = 0, n_mult = 0;
  std::vector<Mat> S_rr, S_re, S_ee;  // Q terms: basis-basis, basis-lift,
  std::vector<Mat> T_rr, T_re, T_ee;  // K terms: lift-lift blocks
  // Training metadata.
  double omega_lo = 0.0, omega_hi = 0.0, theta_lo = 0.0, theta_hi = 0.0;
  int n_param = 0, n_omega = 0, n_modes = 0;
  double deim_tol = 0.0;
  std::uint64_t tmpl_hash = 0;
};

ReducedModel pod_compress(const CellProblem& tmpl, const AffineExpansion& aff,
                          const Mat& snapshots, int n_max);

// ---------------------------------------------------------------------------
// Online reduced condensation.
// ---------------------------------------------------------------------------

// Reduced condensed block: coupling matrix over the cell's multiplier dofs
// plus the reduced lift coefficients needed to recover the nodal field.
struct RbCondensed {
  CMat K;     // n_mult x n_mult, complex symmetric
  Mat chat;   // N x n_mult reduced interior lift coefficients
};

// Assemble the reduced condensation at query parameters with the leading N
// basis vectors; cost independent of the template's node count.
RbCondensed rb_condense(const ReducedModel& rm, const MapFamily& family,
                        const CellParams& params, double omega, int N);

// Nodal field from the cell's multiplier values.
CVec rb_recover(const ReducedModel& rm, const RbCondensed& rc, const CVec& lambda);

// ---------------------------------------------------------------------------
// Training driver and lattice integration.
// ---------------------------------------------------------------------------

struct RbTrainOptions {
  int n_param = 50;   // geometry draws (the unperturbed cell is always added)
  int n_omega = 5;    // frequency grid size
  double omega_lo = 0.0, omega_hi = 0.0;  // zero: +-0.5% around the drive
  bool with_modes = true;  // draw stochastic radius modes, not just theta
  double deim_tol = 1e-5;
  int n_max = 120;
  std::uint64_t seed = 2026;
  int workers = 1;
};

// Uniform training draws over the crystal's design box (theta) and, when
// requested, the stochastic radius modes (centered uniform, unit variance).
std::vector<CellParams> rb_training_params(const CrystalConfig& cfg, int count,
                                           bool with_modes, std::uint64_t seed);

// Train a reduced model for the crystal's mapped-cell template.
ReducedModel rb_train(const Crystal& cr, const RbTrainOptions& opt);

// The cell whose problem anchors the trained template: the first design
// cell, else the first stochastic cell, else the first plain rod cell.
CellIndex rb_home_cell(const Crystal& cr);

// Lattice problem in which every overlay cell is replaced by its reduced
// condensation with the leading N modes; all other cells stay full.  The
// crystal and model must outlive the returned problem and any solver on it.
GlobalProblem rb_problem(const Crystal& cr, const ReducedModel& rm,
                         double omega, const std::vector<CellParams>& overlays,
                         int N);

// ---------------------------------------------------------------------------
// Persistence (versioned little-endian binary; offline mode matrices are
// not stored).
// ---------------------------------------------------------------------------

std::uint64_t template_hash(const CellProblem& tmpl);
void save_model(std::ostream& os, const ReducedModel& rm);
// Verifies the stored template hash against the given template.
ReducedModel load_model(std::istream& is, const CellProblem& tmpl);

} // namespace mscg
