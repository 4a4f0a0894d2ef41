#pragma once

#include "mscg/reduced_basis.hpp"
#include "mscg/uq.hpp"

#include <cstdint>

namespace mscg {

// Gauss-Legendre nodes and weights on [a, b] (Golub-Welsch).
void gauss_legendre(int order, double a, double b, Vec& nodes, Vec& weights);

// ---------------------------------------------------------------------------
// Adjoint gradient of the port power.
// ---------------------------------------------------------------------------

// Gradient of  s = sum_i |T_i| / (2 omega)  over the output cells with
// respect to the geometry parameters of every overlay cell.  For overlay m,
// cell_grad[m][0] is d s / d theta and cell_grad[m][1 + d] is d s / d z_d.
// Entries for instances without overlays are structurally absent (the
// parameters only act through their own cell's operator).
//
// Overlay cells must be disjoint from the output cells and must carry no
// volume source or boundary data of their own (the lattice factories place
// the drive away from the design and stochastic slots).
struct PowerGradient {
  double value = 0.0;           // port power at the primal solve
  std::vector<Vec> cell_grad;   // one (1 + n_modes) vector per overlay
  long adjoint_solves = 0;      // back substitutions spent on the adjoint
};

PowerGradient power_gradient(const Crystal& cr,
                             const std::vector<CellParams>& overlays,
                             double omega);

// Same output for the reduced lattice: overlay cells are condensed with the
// leading N modes and the gradient differentiates the affine coefficients.
PowerGradient power_gradient_rb(const Crystal& cr, const ReducedModel& rm,
                                const std::vector<CellParams>& overlays,
                                double omega, int N);

// ---------------------------------------------------------------------------
// Box-constrained maximization: projected BFGS with Armijo backtracking and
// Latin-hypercube multistart.
// ---------------------------------------------------------------------------

struct OptOptions {
  int max_iters = 80;
  double grad_tol = 1e-7;   // projected-gradient sup norm
  double armijo = 1e-4;
  int max_backtracks = 40;
  int starts = 8;           // Latin-hypercube starts over the box
  std::uint64_t seed = 2026;
  int workers = 1;          // parallel node/draw evaluations
  // Nonempty: optimize from this point instead of the Latin-hypercube starts.
  Vec warm_start;
  // Observes each iterate: (iteration, objective, projected-gradient norm,
  // length of the step that produced the iterate, active bound count).
  std::function<void(int, double, double, double, int)> iter_callback;
};

struct OptResult {
  Vec x;
  double value = 0.0;
  double proj_grad = 0.0;
  int iters = 0;
  bool converged = false;
  bool line_search_failed = false;
  std::vector<int> active;    // coordinates pinned at a box face
  std::vector<double> trace;  // objective after each accepted step
  // Filled by the sample-average drivers: spread of the per-draw means at
  // the optimum, and whether the total improvement is inside that noise.
  double noise_half_width = 0.0;
  bool within_noise = false;
};

// Objective with optional gradient output; must be thread-safe when used
// with workers > 1.
using BoxObjective = std::function<double(const Vec& x, Vec* grad)>;

OptResult maximize_box(const BoxObjective& f, const Vec& lo, const Vec& hi,
                       const Vec& x0, const OptOptions& opt);
OptResult maximize_multistart(const BoxObjective& f, const Vec& lo,
                              const Vec& hi, const OptOptions& opt);

// Sample-average robust objective  E[s] - gamma * sqrt(V[s] + 1e-12)  over
// draw indices crossed with quadrature nodes: E and V use the normalized
// node weights and the uniform draw average.  `f` evaluates one
// (draw, node) pair; evaluations may run in parallel, reductions are in
// fixed index order.
using SaaObjective =
    std::function<double(int draw, double omega, const Vec& x, Vec* grad)>;

OptResult maximize_robust_saa(const SaaObjective& f, int n_draws,
                              const Vec& nodes, const Vec& weights,
                              double gamma, const Vec& lo, const Vec& hi,
                              const OptOptions& opt);

// ---------------------------------------------------------------------------
// Lattice design drivers.  Design variables are the radius scales of the
// crystal's design cells, bounded by the config's design box.
// ---------------------------------------------------------------------------

struct LatticeDesign {
  const Crystal* crystal = nullptr;
  const ReducedModel* reduced = nullptr;  // null: full local solves
  int n_modes = 0;                        // basis size when reduced is set
  std::vector<CellParams> frozen;         // fixed extra overlays
};

// Fixed-frequency transmission maximization.
OptResult optimize_deterministic(const LatticeDesign& d, double omega,
                                 const OptOptions& opt);

// Frequency-robust design: maximize E_w[s] - gamma sqrt(V_w[s] + 1e-12)
// over a Gauss-Legendre rule on [omega_lo, omega_hi] (a single node when
// the interval is degenerate).
OptResult optimize_robust_frequency(const LatticeDesign& d, double omega_lo,
                                    double omega_hi, int quad_order,
                                    double gamma, const OptOptions& opt);

// Geometry-robust design over the crystal's stochastic slots: a frozen set
// of radius-mode draws (common random numbers) crossed with the frequency
// rule, evaluated on the reduced model.
struct GeometryRobustOptions {
  int n_draws = 16;
  std::uint64_t draw_seed = 7;
  double gamma = 1.0;
  int quad_order = 5;
  double omega_lo = 0.0, omega_hi = 0.0;  // zero: the crystal's drive only
};

OptResult optimize_robust_geometry(const LatticeDesign& d,
                                   const GeometryRobustOptions& g,
                                   const OptOptions& opt);

// ---------------------------------------------------------------------------
// Fixed-design sample models over the crystal's stochastic slots, for
// Monte Carlo estimation of the design's transmission statistics.  The
// crystal (and model) must outlive the returned function.
// ---------------------------------------------------------------------------

SampleFn full_power_model(const Crystal& cr, const Vec& theta, double omega);
SampleFn rb_power_model(const Crystal& cr, const ReducedModel& rm, int N,
                        const Vec& theta, double omega);

} // namespace mscg
