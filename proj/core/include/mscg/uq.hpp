#pragma once

#include "mscg/problems.hpp"

#include <cstdint>
#include <functional>

namespace mscg {

// ---------------------------------------------------------------------------
// Stochastic parameter space: independent uniform boxes, one per instance.
// ---------------------------------------------------------------------------

// Product of per-instance coordinate boxes [-gamma_d, gamma_d]; coordinates
// are independent across instances and dimensions.
struct StochasticSpace {
  std::vector<CellIndex> cells;  // instance slots, one box each
  int dim_per_cell = 0;
  Vec gamma;  // per-coordinate half-widths (size dim_per_cell)

  int total_dim() const { return int(cells.size()) * dim_per_cell; }
};

// The crystal's stochastic slots: one box per stochastic cell over the
// radius-mode coefficients, half-width sqrt(3) (unit variance).
StochasticSpace crystal_space(const CrystalConfig& cfg);

// `count` i.i.d. uniform draws (one per column) from the counter-based
// stream (seed, batch): coordinate c of draw k depends only on
// (seed, batch, c, k), so parallel and serial generation agree and batches
// are independent.
Mat sample_params(const StochasticSpace& sp, std::uint64_t seed,
                  std::uint64_t batch, int count);

// Expand one flat draw into per-cell geometry overlays (theta = 0).
std::vector<CellParams> space_overlays(const StochasticSpace& sp, const Vec& draw);

// ---------------------------------------------------------------------------
// Monte Carlo estimators.  All reductions use pairwise summation in fixed
// index order, so results are identical for any worker count.
// ---------------------------------------------------------------------------

// Scalar output evaluated at one flat parameter draw.
using SampleFn = std::function<double(const Vec&)>;

struct McEstimate {
  double mean = 0.0;
  double var = 0.0;         // unbiased sample variance (divisor M-1)
  double half_width = 0.0;  // level * sqrt(var / M)
  double level = 1.96;
  long m = 0;
};

McEstimate crude_mc(const SampleFn& s, const Mat& draws, double level = 1.96,
                    int workers = 1);

// Two-level estimate: E[s_h] = E_{M0}[s_h - s_N] + E_{M1}[s_N] over
// independent batches, with confidence half-width
// level * sqrt(V0/M0 + V1/M1) from the two component sample variances.
struct MvrEstimate {
  double mean = 0.0;
  double corr_var = 0.0;  // V_{M0}[s_h - s_N]
  double surr_var = 0.0;  // V_{M1}[s_N]
  double half_width = 0.0;
  // Filled by mvr_variance: V[s_h] = E_{M0}[zeta_h - zeta_N] + E_{M1}[zeta_N]
  // with zeta_* the squared deviations from the two-level mean.
  double var = 0.0;
  double var_half_width = 0.0;
  double level = 1.96;
  long m0 = 0, m1 = 0;
};

MvrEstimate mvr_expectation(const SampleFn& s_h, const SampleFn& s_N,
                            const Mat& draws0, const Mat& draws1,
                            double level = 1.96, int workers = 1);

// Expectation plus the two-level variance estimate about it.
MvrEstimate mvr_variance(const SampleFn& s_h, const SampleFn& s_N,
                         const Mat& draws0, const Mat& draws1,
                         double level = 1.96, int workers = 1);

// ---------------------------------------------------------------------------
// Sample-size allocation from pilot variances.
// ---------------------------------------------------------------------------

struct Allocation {
  long m0 = 2, m1 = 2;
};

// Minimize the half-width at fixed total cost  M0 (1 + 1/w) + M1 / w  in
// full-model units, where w = cost(s_h) / cost(s_N): the optimal batch
// ratio is M0/M1 = sqrt(v0 / (v1 w)).  Nonpositive pilot variances are
// floored at machine epsilon; both counts are rounded up and floored at 2.
Allocation allocate_samples(double v0, double v1, double w, double budget);

// Smallest batches (same ratio) whose predicted half-width is below `tol`.
Allocation allocate_tolerance(double v0, double v1, double w, double level,
                              double tol);

} // namespace mscg
