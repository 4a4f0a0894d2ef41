#include <doctest.h>

#include "mscg/errors.hpp"
#include "mscg/uq.hpp"

#include <cmath>

using namespace mscg;

namespace {

StochasticSpace toy_space(int cells, int dims) {
  StochasticSpace sp;
  for (int c = 0; c < cells; ++c) sp.cells.push_back({c, 0});
  sp.dim_per_cell = dims;
  sp.gamma = Vec::Constant(dims, std::sqrt(3.0));
  return sp;
}

const SampleFn kSquare = [](const Vec& z) { return z[0] * z[0]; };
const SampleFn kSurrogate = [](const Vec& z) { return z[0] * z[0] + 0.01 * z[1]; };
const SampleFn kZero = [](const Vec&) { return 0.0; };

} // namespace

TEST_CASE("uniform draws are reproducible, centered, and unit variance") {
  StochasticSpace sp = toy_space(1, 2);
  const int m = 100000;
  Mat a = sample_params(sp, 42, 0, m);
  Mat b = sample_params(sp, 42, 0, m);
  Mat c = sample_params(sp, 42, 1, m);
  Mat d = sample_params(sp, 43, 0, m);
  REQUIRE(a.rows() == 2);
  REQUIRE(a.cols() == m);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a != d);
  CHECK(a.cwiseAbs().maxCoeff() <= std::sqrt(3.0));

  for (int r = 0; r < 2; ++r) {
    double mean = a.row(r).mean();
    double var = (a.row(r).array() - mean).square().sum() / (m - 1);
    CHECK(std::abs(mean) < 3.0 / std::sqrt(double(m)));  // 3 sigma / sqrt(M)
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
  }

  // Prefixes of the stream are stable: draw k is a pure function of
  // (seed, batch, coordinate, k).
  Mat head = sample_params(sp, 42, 0, 10);
  CHECK(head == a.leftCols(10));

  CHECK_THROWS_AS(space_overlays(sp, Vec::Zero(5)), ConfigError);
  std::vector<CellParams> ov = space_overlays(sp, a.col(7));
  REQUIRE(ov.size() == 1);
  CHECK(ov[0].z == a.col(7));
}

TEST_CASE("crude Monte Carlo matches closed forms") {
  StochasticSpace sp = toy_space(1, 1);
  Mat draws = sample_params(sp, 7, 0, 10000);

  McEstimate flat = crude_mc([](const Vec&) { return 2.5; }, draws);
  CHECK(flat.mean == 2.5);
  CHECK(flat.var == 0.0);
  CHECK(flat.half_width == 0.0);

  McEstimate sq = crude_mc(kSquare, draws);
  CHECK(std::abs(sq.mean - 1.0) < 3.0 * sq.half_width / 1.96);
  CHECK(sq.var == doctest::Approx(0.8).epsilon(0.1));  // E[z^4] - 1 = 4/5

  // Half-width scales like 1/sqrt(M).
  double h2 = crude_mc(kSquare, sample_params(sp, 7, 1, 100)).half_width;
  double h3 = crude_mc(kSquare, sample_params(sp, 7, 2, 1000)).half_width;
  double h4 = crude_mc(kSquare, sample_params(sp, 7, 3, 10000)).half_width;
  CHECK(h2 / h3 == doctest::Approx(std::sqrt(10.0)).epsilon(0.35));
  CHECK(h3 / h4 == doctest::Approx(std::sqrt(10.0)).epsilon(0.35));

  CHECK_THROWS_AS(crude_mc(kSquare, draws.leftCols(1)), ConfigError);
}

TEST_CASE("perfect and null surrogates reduce the two-level estimator") {
  StochasticSpace sp = toy_space(1, 2);
  Mat d0 = sample_params(sp, 11, 0, 400);
  Mat d1 = sample_params(sp, 11, 1, 900);

  // Perfect surrogate: correction contributes exactly nothing.
  MvrEstimate perfect = mvr_expectation(kSquare, kSquare, d0, d1);
  McEstimate on1 = crude_mc(kSquare, d1);
  CHECK(perfect.corr_var == 0.0);
  CHECK(perfect.mean == on1.mean);
  CHECK(perfect.half_width == on1.half_width);

  // Null surrogate: bitwise identical to crude Monte Carlo on the
  // correction batch.
  MvrEstimate null = mvr_expectation(kSquare, kZero, d0, d1);
  McEstimate on0 = crude_mc(kSquare, d0);
  CHECK(null.mean == on0.mean);
  CHECK(null.corr_var == on0.var);
  CHECK(null.surr_var == 0.0);
  CHECK(null.half_width == on0.half_width);

  CHECK_THROWS_AS(mvr_expectation(kSquare, kZero, d0.leftCols(1), d1), ConfigError);
  CHECK_THROWS_AS(mvr_expectation(kSquare, kZero, d0, d1.leftCols(1)), ConfigError);
}

TEST_CASE("confidence intervals cover the analytic mean") {
  StochasticSpace sp = toy_space(1, 2);
  const int reps = 500, m = 1000;
  int hits = 0;
  double mean_sum = 0.0, sq_sum = 0.0;
  for (int r = 0; r < reps; ++r) {
    Mat d0 = sample_params(sp, 2026, 2 * std::uint64_t(r), m);
    Mat d1 = sample_params(sp, 2026, 2 * std::uint64_t(r) + 1, m);
    MvrEstimate est = mvr_expectation(kSquare, kSurrogate, d0, d1);
    if (std::abs(est.mean - 1.0) <= est.half_width) ++hits;
    mean_sum += est.mean;
    sq_sum += est.mean * est.mean;
  }
  double coverage = double(hits) / reps;
  CHECK(coverage >= 0.93);
  CHECK(coverage <= 0.97);

  // Replication average is unbiased within 3 standard errors.
  double rep_mean = mean_sum / reps;
  double rep_sd = std::sqrt((sq_sum / reps - rep_mean * rep_mean) * reps / (reps - 1));
  CHECK(std::abs(rep_mean - 1.0) < 3.0 * rep_sd / std::sqrt(double(reps)));
}

TEST_CASE("two-level variance estimate matches analytic moments") {
  StochasticSpace sp = toy_space(1, 2);
  Mat d0 = sample_params(sp, 17, 0, 2000);
  Mat d1 = sample_params(sp, 17, 1, 8000);

  MvrEstimate flat = mvr_variance([](const Vec&) { return 3.0; },
                                  [](const Vec&) { return 3.0; }, d0, d1);
  CHECK(flat.var == 0.0);
  CHECK(flat.var_half_width == 0.0);

  MvrEstimate est = mvr_variance(kSquare, kSurrogate, d0, d1);
  CHECK(std::abs(est.var - 0.8) < 3.0 * est.var_half_width / 1.96 + 1e-3);

  // Perfect surrogate: the correction terms vanish and the variance is the
  // plain second moment about the two-level mean on the surrogate batch.
  MvrEstimate same = mvr_variance(kSquare, kSquare, d0, d1);
  double direct = 0.0;
  for (int k = 0; k < d1.cols(); ++k) {
    double v = kSquare(d1.col(k)) - same.mean;
    direct += v * v;
  }
  direct /= double(d1.cols());
  CHECK(same.var == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("batch allocation follows the pilot variances") {
  Allocation floor0 = allocate_samples(0.0, 1.0, 10.0, 1000.0);
  CHECK(floor0.m0 == 2);
  CHECK(floor0.m1 > 1000);

  Allocation sym = allocate_samples(1.0, 1.0, 1.0, 300.0);
  CHECK(std::abs(double(sym.m0 - sym.m1)) <= 1.0);

  Allocation paper = allocate_samples(1.0 / 100.0, 1.0, 150.0, 1e6);
  double ratio = double(paper.m0) / double(paper.m1);
  CHECK(ratio == doctest::Approx(1.0 / std::sqrt(15000.0)).epsilon(1e-3));

  Allocation tol = allocate_tolerance(0.01, 0.8, 100.0, 1.96, 1e-2);
  double hw = 1.96 * std::sqrt(0.01 / double(tol.m0) + 0.8 / double(tol.m1));
  CHECK(hw <= 1e-2 * 1.0001);

  CHECK_THROWS_AS(allocate_samples(1.0, 1.0, 0.0, 100.0), ConfigError);
  CHECK_THROWS_AS(allocate_samples(1.0, 1.0, 1.0, 0.0), ConfigError);
  CHECK_THROWS_AS(allocate_tolerance(1.0, 1.0, 1.0, 1.96, 0.0), ConfigError);
}

TEST_CASE("correlated surrogate shrinks the half-width at matched cost") {
  StochasticSpace sp = toy_space(1, 2);
  const double w = 100.0, budget = 300.0;

  Mat pilot0 = sample_params(sp, 23, 10, 20);
  Mat pilot1 = sample_params(sp, 23, 11, 20);
  MvrEstimate pilot = mvr_expectation(kSquare, kSurrogate, pilot0, pilot1);
  Allocation alloc = allocate_samples(pilot.corr_var, pilot.surr_var, w, budget);

  Mat d0 = sample_params(sp, 23, 0, int(alloc.m0));
  Mat d1 = sample_params(sp, 23, 1, int(alloc.m1));
  MvrEstimate mvr = mvr_expectation(kSquare, kSurrogate, d0, d1);

  Mat crude_draws = sample_params(sp, 23, 2, int(budget));
  McEstimate crude = crude_mc(kSquare, crude_draws);

  CHECK(mvr.half_width * 3.0 <= crude.half_width);
  CHECK(std::abs(mvr.mean - 1.0) < 5.0 * mvr.half_width);
}

TEST_CASE("estimates are identical for any worker count") {
  StochasticSpace sp = toy_space(2, 3);
  Mat d0 = sample_params(sp, 5, 0, 777);
  Mat d1 = sample_params(sp, 5, 1, 333);
  SampleFn s_h = [](const Vec& z) { return std::sin(z[0]) + z[3] * z[3]; };
  SampleFn s_N = [](const Vec& z) { return std::sin(z[0]) + z[3] * z[3] + 0.05 * z[1]; };

  McEstimate c1 = crude_mc(s_h, d0, 1.96, 1);
  McEstimate c7 = crude_mc(s_h, d0, 1.96, 7);
  CHECK(c1.mean == c7.mean);
  CHECK(c1.var == c7.var);
  CHECK(c1.half_width == c7.half_width);

  MvrEstimate m1 = mvr_variance(s_h, s_N, d0, d1, 1.96, 1);
  MvrEstimate m8 = mvr_variance(s_h, s_N, d0, d1, 1.96, 8);
  CHECK(m1.mean == m8.mean);
  CHECK(m1.var == m8.var);
  CHECK(m1.half_width == m8.half_width);
  CHECK(m1.var_half_width == m8.var_half_width);
}

TEST_CASE("the crystal's stochastic slots define the sample space") {
  CrystalConfig cfg = silicon_bend(12, 12, 2, 3, 5);
  StochasticSpace sp = crystal_space(cfg);
  CHECK(sp.cells == cfg.random_cells);
  CHECK(sp.dim_per_cell == cfg.kl.n_coeffs);
  CHECK(sp.total_dim() == int(cfg.random_cells.size()) * cfg.kl.n_coeffs);
  CHECK(sp.gamma.minCoeff() == doctest::Approx(std::sqrt(3.0)));

  Mat draws = sample_params(sp, 99, 0, 3);
  std::vector<CellParams> ov = space_overlays(sp, draws.col(2));
  REQUIRE(ov.size() == cfg.random_cells.size());
  for (size_t m = 0; m < ov.size(); ++m) {
    CHECK(ov[m].i == cfg.random_cells[m].first);
    CHECK(ov[m].j == cfg.random_cells[m].second);
    CHECK(ov[m].theta == 0.0);
    CHECK(ov[m].z ==
          draws.col(2).segment(long(m) * sp.dim_per_cell, sp.dim_per_cell));
  }
}
