#include "mscg/uq.hpp"

#include "mscg/errors.hpp"
#include "mscg/rng.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

namespace mscg {

namespace {

// Deterministic reduction: recursive halving in fixed index order.
double pairwise_sum(const std::vector<double>& v, size_t lo, size_t hi) {
  size_t n = hi - lo;
  if (n == 0) return 0.0;
  if (n == 1) return v[lo];
  if (n == 2) return v[lo] + v[lo + 1];
  size_t mid = lo + n / 2;
  return pairwise_sum(v, lo, mid) + pairwise_sum(v, mid, hi);
}

double mean_of(const std::vector<double>& v) {
  return pairwise_sum(v, 0, v.size()) / double(v.size());
}

double variance_about(const std::vector<double>& v, double center) {
  std::vector<double> sq(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    double d = v[i] - center;
    sq[i] = d * d;
  }
  return pairwise_sum(sq, 0, sq.size()) / double(sq.size() - 1);
}

std::vector<double> evaluate(const SampleFn& s, const Mat& draws, int workers) {
  const int m = int(draws.cols());
  std::vector<double> out(m);
  if (workers <= 1 || m < 2) {
    for (int k = 0; k < m; ++k) out[k] = s(draws.col(k));
    return out;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex err_mx;
  int n_threads = std::min(workers, m);
  for (int t = 0; t < n_threads; ++t)
    pool.emplace_back([&] {
      try {
        for (int k = next.fetch_add(1); k < m; k = next.fetch_add(1))
          out[k] = s(draws.col(k));
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mx);
        if (!err) err = std::current_exception();
      }
    });
  for (std::thread& th : pool) th.join();
  if (err) std::rethrow_exception(err);
  return out;
}

void check_batch(const Mat& draws, const char* what) {
  if (draws.cols() < 2)
    throw ConfigError(std::string(what) + " needs at least two samples");
}

} // namespace

StochasticSpace crystal_space(const CrystalConfig& cfg) {
  StochasticSpace sp;
  sp.cells = cfg.random_cells;
  sp.dim_per_cell = cfg.kl.n_coeffs;
  sp.gamma = Vec::Constant(cfg.kl.n_coeffs, std::sqrt(3.0));
  return sp;
}

Mat sample_params(const StochasticSpace& sp, std::uint64_t seed,
                  std::uint64_t batch, int count) {
  if (sp.dim_per_cell > 0 && sp.gamma.size() != sp.dim_per_cell)
    throw ConfigError("stochastic box has inconsistent half-width count");
  if (count < 0) throw ConfigError("negative sample count");
  const int dim = sp.total_dim();
  Mat draws(dim, count);
  for (int c = 0; c < dim; ++c) {
    double g = sp.gamma[c % sp.dim_per_cell];
    std::uint64_t stream = (batch << 32) | std::uint64_t(c);
    for (int k = 0; k < count; ++k)
      draws(c, k) = rng_uniform(seed, stream, std::uint64_t(k), -g, g);
  }
  return draws;
}

std::vector<CellParams> space_overlays(const StochasticSpace& sp, const Vec& draw) {
  if (draw.size() != sp.total_dim())
    throw ConfigError("draw length does not match the stochastic space");
  std::vector<CellParams> out;
  for (size_t m = 0; m < sp.cells.size(); ++m) {
    CellParams p;
    p.i = sp.cells[m].first;
    p.j = sp.cells[m].second;
    p.z = draw.segment(long(m) * sp.dim_per_cell, sp.dim_per_cell);
    out.push_back(std::move(p));
  }
  return out;
}

McEstimate crude_mc(const SampleFn& s, const Mat& draws, double level,
                    int workers) {
  check_batch(draws, "crude Monte Carlo");
  std::vector<double> vals = evaluate(s, draws, workers);
  McEstimate est;
  est.level = level;
  est.m = long(vals.size());
  est.mean = mean_of(vals);
  est.var = variance_about(vals, est.mean);
  est.half_width = level * std::sqrt(est.var / double(est.m));
  return est;
}

namespace {

// Shared expectation stage: returns the cached evaluations for the
// variance stage.
MvrEstimate expectation_stage(const SampleFn& s_h, const SampleFn& s_N,
                              const Mat& draws0, const Mat& draws1,
                              double level, int workers,
                              std::vector<double>& vh0, std::vector<double>& vn0,
                              std::vector<double>& vn1) {
  check_batch(draws0, "the correction batch");
  check_batch(draws1, "the surrogate batch");
  vh0 = evaluate(s_h, draws0, workers);
  vn0 = evaluate(s_N, draws0, workers);
  vn1 = evaluate(s_N, draws1, workers);

  std::vector<double> corr(vh0.size());
  for (size_t i = 0; i < vh0.size(); ++i) corr[i] = vh0[i] - vn0[i];

  MvrEstimate est;
  est.level = level;
  est.m0 = long(corr.size());
  est.m1 = long(vn1.size());
  double corr_mean = mean_of(corr);
  double surr_mean = mean_of(vn1);
  est.mean = corr_mean + surr_mean;
  est.corr_var = variance_about(corr, corr_mean);
  est.surr_var = variance_about(vn1, surr_mean);
  est.half_width = level * std::sqrt(est.corr_var / double(est.m0) +
                                     est.surr_var / double(est.m1));
  return est;
}

} // namespace

MvrEstimate mvr_expectation(const SampleFn& s_h, const SampleFn& s_N,
                            const Mat& draws0, const Mat& draws1, double level,
                            int workers) {
  std::vector<double> vh0, vn0, vn1;
  return expectation_stage(s_h, s_N, draws0, draws1, level, workers, vh0, vn0, vn1);
}

MvrEstimate mvr_variance(const SampleFn& s_h, const SampleFn& s_N,
                         const Mat& draws0, const Mat& draws1, double level,
                         int workers) {
  std::vector<double> vh0, vn0, vn1;
  MvrEstimate est =
      expectation_stage(s_h, s_N, draws0, draws1, level, workers, vh0, vn0, vn1);

  // Squared deviations about the two-level mean on both batches.
  std::vector<double> zc(vh0.size()), zn1(vn1.size());
  for (size_t i = 0; i < vh0.size(); ++i) {
    double zh = (vh0[i] - est.mean) * (vh0[i] - est.mean);
    double zn = (vn0[i] - est.mean) * (vn0[i] - est.mean);
    zc[i] = zh - zn;
  }
  for (size_t i = 0; i < vn1.size(); ++i)
    zn1[i] = (vn1[i] - est.mean) * (vn1[i] - est.mean);

  double zc_mean = mean_of(zc);
  double zn_mean = mean_of(zn1);
  est.var = zc_mean + zn_mean;
  double vz0 = variance_about(zc, zc_mean);
  double vz1 = variance_about(zn1, zn_mean);
  est.var_half_width =
      level * std::sqrt(vz0 / double(est.m0) + vz1 / double(est.m1));
  return est;
}

Allocation allocate_samples(double v0, double v1, double w, double budget) {
  if (w <= 0.0) throw ConfigError("cost ratio must be positive");
  if (budget <= 0.0) throw ConfigError("sample budget must be positive");
  double eps = std::numeric_limits<double>::epsilon();
  v0 = std::max(v0, eps);
  v1 = std::max(v1, eps);
  double ratio = std::sqrt(v0 / (v1 * w));  // M0 / M1
  double m1 = budget / (ratio * (1.0 + 1.0 / w) + 1.0 / w);
  double m0 = ratio * m1;
  Allocation a;
  a.m0 = std::max(2L, long(std::ceil(m0)));
  a.m1 = std::max(2L, long(std::ceil(m1)));
  return a;
}

Allocation allocate_tolerance(double v0, double v1, double w, double level,
                              double tol) {
  if (w <= 0.0) throw ConfigError("cost ratio must be positive");
  if (tol <= 0.0 || level <= 0.0)
    throw ConfigError("tolerance and confidence level must be positive");
  double eps = std::numeric_limits<double>::epsilon();
  v0 = std::max(v0, eps);
  v1 = std::max(v1, eps);
  double ratio = std::sqrt(v0 / (v1 * w));
  double t2 = (tol / level) * (tol / level);
  double m1 = (v0 / ratio + v1) / t2;
  Allocation a;
  a.m0 = std::max(2L, long(std::ceil(ratio * m1)));
  a.m1 = std::max(2L, long(std::ceil(m1)));
  return a;
}

} // namespace mscg
