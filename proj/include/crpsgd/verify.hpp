#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "crpsgd/algorithms.hpp"
#include "crpsgd/objectives.hpp"
#include "crpsgd/schedule.hpp"

namespace crpsgd::verify {

/// One cell of the per-step contraction check on f(x) = 1/2||x||^2 with the
/// additive-gaussian oracle, where both sides of the inequality have closed
/// forms:
///   E[f(x+) - f*]       = (1-gamma)^2 E[f(x) - f*] + gamma^2 sigma^2/(2NB)
///   bound               = (1-nu)     E[f(x) - f*] + gamma(2-gamma) sigma^2/(2NB)
/// The closed-form comparison needs no tolerance; the empirical path
/// simulates `trials` single steps and checks the sample mean against the
/// closed form and the bound within 4-sigma confidence bands.
struct Lemma1Cell {
  double gamma = 0.0;
  int workers = 0;
  long long batch = 0;
  double sigma2 = 0.0;
  double lhs_exact = 0.0;
  double rhs_bound = 0.0;
  double empirical_mean = 0.0;
  double empirical_se = 0.0;
  bool closed_form_ok = false;
  bool empirical_ok = false;
};

struct Lemma1Report {
  std::vector<Lemma1Cell> cells;
  bool pass = false;
};

Lemma1Cell monte_carlo_lemma1(double gamma, int workers, long long batch,
                              double sigma2, long long trials,
                              std::uint64_t seed);

/// The default 12-cell grid: gamma in {0.01, 0.1, 0.5} x N in {1, 4} x
/// B in {1, 8}, sigma^2 = 1.
Lemma1Report lemma1_grid(long long trials, std::uint64_t seed);

struct FactCheck {
  std::string name;
  bool applicable = false;
  int checked = 0;
  int violations = 0;
  double max_violation = 0.0;  ///< worst relative slack violation observed
  bool equality = false;       ///< inequality held with equality everywhere
  bool pass = false;
};

struct FactsReport {
  std::vector<FactCheck> facts;
  bool pass = false;
  std::string notice;
};

/// Checks, at `points` random points with relative tolerance 1e-9:
///   smooth gap upper bound:   f(x) - f* <= (L/2)||x - x*||^2
///   gradient-norm lower bound: ||grad f(x)||^2/(2L) <= f(x) - f*
/// and, when strong convexity with modulus mu is declared:
///   quadratic growth:          f(x) - f* >= (mu/2)||x - x*||^2
///   error bound:               ||grad f(x)|| >= mu ||x - x*||
/// Needs x* and f*; otherwise the report is marked skipped.
FactsReport check_facts_suite(const SmoothObjective& obj, int points,
                              std::uint64_t seed);

struct PowerLawFit {
  double exponent = 0.0;
  double intercept = 0.0;
  double stderr_exponent = 0.0;
  double residual_rms = 0.0;
  int n = 0;
};

/// OLS fit of log(y) = intercept + exponent * log(x). Requires >= 4 points.
PowerLawFit fit_power_law(const std::vector<double>& x,
                          const std::vector<double>& y);

struct FitReport {
  PowerLawFit fit;
  double target = 0.0;
  double window_lo = 0.0;
  double window_hi = 0.0;
  bool pass = false;
};

struct SweepCell {
  int workers = 0;
  long long budget = 0;
  double value = 0.0;  ///< seed-averaged gap or mean squared gradient norm
};

/// Exponent of the gap versus T at fixed N; target -1.
FitReport fit_pl_rate_vs_budget(const std::vector<SweepCell>& sweep,
                                int workers_fixed, double window_lo,
                                double window_hi);
/// Exponent of the gap versus N at fixed T; target -1.
FitReport fit_pl_rate_vs_workers(const std::vector<SweepCell>& sweep,
                                 long long budget_fixed, double window_lo,
                                 double window_hi);
/// Exponent of the mean squared gradient norm versus N*T; target -1/2.
FitReport fit_catalyst_rate(const std::vector<SweepCell>& sweep,
                            double window_lo, double window_hi);

/// Smooth nonconvex test objective 1/2||x||^2 + a sum_j cos(omega x_j)
/// with a = 1, omega = 2 (L = 5, curvature -3 at the origin).
std::shared_ptr<const SmoothObjective> nonconvex_test_objective(
    Eigen::Index dim, double a = 1.0, double omega = 2.0);

struct PlSweepParams {
  std::vector<int> workers{1};
  std::vector<long long> budgets;
  int seeds = 20;
  Eigen::Index dim = 32;
  double sigma2 = 1.0;
  double gamma = 0.5;
  double rho = 1.1;
  long long b1 = 2;
  double initial_gap = 1.0;  ///< f(x1) - f*
  int threads = 1;
};

/// CR-PSGD final gaps E[f(x) - f*] on the strongly convex quadratic
/// testbed (L = mu = 1), seed-averaged per (N, T) cell. Cells run in
/// parallel across (N, T, seed).
std::vector<SweepCell> run_pl_gap_sweep(const PlSweepParams& p);

struct CatalystSweepParams {
  int workers = 4;
  std::vector<long long> budgets;
  int seeds = 20;
  Eigen::Index dim = 8;
  double a = 1.0;
  double omega = 2.0;
  double sigma2 = 1.0;
  double theta = 10.0;  ///< 2L for the defaults
  double gamma = 0.04;
  double rho = 1.02;
  long long b1 = 2;
  double y0_coord = 2.0;
  int threads = 1;
};

/// Catalyst mean-over-k of ||grad f(y_k)||^2 on the nonconvex test
/// objective, seed-averaged per budget.
std::vector<SweepCell> run_catalyst_sweep(const CatalystSweepParams& p);

}  // namespace crpsgd::verify
