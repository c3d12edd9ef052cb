#include "crpsgd/verify.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace crpsgd::verify {

namespace {
constexpr Eigen::Index kLemma1Dim = 4;
}

Lemma1Cell monte_carlo_lemma1(double gamma, int workers, long long batch,
                              double sigma2, long long trials,
                              std::uint64_t seed) {
  if (!(gamma > 0.0) || !(gamma < 1.0))
    throw ConfigError("monte_carlo_lemma1: need 0 < gamma < 1/L with L = 1");
  if (workers < 1 || batch < 1 || trials < 2)
    throw ConfigError("monte_carlo_lemma1: need N, B >= 1 and trials >= 2");

  Lemma1Cell cell;
  cell.gamma = gamma;
  cell.workers = workers;
  cell.batch = batch;
  cell.sigma2 = sigma2;

  // f(x) = 1/2||x||^2, L = mu = 1, f* = 0; start at a point with gap 1.
  const double gap = 1.0;
  const double nb = static_cast<double>(workers) * static_cast<double>(batch);
  const double nu = 0.5 * gamma * (1.0 - gamma);
  cell.lhs_exact = (1.0 - gamma) * (1.0 - gamma) * gap +
                   gamma * gamma * sigma2 / (2.0 * nb);
  cell.rhs_bound =
      (1.0 - nu) * gap + gamma * (2.0 - gamma) * sigma2 / (2.0 * nb);
  cell.closed_form_ok = cell.lhs_exact <= cell.rhs_bound;

  const auto obj = std::make_shared<const IsotropicQuadratic>(kLemma1Dim);
  const GaussianNoiseOracle oracle(obj, sigma2);
  // ||x0||^2 = 2 exactly, so f(x0) - f* = 1 without representation error and
  // the sigma^2 = 0 cells hold with equality.
  Vector x0 = Vector::Zero(kLemma1Dim);
  x0(0) = 1.0;
  x0(1) = 1.0;

  double mean = 0.0;
  double m2 = 0.0;
  Vector g(kLemma1Dim);
  Vector batch_mean_g(kLemma1Dim);
  for (long long trial = 0; trial < trials; ++trial) {
    RngStream stream(seed, 0, static_cast<std::uint64_t>(trial), 0);
    // mean of N*B fresh samples at x0
    for (long long s = 0; s < static_cast<long long>(nb); ++s) {
      oracle.sample_into(x0, stream, g);
      if (s == 0)
        batch_mean_g = g;
      else
        batch_mean_g += (g - batch_mean_g) / static_cast<double>(s + 1);
    }
    const Vector x1 = x0 - gamma * batch_mean_g;
    const double f1 = 0.5 * x1.squaredNorm();
    const double delta = f1 - mean;
    mean += delta / static_cast<double>(trial + 1);
    m2 += delta * (f1 - mean);
  }
  cell.empirical_mean = mean;
  cell.empirical_se =
      std::sqrt(m2 / static_cast<double>(trials - 1) /
                static_cast<double>(trials));
  const double band = 4.0 * cell.empirical_se;
  cell.empirical_ok = std::abs(mean - cell.lhs_exact) <= band &&
                      mean <= cell.rhs_bound + band;
  return cell;
}

Lemma1Report lemma1_grid(long long trials, std::uint64_t seed) {
  Lemma1Report report;
  report.pass = true;
  std::uint64_t cell_seed = seed;
  for (double gamma : {0.01, 0.1, 0.5}) {
    for (int workers : {1, 4}) {
      for (long long batch : {1LL, 8LL}) {
        Lemma1Cell cell =
            monte_carlo_lemma1(gamma, workers, batch, 1.0, trials, cell_seed);
        report.pass =
            report.pass && cell.closed_form_ok && cell.empirical_ok;
        report.cells.push_back(cell);
        cell_seed += 0x10000;
      }
    }
  }
  return report;
}

namespace {

struct IneqStats {
  int violations = 0;
  double max_violation = 0.0;
  double max_gap = 0.0;  // largest |lhs - rhs| relative, for equality flags
};

// Checks lhs <= rhs with relative tolerance.
void check_leq(IneqStats& st, double lhs, double rhs, double rel_tol) {
  const double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
  const double slack = (lhs - rhs) / scale;
  if (slack > rel_tol) {
    ++st.violations;
    st.max_violation = std::max(st.max_violation, slack);
  }
  st.max_gap = std::max(st.max_gap, std::abs(lhs - rhs) / scale);
}

}  // namespace

FactsReport check_facts_suite(const SmoothObjective& obj, int points,
                              std::uint64_t seed) {
  FactsReport report;
  if (!obj.known_min() || !obj.minimizer()) {
    report.notice = "skipped: objective lacks a known minimum or minimizer";
    report.pass = false;
    return report;
  }
  const double f_star = *obj.known_min();
  const Vector x_star = *obj.minimizer();
  const double L = obj.smoothness();
  const std::optional<double> mu = obj.strong_convexity();
  constexpr double kRelTol = 1e-9;

  IneqStats smooth_gap, grad_norm, quad_growth, error_bound;
  RngStream stream(seed, 0, 0, 0);
  for (int p = 0; p < points; ++p) {
    Vector x(obj.dim());
    for (Eigen::Index j = 0; j < x.size(); ++j)
      x(j) = x_star(j) + 2.0 * stream.next_gaussian();
    const double gap = obj.value(x) - f_star;
    const double dist_sq = (x - x_star).squaredNorm();
    const double grad_sq = obj.gradient(x).squaredNorm();

    check_leq(smooth_gap, gap, 0.5 * L * dist_sq, kRelTol);
    check_leq(grad_norm, grad_sq / (2.0 * L), gap, kRelTol);
    if (mu) {
      check_leq(quad_growth, 0.5 * *mu * dist_sq, gap, kRelTol);
      check_leq(error_bound, *mu * std::sqrt(dist_sq), std::sqrt(grad_sq),
                kRelTol);
    }
  }

  auto push = [&](const char* name, const IneqStats& st, bool applicable) {
    FactCheck fc;
    fc.name = name;
    fc.applicable = applicable;
    fc.checked = applicable ? points : 0;
    fc.violations = st.violations;
    fc.max_violation = st.max_violation;
    fc.equality = applicable && st.max_gap <= kRelTol;
    fc.pass = !applicable || st.violations == 0;
    report.facts.push_back(std::move(fc));
  };
  push("smooth-gap-upper-bound", smooth_gap, true);
  push("gradient-norm-lower-bound", grad_norm, true);
  push("quadratic-growth", quad_growth, mu.has_value());
  push("error-bound", error_bound, mu.has_value());
  if (!mu)
    report.notice =
        "strong convexity not declared: quadratic-growth and error-bound skipped";
  report.pass = true;
  for (const auto& fc : report.facts) report.pass = report.pass && fc.pass;
  return report;
}

PowerLawFit fit_power_law(const std::vector<double>& x,
                          const std::vector<double>& y) {
  if (x.size() != y.size())
    throw ConfigError("fit_power_law: size mismatch");
  const int n = static_cast<int>(x.size());
  if (n < 4)
    throw ConfigError("fit_power_law: insufficient data, need >= 4 points");
  double sx = 0.0, sy = 0.0;
  std::vector<double> lx(n), ly(n);
  for (int i = 0; i < n; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0))
      throw ConfigError("fit_power_law: inputs must be positive");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
    sx += lx[i];
    sy += ly[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw ConfigError("fit_power_law: degenerate abscissae");
  PowerLawFit fit;
  fit.n = n;
  fit.exponent = sxy / sxx;
  fit.intercept = my - fit.exponent * mx;
  double rss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = ly[i] - (fit.intercept + fit.exponent * lx[i]);
    rss += r * r;
  }
  fit.residual_rms = std::sqrt(rss / n);
  fit.stderr_exponent =
      n > 2 ? std::sqrt(rss / (n - 2) / sxx) : 0.0;
  return fit;
}

namespace {

FitReport windowed_fit(const std::vector<double>& x,
                       const std::vector<double>& y, double target, double lo,
                       double hi) {
  FitReport rep;
  rep.fit = fit_power_law(x, y);
  rep.target = target;
  rep.window_lo = lo;
  rep.window_hi = hi;
  rep.pass = rep.fit.exponent >= lo && rep.fit.exponent <= hi;
  return rep;
}

}  // namespace

FitReport fit_pl_rate_vs_budget(const std::vector<SweepCell>& sweep,
                                int workers_fixed, double window_lo,
                                double window_hi) {
  std::vector<double> x, y;
  for (const auto& c : sweep) {
    if (c.workers == workers_fixed) {
      x.push_back(static_cast<double>(c.budget));
      y.push_back(c.value);
    }
  }
  return windowed_fit(x, y, -1.0, window_lo, window_hi);
}

FitReport fit_pl_rate_vs_workers(const std::vector<SweepCell>& sweep,
                                 long long budget_fixed, double window_lo,
                                 double window_hi) {
  std::vector<double> x, y;
  for (const auto& c : sweep) {
    if (c.budget == budget_fixed) {
      x.push_back(static_cast<double>(c.workers));
      y.push_back(c.value);
    }
  }
  return windowed_fit(x, y, -1.0, window_lo, window_hi);
}

FitReport fit_catalyst_rate(const std::vector<SweepCell>& sweep,
                            double window_lo, double window_hi) {
  std::vector<double> x, y;
  for (const auto& c : sweep) {
    x.push_back(static_cast<double>(c.budget) *
                static_cast<double>(c.workers));
    y.push_back(c.value);
  }
  return windowed_fit(x, y, -0.5, window_lo, window_hi);
}

std::shared_ptr<const SmoothObjective> nonconvex_test_objective(
    Eigen::Index dim, double a, double omega) {
  return std::make_shared<const QuadraticCosine>(dim, a, omega);
}

std::vector<SweepCell> run_pl_gap_sweep(const PlSweepParams& p) {
  if (p.budgets.empty()) throw ConfigError("run_pl_gap_sweep: no budgets");
  if (p.seeds < 1) throw ConfigError("run_pl_gap_sweep: seeds must be >= 1");

  struct Cell {
    int workers;
    long long budget;
  };
  std::vector<Cell> cells;
  for (int n : p.workers)
    for (long long t : p.budgets) cells.push_back({n, t});

  const long long jobs =
      static_cast<long long>(cells.size()) * static_cast<long long>(p.seeds);
  std::vector<double> gaps(jobs, 0.0);
  const auto obj = std::make_shared<const IsotropicQuadratic>(p.dim);
  const GaussianNoiseOracle oracle(obj, p.sigma2);
  Vector x1 = Vector::Zero(p.dim);
  x1(0) = std::sqrt(2.0 * p.initial_gap);

  parallel_for(jobs, p.threads, [&](long long job) {
    const auto& cell = cells[static_cast<std::size_t>(job / p.seeds)];
    CrPsgdConfig cfg;
    cfg.workers = cell.workers;
    cfg.sfo_budget = cell.budget;
    cfg.x1 = x1;
    cfg.b1 = p.b1;
    cfg.rho = p.rho;
    cfg.gamma = p.gamma;
    cfg.run_seed = 0x9000 + static_cast<std::uint64_t>(job);
    cfg.record_trace = false;
    const WorkerPool pool(cell.workers, 1);
    const RunTrace trace = cr_psgd(oracle, cfg, pool);
    const BatchSchedule sched(p.b1, p.rho);
    if (trace.counters.comm_rounds != sched.num_rounds(cell.budget) ||
        static_cast<double>(trace.counters.comm_rounds + 1) <
            sched.rounds_lower_bound(cell.budget))
      throw std::logic_error("run_pl_gap_sweep: round-count identity violated");
    gaps[job] = obj->value(trace.final_x);  // f* = 0
  });

  std::vector<SweepCell> out;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    double mean = 0.0;
    for (int s = 0; s < p.seeds; ++s)
      mean += gaps[static_cast<long long>(c) * p.seeds + s];
    out.push_back({cells[c].workers, cells[c].budget,
                   mean / static_cast<double>(p.seeds)});
  }
  return out;
}

std::vector<SweepCell> run_catalyst_sweep(const CatalystSweepParams& p) {
  if (p.budgets.empty()) throw ConfigError("run_catalyst_sweep: no budgets");
  if (p.seeds < 1) throw ConfigError("run_catalyst_sweep: seeds must be >= 1");

  const long long jobs =
      static_cast<long long>(p.budgets.size()) * static_cast<long long>(p.seeds);
  std::vector<double> means(jobs, 0.0);
  const auto base = nonconvex_test_objective(p.dim, p.a, p.omega);
  const auto oracle = std::make_shared<const GaussianNoiseOracle>(base, p.sigma2);

  parallel_for(jobs, p.threads, [&](long long job) {
    const long long budget =
        p.budgets[static_cast<std::size_t>(job / p.seeds)];
    CatalystConfig cfg;
    cfg.workers = p.workers;
    cfg.sfo_budget = budget;
    cfg.theta = p.theta;
    cfg.y0 = Vector::Constant(p.dim, p.y0_coord);
    cfg.b1 = p.b1;
    cfg.rho = p.rho;
    cfg.gamma = p.gamma;
    cfg.run_seed = 0xC000 + static_cast<std::uint64_t>(job);
    cfg.record_trace = true;
    const WorkerPool pool(p.workers, 1);
    const RunTrace trace = cr_psgd_catalyst(oracle, cfg, pool);
    double mean = 0.0;
    for (const auto& row : trace.rows) mean += row.grad_norm_sq;
    means[job] = trace.rows.empty()
                     ? 0.0
                     : mean / static_cast<double>(trace.rows.size());
  });

  std::vector<SweepCell> out;
  for (std::size_t b = 0; b < p.budgets.size(); ++b) {
    double mean = 0.0;
    for (int s = 0; s < p.seeds; ++s)
      mean += means[static_cast<long long>(b) * p.seeds + s];
    out.push_back({p.workers, p.budgets[b], mean / static_cast<double>(p.seeds)});
  }
  return out;
}

}  // namespace crpsgd::verify
