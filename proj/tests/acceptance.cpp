// Acceptance suite: one pass/fail line per criterion. Run all by default or
// a subset by listing criterion numbers as arguments.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "crpsgd/algorithms.hpp"
#include "crpsgd/cli.hpp"
#include "crpsgd/schedule.hpp"
#include "crpsgd/verify.hpp"
#include "test_util.hpp"

using namespace crpsgd;
namespace v = crpsgd::verify;

namespace {

using clock_type = std::chrono::steady_clock;

struct Checker {
  std::vector<std::string> failures;
  void require(bool cond, const std::string& what) {
    if (!cond) failures.push_back(what);
  }
  template <typename T>
  void require_eq(const T& got, const T& want, const std::string& what) {
    if (!(got == want))
      failures.push_back(what + " (got " + std::to_string(got) + ", want " +
                         std::to_string(want) + ")");
  }
  void require_in(double x, double lo, double hi, const std::string& what) {
    if (!(x >= lo && x <= hi))
      failures.push_back(what + " (got " + std::to_string(x) + ", window [" +
                         std::to_string(lo) + ", " + std::to_string(hi) + "])");
  }
};

int hw_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return std::clamp(static_cast<int>(n), 1, 8);
}

// ---------------------------------------------------------------------------
// 1. Communication complexity: exact round counts and the >= 70x reduction.

void criterion1(Checker& c) {
  const auto t0 = clock_type::now();
  const BatchSchedule sched(2, 1.1);
  const long long rounds = sched.num_rounds(10000);
  c.require_eq(rounds, 65LL, "schedule enumeration round count");
  c.require_in(static_cast<double>(rounds), 64.0, 66.0,
               "round count within the analytic 65 +/- 1");
  c.require(static_cast<double>(rounds + 1) >= sched.rounds_lower_bound(10000),
            "t* + 1 >= log_rho(T(rho-1)/B1 + 1)");
  c.require(5000.0 / static_cast<double>(rounds) >= 70.0,
            "communication reduction >= 70x");
  const double count_seconds =
      std::chrono::duration<double>(clock_type::now() - t0).count();
  c.require(count_seconds < 1.0, "counting runtime under 1 s");

  // full runs at reduced scale: the executed round counts must equal the
  // enumeration and the PSGD arithmetic exactly
  const auto t1 = clock_type::now();
  const auto lp = std::make_shared<const LogisticProblem>(
      generate_logistic_instance(50, 10, 1000, 0.001, 1));
  const auto oracle = std::make_shared<const LogisticSampleOracle>(lp);
  const WorkerPool pool(10, hw_threads());
  CrPsgdConfig cr;
  cr.workers = 10;
  cr.sfo_budget = 10000;
  cr.x1 = Vector::Zero(50);
  cr.b1 = 2;
  cr.rho = 1.1;
  cr.gamma = 0.1;
  cr.run_seed = 1;
  cr.record_trace = false;
  const RunTrace tc = cr_psgd(*oracle, cr, pool);
  c.require_eq(tc.counters.comm_rounds, rounds,
               "cr-psgd executed rounds equal the enumeration");
  c.require(tc.counters.sfo_per_worker <= 10000,
            "cr-psgd per-worker samples within the budget");
  FixedBatchConfig fb;
  fb.workers = 10;
  fb.sfo_budget = 10000;
  fb.x1 = Vector::Zero(50);
  fb.batch = 2;
  fb.gamma = 0.1;
  fb.run_seed = 1;
  fb.record_trace = false;
  const RunTrace tp = psgd_baseline(*oracle, fb, pool);
  c.require_eq(tp.counters.comm_rounds, 5000LL, "psgd uses exactly 5000 rounds");
  const double run_seconds =
      std::chrono::duration<double>(clock_type::now() - t1).count();
  c.require(run_seconds < 60.0, "logistic runs under 1 min");
}

// ---------------------------------------------------------------------------
// 2. Per-step contraction: closed form with zero tolerance on the 12-cell
//    grid, empirical cross-check within 4-sigma at 1e4 trials.

void criterion2(Checker& c) {
  const auto report = v::lemma1_grid(10000, 0x2CE11);
  c.require_eq(report.cells.size(), std::size_t{12}, "grid has 12 cells");
  for (const auto& cell : report.cells) {
    char label[128];
    std::snprintf(label, sizeof(label), "cell gamma=%g N=%d B=%lld",
                  cell.gamma, cell.workers, cell.batch);
    c.require(cell.closed_form_ok,
              std::string(label) + ": closed-form lhs <= bound");
    c.require(cell.empirical_ok,
              std::string(label) + ": empirical mean within 4-sigma bands");
  }
}

// ---------------------------------------------------------------------------
// 3. O(1/(NT)) rate and linear speedup on the strongly convex quadratic.

void criterion3(Checker& c) {
  c.require(rate_constants(0.5, 1.0, 1.0, 1.1, 2, 1.0).valid,
            "sweep configuration satisfies rho < 1/(1-nu)");
  v::PlSweepParams p;
  p.workers = {1, 2, 4, 8};
  p.budgets = {1 << 12, 1 << 13, 1 << 14, 1 << 15, 1 << 16};
  p.seeds = 24;
  p.dim = 32;
  p.sigma2 = 1.0;
  p.gamma = 0.5;
  p.rho = 1.1;
  p.b1 = 2;
  p.threads = hw_threads();
  const auto sweep = v::run_pl_gap_sweep(p);
  const auto fit = v::fit_pl_rate_vs_budget(sweep, 1, -1.3, -0.8);
  c.require_in(fit.fit.exponent, -1.3, -0.8, "gap-vs-T exponent at N = 1");
  auto gap_at = [&](int workers) {
    for (const auto& cell : sweep)
      if (cell.workers == workers && cell.budget == (1 << 16))
        return cell.value;
    return -1.0;
  };
  for (int n : {1, 2, 4}) {
    char label[64];
    std::snprintf(label, sizeof(label), "gap ratio doubling N = %d -> %d", n,
                  2 * n);
    c.require_in(gap_at(n) / gap_at(2 * n), 1.6, 2.5, label);
  }
}

// ---------------------------------------------------------------------------
// 4. O(1/sqrt(NT)) stationarity: mean squared gradient norm halves (within
//    [1.4, 2.8]) on each quadrupling of the total budget.

void criterion4(Checker& c) {
  // validity condition for the proximal subproblems: mu = theta - L,
  // smoothness theta + L
  c.require(rate_constants(0.04, 10.0 - 5.0, 10.0 + 5.0, 1.02, 2, 1.0).valid,
            "catalyst configuration satisfies rho < 1/(1-nu)");
  v::CatalystSweepParams p;
  p.workers = 4;
  p.budgets = {8192, 32768, 131072};
  p.seeds = 20;
  p.dim = 8;
  p.a = 1.0;
  p.omega = 2.0;
  p.sigma2 = 1.0;
  p.theta = 10.0;  // 2L for L = 1 + a*omega^2 = 5
  p.gamma = 0.04;
  p.rho = 1.02;
  p.b1 = 2;
  p.threads = hw_threads();
  const auto sweep = v::run_catalyst_sweep(p);
  c.require_eq(sweep.size(), std::size_t{3}, "three budget points");
  for (std::size_t i = 0; i + 1 < sweep.size(); ++i) {
    char label[96];
    std::snprintf(label, sizeof(label),
                  "mean-grad-sq ratio quadrupling NT = %lld -> %lld",
                  4LL * sweep[i].budget, 4LL * sweep[i + 1].budget);
    c.require_in(sweep[i].value / sweep[i + 1].value, 1.4, 2.8, label);
  }
}

// ---------------------------------------------------------------------------
// 5. Desk-scale reproduction of the distributed-logistic comparison:
//    loss parity within 1% at equal per-worker budget, <= 2% of the
//    communication, swept local SGD in between.

void criterion5(Checker& c) {
  const auto lp = std::make_shared<const LogisticProblem>(
      generate_logistic_instance(50, 10, 1000, 0.001, 1, /*zero_mean=*/true));
  const auto oracle = std::make_shared<const LogisticSampleOracle>(lp);
  const WorkerPool pool(10, hw_threads());
  const Vector x1 = Vector::Zero(50);
  const int seeds = 10;

  double cr_loss = 0.0;
  long long cr_comm = 0;
  for (int s = 1; s <= seeds; ++s) {
    CrPsgdConfig cr;
    cr.workers = 10;
    cr.sfo_budget = 10000;
    cr.x1 = x1;
    cr.b1 = 2;
    cr.rho = 1.06;
    cr.gamma = 1.05;
    cr.run_seed = static_cast<std::uint64_t>(s);
    cr.record_trace = false;
    const RunTrace t = cr_psgd(*oracle, cr, pool);
    cr_loss += lp->value(t.final_x);
    cr_comm = t.counters.comm_rounds;
  }
  cr_loss /= seeds;

  double psgd_loss = 0.0;
  long long psgd_comm = 0;
  for (int s = 1; s <= seeds; ++s) {
    FixedBatchConfig fb;
    fb.workers = 10;
    fb.sfo_budget = 10000;
    fb.x1 = x1;
    fb.batch = 2;
    fb.gamma = 0.05;
    fb.run_seed = static_cast<std::uint64_t>(s);
    fb.record_trace = false;
    const RunTrace t = psgd_baseline(*oracle, fb, pool);
    psgd_loss += lp->value(t.final_x);
    psgd_comm = t.counters.comm_rounds;
  }
  psgd_loss /= seeds;

  c.require_eq(psgd_comm, 5000LL, "psgd communication rounds");
  c.require_eq(cr_comm, BatchSchedule(2, 1.06).num_rounds(10000),
               "cr-psgd rounds equal the enumeration");
  c.require(static_cast<double>(cr_comm) <= 0.02 * psgd_comm,
            "cr-psgd uses at most 2% of psgd communication");
  c.require_in((cr_loss - psgd_loss) / psgd_loss, -0.01, 0.01,
               "final-loss parity within 1%");

  // sweep H and pick the largest one within 1.01x of the H = 1 loss
  double ref_loss = 0.0;
  long long selected_h = -1;
  long long selected_comm = 0;
  for (long long h : {1LL, 2LL, 5LL, 10LL, 20LL, 50LL}) {
    double loss = 0.0;
    long long comm = 0;
    for (int s = 1; s <= seeds; ++s) {
      LocalSgdConfig ls;
      ls.workers = 10;
      ls.sfo_budget = 10000;
      ls.x1 = x1;
      ls.batch = 2;
      ls.gamma = 0.05;
      ls.sync_interval = h;
      ls.run_seed = static_cast<std::uint64_t>(s);
      ls.record_trace = false;
      const RunTrace t = local_sgd_baseline(*oracle, ls, pool);
      loss += lp->value(t.final_x);
      comm = t.counters.comm_rounds;
    }
    loss /= seeds;
    if (h == 1) ref_loss = loss;
    if (loss <= 1.01 * ref_loss && h > selected_h) {
      selected_h = h;
      selected_comm = comm;
    }
  }
  c.require(selected_h > 1, "a communication-skipping interval is selected");
  c.require(selected_comm > cr_comm && selected_comm < psgd_comm,
            "swept local SGD sits between the two in comm rounds (H = " +
                std::to_string(selected_h) + ", " +
                std::to_string(selected_comm) + " rounds)");
}

// ---------------------------------------------------------------------------
// 6. Determinism: byte-identical trace CSVs at parallelism 1, 2, N.

void criterion6(Checker& c) {
  using cli::json;
  auto csv_for = [](json cfg, int threads) {
    cfg["threads"] = threads;
    const json resolved = cli::resolve_run_config(cfg);
    const cli::BuiltProblem problem = cli::build_problem(resolved["problem"]);
    std::vector<RunTrace> traces;
    for (const auto& s : resolved["seeds"])
      traces.push_back(cli::execute_run(resolved, problem,
                                        s.get<std::uint64_t>()));
    return cli::traces_to_csv("determinism", traces);
  };

  json cr;
  cr["run_id"] = "det-cr";
  cr["algorithm"] = "cr-psgd";
  cr["problem"] = {{"family", "quadcos"}, {"dim", 8}, {"sigma2", 1.0}};
  cr["params"] = {{"workers", 8}, {"budget", 4096}, {"b1", 2},
                  {"rho", 1.1},   {"gamma", 0.04}};
  cr["seeds"] = json::array({1, 2});

  json cat;
  cat["run_id"] = "det-cat";
  cat["algorithm"] = "cr-psgd-catalyst";
  cat["problem"] = {{"family", "quadcos"}, {"dim", 6}, {"sigma2", 1.0}};
  cat["params"] = {{"workers", 4}, {"budget", 1024}, {"b1", 2},
                   {"rho", 1.02},  {"gamma", 0.04},  {"theta", 10.0}};
  cat["seeds"] = json::array({3});

  json local;
  local["run_id"] = "det-local";
  local["algorithm"] = "local-sgd";
  local["problem"] = {{"family", "logistic"},
                      {"generate",
                       {{"dim", 10},
                        {"workers", 10},
                        {"samples", 50},
                        {"reg", 0.001},
                        {"seed", 5}}}};
  local["params"] = {{"workers", 10}, {"budget", 2000}, {"batch", 2},
                     {"h", 5},        {"gamma", 0.05}};
  local["seeds"] = json::array({1});

  int idx = 0;
  for (const json& cfg : {cr, cat, local}) {
    const int workers = cfg["params"]["workers"].get<int>();
    const std::string at1 = csv_for(cfg, 1);
    const std::string at2 = csv_for(cfg, 2);
    const std::string atn = csv_for(cfg, workers);
    const std::string label = "config " + std::to_string(idx++);
    c.require(at1 == at2, label + ": threads 1 vs 2 byte-identical");
    c.require(at1 == atn,
              label + ": threads 1 vs " + std::to_string(workers) +
                  " byte-identical");
    c.require(!at1.empty() && at1.find('\n') != std::string::npos,
              label + ": trace is non-trivial");
  }
}

// ---------------------------------------------------------------------------
// 7. Supplement facts at 1e3 points on 10 random quadratics plus the
//    exact-equality witness.

void criterion7(Checker& c) {
  {
    const IsotropicQuadratic witness(6, 3.0);
    const auto report = v::check_facts_suite(witness, 1000, 0xFAC7);
    c.require(report.pass, "witness f = (L/2)||x||^2 passes all facts");
    c.require(report.facts.size() == 4 && report.facts[1].equality,
              "gradient-norm bound holds with equality on the witness");
  }
  for (int i = 0; i < 10; ++i) {
    const QuadraticPL q = generate_quadratic_instance(
        8, 8, 8, 0xF00D + static_cast<std::uint64_t>(i));
    const auto report =
        v::check_facts_suite(q, 1000, 0xFAC8 + static_cast<std::uint64_t>(i));
    c.require(report.pass,
              "random quadratic " + std::to_string(i) + " passes all facts");
    for (const auto& f : report.facts)
      c.require(f.applicable,
                "random quadratic " + std::to_string(i) + ": " + f.name +
                    " applicable");
  }
}

// ---------------------------------------------------------------------------
// 8. Analytic gradients against central finite differences.

void criterion8(Checker& c) {
  auto check_gradients = [&](const SmoothObjective& obj,
                             const std::string& name, std::uint64_t seed,
                             double scale) {
    RngStream s(seed, 0, 0, 0);
    for (int p = 0; p < 20; ++p) {
      Vector x(obj.dim());
      for (Eigen::Index i = 0; i < x.size(); ++i)
        x(i) = scale * s.next_gaussian();
      const double err =
          test_util::rel_err(obj.gradient(x), test_util::fd_gradient(obj, x));
      if (err > 1e-5) {
        c.failures.push_back(name + ": gradient mismatch " +
                             std::to_string(err) + " at point " +
                             std::to_string(p));
        return;
      }
    }
  };
  const auto lp = std::make_shared<const LogisticProblem>(
      generate_logistic_instance(10, 2, 100, 0.01, 8));
  check_gradients(*lp, "logistic", 0x81, 0.5);
  const QuadraticPL q = generate_quadratic_instance(8, 5, 4, 0x82);
  check_gradients(q, "quadratic-pl (rank deficient)", 0x83, 1.0);
  const ProximalObjective h =
      make_proximal(lp, Vector::Constant(10, 0.3), 2.0 * lp->smoothness());
  check_gradients(h, "proximal-wrapped logistic", 0x84, 0.5);
  const auto f = v::nonconvex_test_objective(10);
  check_gradients(*f, "nonconvex quadratic-cosine", 0x85, 1.5);
}

struct CriterionSpec {
  int id;
  const char* name;
  void (*fn)(Checker&);
  double budget_seconds;
};

const CriterionSpec kCriteria[] = {
    {1, "communication complexity (65 rounds vs 5000, >= 70x)", criterion1, 61.0},
    {2, "per-step contraction closed-form + Monte-Carlo grid", criterion2, 30.0},
    {3, "1/(NT) rate and linear speedup on the P-L quadratic", criterion3, 600.0},
    {4, "1/sqrt(NT) stationarity rate for the catalyst loop", criterion4, 900.0},
    {5, "desk-scale logistic comparison (parity, 2% comm)", criterion5, 300.0},
    {6, "byte-identical traces at parallelism 1/2/N", criterion6, 60.0},
    {7, "smooth/strong-convexity facts on random quadratics", criterion7, 10.0},
    {8, "analytic vs central-difference gradients", criterion8, 10.0},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& spec : kCriteria) {
    if (!selected.empty() && !selected.count(spec.id)) continue;
    Checker checker;
    const auto t0 = clock_type::now();
    try {
      spec.fn(checker);
    } catch (const std::exception& e) {
      checker.failures.push_back(std::string("exception: ") + e.what());
    }
    const double seconds =
        std::chrono::duration<double>(clock_type::now() - t0).count();
    if (seconds > spec.budget_seconds)
      checker.failures.push_back("runtime " + std::to_string(seconds) +
                                 " s exceeds the stated budget");
    if (checker.failures.empty()) {
      std::printf("[PASS] criterion %d: %s (%.1f s)\n", spec.id, spec.name,
                  seconds);
    } else {
      ++failures;
      std::printf("[FAIL] criterion %d: %s (%.1f s)\n", spec.id, spec.name,
                  seconds);
      for (const auto& f : checker.failures)
        std::printf("       - %s\n", f.c_str());
    }
    std::fflush(stdout);
  }
  return failures;
}
