#include <doctest.h>

#include <cmath>

#include "crpsgd/algorithms.hpp"
#include "test_util.hpp"

using namespace crpsgd;
using test_util::gd_reference;

namespace {

std::shared_ptr<const GaussianNoiseOracle> quad_oracle(Eigen::Index dim,
                                                       double sigma2) {
  return std::make_shared<const GaussianNoiseOracle>(
      std::make_shared<const IsotropicQuadratic>(dim), sigma2);
}

Vector start3() {
  Vector x(3);
  x << 1.0, -2.0, 0.5;
  return x;
}

}  // namespace

TEST_CASE("noiseless cr-psgd collapses to deterministic gradient descent") {
  const auto oracle = quad_oracle(3, 0.0);
  for (auto [b1, rho, workers] :
       {std::tuple{2LL, 1.5, 1}, {3LL, 2.0, 4}, {2LL, 1.1, 7}}) {
    CrPsgdConfig cfg;
    cfg.workers = workers;
    cfg.sfo_budget = 40;
    cfg.x1 = start3();
    cfg.b1 = b1;
    cfg.rho = rho;
    cfg.gamma = 0.1;
    cfg.run_seed = 5;
    const WorkerPool pool(workers, 2);
    const RunTrace trace = cr_psgd(*oracle, cfg, pool);
    const long long rounds = trace.counters.comm_rounds;
    REQUIRE(rounds >= 2);
    // bit-exact match with the full-gradient recursion, any batch sizes
    CHECK(trace.final_x ==
          gd_reference(oracle->objective(), cfg.x1, cfg.gamma, rounds));
    // and the closed form (1-gamma)^r x1 up to roundoff
    const Vector want = std::pow(0.9, double(rounds)) * cfg.x1;
    CHECK((trace.final_x - want).norm() <= 1e-12 * want.norm());
    CHECK(static_cast<long long>(trace.rows.size()) == rounds);
  }
}

TEST_CASE("cr-psgd with B1 = T runs one round and averages T samples") {
  const auto oracle = quad_oracle(2, 1.0);
  const long long budget = 32;
  CrPsgdConfig cfg;
  cfg.workers = 1;
  cfg.sfo_budget = budget;
  cfg.x1 = Vector::Constant(2, 1.0);
  cfg.b1 = budget;
  cfg.rho = 2.0;
  cfg.gamma = 0.1;
  cfg.run_seed = 3;
  const WorkerPool pool(1, 1);
  const RunTrace trace = cr_psgd(*oracle, cfg, pool);
  CHECK(trace.counters.comm_rounds == 1);
  CHECK(trace.counters.sfo_per_worker == budget);
  const Vector mean = batch_mean(*oracle, cfg.x1, budget, 3, 0, 1);
  CHECK(trace.final_x == sgd_step(cfg.x1, mean, 0.1));
}

TEST_CASE("cr-psgd reference schedule executes 65 rounds") {
  const auto oracle = quad_oracle(4, 1.0);
  CrPsgdConfig cfg;
  cfg.workers = 10;
  cfg.sfo_budget = 10000;
  cfg.x1 = Vector::Zero(4);
  cfg.b1 = 2;
  cfg.rho = 1.1;
  cfg.gamma = 0.1;
  cfg.record_trace = false;
  const WorkerPool pool(10, 2);
  const RunTrace trace = cr_psgd(*oracle, cfg, pool);
  CHECK(trace.counters.comm_rounds == 65);
  CHECK(trace.counters.comm_rounds ==
        BatchSchedule(2, 1.1).num_rounds(10000));
  CHECK(trace.counters.sfo_per_worker == 9755);
}

TEST_CASE("degenerate budget below B1 returns the start point with a flag") {
  const auto oracle = quad_oracle(2, 1.0);
  CrPsgdConfig cfg;
  cfg.workers = 1;
  cfg.sfo_budget = 1;
  cfg.x1 = Vector::Constant(2, 2.0);
  cfg.b1 = 2;
  cfg.rho = 1.1;
  cfg.gamma = 0.1;
  const WorkerPool pool(1, 1);
  const RunTrace trace = cr_psgd(*oracle, cfg, pool);
  CHECK(trace.degenerate);
  CHECK(trace.final_x == cfg.x1);
  CHECK(trace.counters.comm_rounds == 0);
  CHECK(trace.rows.empty());
}

TEST_CASE("cr-psgd validates its configuration") {
  const auto oracle = quad_oracle(2, 1.0);
  const WorkerPool pool(2, 1);
  CrPsgdConfig cfg;
  cfg.workers = 2;
  cfg.sfo_budget = 10;
  cfg.x1 = Vector::Zero(2);
  cfg.gamma = 0.1;
  {
    CrPsgdConfig bad = cfg;
    bad.b1 = 1;
    CHECK_THROWS_AS(cr_psgd(*oracle, bad, pool), ConfigError);
  }
  {
    CrPsgdConfig bad = cfg;
    bad.rho = 1.0;
    CHECK_THROWS_AS(cr_psgd(*oracle, bad, pool), ConfigError);
  }
  {
    CrPsgdConfig bad = cfg;
    bad.gamma = 0.0;
    CHECK_THROWS_AS(cr_psgd(*oracle, bad, pool), ConfigError);
  }
  {
    CrPsgdConfig bad = cfg;
    bad.workers = 3;  // pool mismatch
    CHECK_THROWS_AS(cr_psgd(*oracle, bad, pool), ConfigError);
  }
}

TEST_CASE("psgd with batch T coincides with cr-psgd bit for bit") {
  const auto oracle = quad_oracle(3, 1.0);
  const long long budget = 24;
  FixedBatchConfig fb;
  fb.workers = 4;
  fb.sfo_budget = budget;
  fb.x1 = start3();
  fb.batch = budget;
  fb.gamma = 0.2;
  fb.run_seed = 11;
  CrPsgdConfig cr;
  cr.workers = 4;
  cr.sfo_budget = budget;
  cr.x1 = start3();
  cr.b1 = budget;
  cr.rho = 2.0;
  cr.gamma = 0.2;
  cr.run_seed = 11;
  const WorkerPool pool(4, 2);
  const RunTrace a = psgd_baseline(*oracle, fb, pool);
  const RunTrace b = cr_psgd(*oracle, cr, pool);
  CHECK(a.counters.comm_rounds == 1);
  CHECK(b.counters.comm_rounds == 1);
  CHECK(a.final_x == b.final_x);
}

TEST_CASE("psgd round count is floor(T/B)") {
  const auto oracle = quad_oracle(2, 1.0);
  FixedBatchConfig fb;
  fb.workers = 10;
  fb.sfo_budget = 10000;
  fb.x1 = Vector::Zero(2);
  fb.batch = 2;
  fb.gamma = 0.1;
  fb.record_trace = false;
  const WorkerPool pool(10, 2);
  const RunTrace trace = psgd_baseline(*oracle, fb, pool);
  CHECK(trace.counters.comm_rounds == 5000);
  CHECK(trace.counters.sfo_per_worker == 10000);
}

TEST_CASE("local sgd with H = 1 matches psgd bit for bit") {
  const auto oracle = quad_oracle(3, 1.0);
  FixedBatchConfig fb;
  fb.workers = 3;
  fb.sfo_budget = 50;
  fb.x1 = start3();
  fb.batch = 2;
  fb.gamma = 0.15;
  fb.run_seed = 21;
  LocalSgdConfig ls;
  ls.workers = 3;
  ls.sfo_budget = 50;
  ls.x1 = start3();
  ls.batch = 2;
  ls.gamma = 0.15;
  ls.sync_interval = 1;
  ls.run_seed = 21;
  const WorkerPool pool(3, 2);
  const RunTrace a = psgd_baseline(*oracle, fb, pool);
  const RunTrace b = local_sgd_baseline(*oracle, ls, pool);
  CHECK(a.final_x == b.final_x);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].loss == b.rows[i].loss);
    CHECK(a.rows[i].grad_norm_sq == b.rows[i].grad_norm_sq);
    CHECK(a.rows[i].cum_sfo == b.rows[i].cum_sfo);
    CHECK(a.rows[i].cum_comm == b.rows[i].cum_comm);
    CHECK(a.rows[i].batch == b.rows[i].batch);
  }
  CHECK(a.algo == "psgd");
  CHECK(b.algo == "local-sgd");
}

TEST_CASE("noiseless local sgd equals deterministic descent") {
  const auto oracle = quad_oracle(3, 0.0);
  LocalSgdConfig ls;
  ls.workers = 4;
  ls.sfo_budget = 60;
  ls.x1 = start3();
  ls.batch = 2;
  ls.gamma = 0.1;
  ls.sync_interval = 5;
  const WorkerPool pool(4, 2);
  const RunTrace trace = local_sgd_baseline(*oracle, ls, pool);
  // 6 segments of 5 local steps each
  CHECK(trace.counters.comm_rounds == 6);
  CHECK(trace.final_x ==
        gd_reference(oracle->objective(), ls.x1, ls.gamma, 30));
}

TEST_CASE("noiseless equivalence across the three algorithms") {
  const auto oracle = quad_oracle(3, 0.0);
  const Vector x1 = start3();
  const WorkerPool pool(2, 1);
  // three gradient steps per worker along each path
  CrPsgdConfig cr;
  cr.workers = 2;
  cr.sfo_budget = 14;  // batches 2, 4, 8
  cr.x1 = x1;
  cr.b1 = 2;
  cr.rho = 2.0;
  cr.gamma = 0.3;
  FixedBatchConfig fb;
  fb.workers = 2;
  fb.sfo_budget = 6;
  fb.x1 = x1;
  fb.batch = 2;
  fb.gamma = 0.3;
  LocalSgdConfig ls;
  ls.workers = 2;
  ls.sfo_budget = 6;
  ls.x1 = x1;
  ls.batch = 2;
  ls.gamma = 0.3;
  ls.sync_interval = 3;
  const Vector want = gd_reference(oracle->objective(), x1, 0.3, 3);
  CHECK(cr_psgd(*oracle, cr, pool).final_x == want);
  CHECK(psgd_baseline(*oracle, fb, pool).final_x == want);
  CHECK(local_sgd_baseline(*oracle, ls, pool).final_x == want);
}

TEST_CASE("local sgd comm rounds arithmetic") {
  const auto oracle = quad_oracle(2, 1.0);
  LocalSgdConfig ls;
  ls.workers = 10;
  ls.sfo_budget = 10000;
  ls.x1 = Vector::Zero(2);
  ls.batch = 2;
  ls.gamma = 0.05;
  ls.sync_interval = 10;
  ls.record_trace = false;
  const WorkerPool pool(10, 2);
  const RunTrace trace = local_sgd_baseline(*oracle, ls, pool);
  CHECK(trace.counters.comm_rounds == 500);
}

TEST_CASE("trace rows carry exact cumulative counters") {
  const auto oracle = quad_oracle(2, 1.0);
  CrPsgdConfig cfg;
  cfg.workers = 3;
  cfg.sfo_budget = 100;
  cfg.x1 = Vector::Constant(2, 1.0);
  cfg.b1 = 2;
  cfg.rho = 1.5;
  cfg.gamma = 0.1;
  const WorkerPool pool(3, 1);
  const RunTrace trace = cr_psgd(*oracle, cfg, pool);
  long long sfo = 0;
  long long t = 0;
  const BatchSchedule sched(2, 1.5);
  for (const auto& row : trace.rows) {
    ++t;
    sfo += sched.batch_size(t);
    CHECK(row.round_t == t);
    CHECK(row.batch == sched.batch_size(t));
    CHECK(row.cum_sfo == sfo);
    CHECK(row.cum_comm == t);
  }
  CHECK(trace.counters.sfo_per_worker == sfo);
  CHECK(sfo <= 100);
}

TEST_CASE("catalyst with N = T = 1 makes a single degenerate inner call") {
  const auto base = std::make_shared<const QuadraticCosine>(2, 1.0, 2.0);
  const auto oracle = std::make_shared<const GaussianNoiseOracle>(base, 1.0);
  CatalystConfig cfg;
  cfg.workers = 1;
  cfg.sfo_budget = 1;
  cfg.theta = 2.0 * base->smoothness();
  cfg.y0 = Vector::Constant(2, 1.0);
  cfg.b1 = 2;
  cfg.rho = 1.1;
  cfg.gamma = 0.05;
  const WorkerPool pool(1, 1);
  const RunTrace trace = cr_psgd_catalyst(oracle, cfg, pool);
  CHECK(trace.rows.size() == 1);       // K = floor(sqrt(1)) = 1 outer call
  CHECK(trace.degenerate);             // inner budget 1 < B1 = 2
  CHECK(trace.final_x == cfg.y0);
  CHECK(trace.counters.comm_rounds == 0);
}

TEST_CASE("noiseless catalyst matches an inexact proximal-point reference") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 2.0;
  a(1, 1) = 1.0;
  const auto base = std::make_shared<const QuadraticPL>(a, Vector::Zero(2));
  const auto oracle = std::make_shared<const GaussianNoiseOracle>(base, 0.0);
  CatalystConfig cfg;
  cfg.workers = 2;
  cfg.sfo_budget = 64;
  cfg.theta = 2.0 * base->smoothness();
  cfg.y0 = Vector::Constant(2, 3.0);
  cfg.b1 = 2;
  cfg.rho = 1.5;
  cfg.gamma = 0.05;
  const WorkerPool pool(2, 1);
  const RunTrace trace = cr_psgd_catalyst(oracle, cfg, pool);

  // reference: K outer steps, each inner call = r full-gradient steps on h
  const long long outer = 11;        // floor(sqrt(2*64)) = 11
  const long long inner_budget = 5;  // floor(sqrt(64/2)) = 5
  const long long inner_rounds = BatchSchedule(2, 1.5).num_rounds(inner_budget);
  Vector y = cfg.y0;
  for (long long k = 0; k < outer; ++k) {
    Vector z = y;
    for (long long r = 0; r < inner_rounds; ++r)
      z = z - cfg.gamma * (base->gradient(z) + cfg.theta * (z - y));
    y = z;
  }
  CHECK(static_cast<long long>(trace.rows.size()) == outer);
  CHECK(trace.counters.comm_rounds == outer * inner_rounds);
  CHECK((trace.final_x - y).cwiseAbs().maxCoeff() <= 1e-10);
}

namespace {

// Oracle wrapper that records the first point sampled after each reset and
// checks the proximal gradient identity sample-by-sample.
class SpyOracle final : public StochasticOracle {
 public:
  SpyOracle(std::shared_ptr<const StochasticOracle> base,
            std::shared_ptr<const StochasticOracle> raw, Vector center,
            double theta, std::vector<Vector>* first_points)
      : base_(std::move(base)),
        raw_(std::move(raw)),
        center_(std::move(center)),
        theta_(theta),
        first_points_(first_points) {}

  std::shared_ptr<const SmoothObjective> objective_ptr() const override {
    return base_->objective_ptr();
  }
  double variance_bound() const override { return base_->variance_bound(); }
  void sample_into(const Vector& x, RngStream& stream,
                   Vector& out) const override {
    if (!seen_) {
      first_points_->push_back(x);
      seen_ = true;
    }
    RngStream replay = stream;
    base_->sample_into(x, stream, out);
    Vector raw_sample(x.size());
    raw_->sample_into(x, replay, raw_sample);
    const Vector expect = raw_sample + theta_ * (x - center_);
    if ((out - expect).norm() > 0.0)
      throw std::logic_error("proximal sample identity violated");
  }

 private:
  std::shared_ptr<const StochasticOracle> base_;
  std::shared_ptr<const StochasticOracle> raw_;
  Vector center_;
  double theta_;
  std::vector<Vector>* first_points_;
  mutable bool seen_ = false;
};

}  // namespace

TEST_CASE("catalyst warm starts and proximal samples verified in-flight") {
  const auto base = std::make_shared<const QuadraticCosine>(3, 1.0, 2.0);
  const auto raw = std::make_shared<const GaussianNoiseOracle>(base, 1.0);
  const double theta = 2.0 * base->smoothness();

  std::vector<Vector> first_points;
  std::vector<Vector> centers;
  OracleFactory factory = [&](const Vector& center) {
    centers.push_back(center);
    auto prox = std::make_shared<const ProximalOracle>(raw, center, theta);
    return std::make_shared<const SpyOracle>(prox, raw, center, theta,
                                             &first_points);
  };

  CatalystConfig cfg;
  cfg.workers = 2;
  cfg.sfo_budget = 128;
  cfg.theta = theta;
  cfg.y0 = Vector::Constant(3, 1.5);
  cfg.b1 = 2;
  cfg.rho = 1.3;
  cfg.gamma = 0.04;
  const WorkerPool pool(2, 1);
  const RunTrace trace = cr_psgd_catalyst(*base, factory, cfg, pool);

  const long long outer = 16;  // floor(sqrt(2*128))
  REQUIRE(static_cast<long long>(centers.size()) == outer);
  REQUIRE(first_points.size() == centers.size());
  // inner call k warm-starts exactly at its proximal center y^(k-1)
  for (std::size_t k = 0; k < centers.size(); ++k)
    CHECK(first_points[k] == centers[k]);
  CHECK(centers[0] == cfg.y0);
  CHECK(static_cast<long long>(trace.rows.size()) == outer);
}

TEST_CASE("catalyst stationarity improves with a larger total budget") {
  const auto base = std::make_shared<const QuadraticCosine>(4, 1.0, 2.0);
  const auto oracle = std::make_shared<const GaussianNoiseOracle>(base, 1.0);
  auto mean_grad = [&](long long budget) {
    double total = 0.0;
    const int seeds = 3;
    for (int s = 0; s < seeds; ++s) {
      CatalystConfig cfg;
      cfg.workers = 4;
      cfg.sfo_budget = budget;
      cfg.theta = 10.0;
      cfg.y0 = Vector::Constant(4, 2.0);
      cfg.b1 = 2;
      cfg.rho = 1.02;
      cfg.gamma = 0.04;
      cfg.run_seed = 100 + s;
      const WorkerPool pool(4, 2);
      const RunTrace trace = cr_psgd_catalyst(oracle, cfg, pool);
      double m = 0.0;
      for (const auto& row : trace.rows) m += row.grad_norm_sq;
      total += m / trace.rows.size();
    }
    return total / seeds;
  };
  CHECK(mean_grad(16384) < mean_grad(256));
}

TEST_CASE("catalyst rejects theta at or below the smoothness") {
  const auto base = std::make_shared<const QuadraticCosine>(2, 1.0, 2.0);
  const auto oracle = std::make_shared<const GaussianNoiseOracle>(base, 1.0);
  CatalystConfig cfg;
  cfg.workers = 1;
  cfg.sfo_budget = 16;
  cfg.theta = base->smoothness();  // must be strictly above
  cfg.y0 = Vector::Zero(2);
  const WorkerPool pool(1, 1);
  CHECK_THROWS_AS(cr_psgd_catalyst(oracle, cfg, pool), ConfigError);
}

TEST_CASE("full runs are identical under any parallelism degree") {
  const auto base = std::make_shared<const QuadraticCosine>(5, 1.0, 2.0);
  const auto oracle = std::make_shared<const GaussianNoiseOracle>(base, 1.0);
  std::vector<Vector> finals;
  std::vector<std::vector<TraceRow>> rows;
  for (int threads : {1, 2, 8}) {
    CrPsgdConfig cfg;
    cfg.workers = 8;
    cfg.sfo_budget = 500;
    cfg.x1 = Vector::Constant(5, 1.0);
    cfg.b1 = 2;
    cfg.rho = 1.2;
    cfg.gamma = 0.05;
    cfg.run_seed = 77;
    const WorkerPool pool(8, threads);
    const RunTrace t = cr_psgd(*oracle, cfg, pool);
    finals.push_back(t.final_x);
    rows.push_back(t.rows);
  }
  CHECK(finals[0] == finals[1]);
  CHECK(finals[0] == finals[2]);
  for (std::size_t i = 0; i < rows[0].size(); ++i) {
    CHECK(rows[0][i].loss == rows[1][i].loss);
    CHECK(rows[0][i].loss == rows[2][i].loss);
  }
}

TEST_CASE("stream keys are never reused within a run") {
  const auto base = std::make_shared<const QuadraticCosine>(3, 1.0, 2.0);
  const auto oracle = std::make_shared<const GaussianNoiseOracle>(base, 1.0);
  StreamAudit::enable();
  {
    CatalystConfig cfg;
    cfg.workers = 2;
    cfg.sfo_budget = 64;
    cfg.theta = 10.0;
    cfg.y0 = Vector::Constant(3, 1.0);
    cfg.b1 = 2;
    cfg.rho = 1.3;
    cfg.gamma = 0.04;
    const WorkerPool pool(2, 1);
    CHECK_NOTHROW(cr_psgd_catalyst(oracle, cfg, pool));
  }
  StreamAudit::disable();
  StreamAudit::enable();
  {
    LocalSgdConfig ls;
    ls.workers = 3;
    ls.sfo_budget = 48;
    ls.x1 = Vector::Constant(3, 1.0);
    ls.batch = 2;
    ls.gamma = 0.05;
    ls.sync_interval = 4;
    const WorkerPool pool(3, 1);
    CHECK_NOTHROW(local_sgd_baseline(*oracle, ls, pool));
  }
  StreamAudit::disable();
}
