#include "crpsgd/algorithms.hpp"

#include <cmath>

namespace crpsgd {

namespace {

long long isqrt_floor(long long v) {
  if (v < 0) throw ConfigError("isqrt_floor: negative value");
  long long r = static_cast<long long>(std::sqrt(static_cast<double>(v)));
  while (r > 0 && r * r > v) --r;
  while ((r + 1) * (r + 1) <= v) ++r;
  return r;
}

void record_round(RunTrace& trace, const SmoothObjective& obj, const Vector& x,
                  long long outer_k, long long round_t, long long batch,
                  const Counters& c, bool record_trace, bool record_iterates) {
  if (!record_trace) return;
  TraceRow row;
  row.outer_k = outer_k;
  row.round_t = round_t;
  row.batch = batch;
  row.cum_sfo = c.sfo_per_worker;
  row.cum_comm = c.comm_rounds;
  row.loss = obj.value(x);
  row.grad_norm_sq = obj.gradient(x).squaredNorm();
  trace.rows.push_back(std::move(row));
  if (record_iterates) trace.iterates.push_back(x);
}

// One synchronous round: per-worker batch averages, tree aggregation, step.
Vector sync_round(const StochasticOracle& oracle, const Vector& x, long long b,
                  const WorkerPool& pool, std::uint64_t run, double gamma,
                  Counters& counters) {
  const std::uint64_t round =
      static_cast<std::uint64_t>(counters.comm_rounds) + 1;
  const std::vector<Vector> gs =
      parallel_batch_averages(oracle, x, b, pool, run, round, counters);
  const Vector g = aggregate(gs, counters);
  return sgd_step(x, g, gamma);
}

// Shared driver for the constant-batch round loop (psgd, and local SGD at
// H = 1, which must coincide with psgd exactly).
RunTrace fixed_batch_rounds(const StochasticOracle& oracle,
                            const FixedBatchConfig& cfg,
                            const WorkerPool& pool, const std::string& algo) {
  if (cfg.batch < 1) throw ConfigError(algo + ": batch must be >= 1");
  if (!(cfg.gamma > 0.0)) throw ConfigError(algo + ": gamma must be > 0");
  check_dim(oracle.objective().dim(), cfg.x1.size(), algo.c_str());

  RunTrace trace;
  trace.algo = algo;
  trace.run_seed = cfg.run_seed;
  Vector x = cfg.x1;
  long long t = 0;
  while (cfg.batch <= cfg.sfo_budget - trace.counters.sfo_per_worker) {
    x = sync_round(oracle, x, cfg.batch, pool, cfg.run_seed, cfg.gamma,
                   trace.counters);
    ++t;
    record_round(trace, oracle.objective(), x, 0, t, cfg.batch, trace.counters,
                 cfg.record_trace, cfg.record_iterates);
  }
  trace.degenerate = t == 0;
  trace.final_x = std::move(x);
  return trace;
}

}  // namespace

RunTrace cr_psgd(const StochasticOracle& oracle, const CrPsgdConfig& cfg,
                 const WorkerPool& pool, Counters* shared) {
  if (!(cfg.gamma > 0.0)) throw ConfigError("cr_psgd: gamma must be > 0");
  if (pool.workers() != cfg.workers)
    throw ConfigError("cr_psgd: pool size does not match config");
  check_dim(oracle.objective().dim(), cfg.x1.size(), "cr_psgd");
  const BatchSchedule sched(cfg.b1, cfg.rho, cfg.cap);

  RunTrace trace;
  trace.algo = "cr-psgd";
  trace.run_seed = cfg.run_seed;
  Counters local;
  Counters& counters = shared ? *shared : local;
  const Counters at_start = counters;

  Vector x = cfg.x1;
  long long t = 0;
  long long consumed = 0;
  while (true) {
    const long long b = sched.batch_size(t + 1);
    if (b > cfg.sfo_budget - consumed) break;
    x = sync_round(oracle, x, b, pool, cfg.run_seed, cfg.gamma, counters);
    consumed += b;
    ++t;
    record_round(trace, oracle.objective(), x, 0, t, b, counters,
                 cfg.record_trace, cfg.record_iterates);
  }
  trace.degenerate = t == 0;
  trace.final_x = std::move(x);
  trace.counters.sfo_per_worker = counters.sfo_per_worker - at_start.sfo_per_worker;
  trace.counters.comm_rounds = counters.comm_rounds - at_start.comm_rounds;
  return trace;
}

RunTrace cr_psgd_catalyst(const SmoothObjective& base,
                          const OracleFactory& factory,
                          const CatalystConfig& cfg, const WorkerPool& pool) {
  if (cfg.sfo_budget < cfg.workers)
    throw ConfigError("cr_psgd_catalyst: budget must be at least N");
  if (!(cfg.theta > base.smoothness()))
    throw ConfigError("cr_psgd_catalyst: theta must exceed the base smoothness");
  check_dim(base.dim(), cfg.y0.size(), "cr_psgd_catalyst");

  const long long outer_count =
      isqrt_floor(cfg.sfo_budget * static_cast<long long>(cfg.workers));
  const long long inner_budget =
      isqrt_floor(cfg.sfo_budget / static_cast<long long>(cfg.workers));

  RunTrace trace;
  trace.algo = "cr-psgd-catalyst";
  trace.run_seed = cfg.run_seed;
  Counters counters;

  Vector y = cfg.y0;
  for (long long k = 1; k <= outer_count; ++k) {
    const std::shared_ptr<const StochasticOracle> inner_oracle = factory(y);
    CrPsgdConfig inner;
    inner.workers = cfg.workers;
    inner.sfo_budget = inner_budget;
    inner.x1 = y;
    inner.b1 = cfg.b1;
    inner.rho = cfg.rho;
    inner.gamma = cfg.gamma;
    inner.cap = cfg.cap;
    inner.run_seed = cfg.run_seed;
    inner.record_trace = false;
    RunTrace inner_trace = cr_psgd(*inner_oracle, inner, pool, &counters);
    if (inner_trace.degenerate) trace.degenerate = true;
    y = std::move(inner_trace.final_x);

    if (cfg.record_trace) {
      TraceRow row;
      row.outer_k = k;
      row.round_t = 0;
      row.batch = inner_trace.counters.sfo_per_worker;
      row.cum_sfo = counters.sfo_per_worker;
      row.cum_comm = counters.comm_rounds;
      row.loss = base.value(y);
      row.grad_norm_sq = base.gradient(y).squaredNorm();
      trace.rows.push_back(std::move(row));
    }
  }
  trace.final_x = std::move(y);
  trace.counters = counters;
  return trace;
}

RunTrace cr_psgd_catalyst(std::shared_ptr<const StochasticOracle> base_oracle,
                          const CatalystConfig& cfg, const WorkerPool& pool) {
  const double theta = cfg.theta;
  OracleFactory factory =
      [base_oracle, theta](const Vector& center)
      -> std::shared_ptr<const StochasticOracle> {
    return std::make_shared<const ProximalOracle>(base_oracle, center, theta);
  };
  return cr_psgd_catalyst(base_oracle->objective(), factory, cfg, pool);
}

RunTrace psgd_baseline(const StochasticOracle& oracle,
                       const FixedBatchConfig& cfg, const WorkerPool& pool) {
  return fixed_batch_rounds(oracle, cfg, pool, "psgd");
}

RunTrace local_sgd_baseline(const StochasticOracle& oracle,
                            const LocalSgdConfig& cfg, const WorkerPool& pool) {
  if (cfg.sync_interval < 1)
    throw ConfigError("local_sgd_baseline: H must be >= 1");
  if (cfg.sync_interval == 1) {
    FixedBatchConfig fb;
    fb.workers = cfg.workers;
    fb.sfo_budget = cfg.sfo_budget;
    fb.x1 = cfg.x1;
    fb.batch = cfg.batch;
    fb.gamma = cfg.gamma;
    fb.run_seed = cfg.run_seed;
    fb.record_trace = cfg.record_trace;
    fb.record_iterates = cfg.record_iterates;
    RunTrace trace = fixed_batch_rounds(oracle, fb, pool, "local-sgd");
    return trace;
  }
  if (cfg.batch < 1) throw ConfigError("local_sgd_baseline: batch must be >= 1");
  if (!(cfg.gamma > 0.0)) throw ConfigError("local_sgd_baseline: gamma must be > 0");
  check_dim(oracle.objective().dim(), cfg.x1.size(), "local_sgd_baseline");

  RunTrace trace;
  trace.algo = "local-sgd";
  trace.run_seed = cfg.run_seed;
  Vector x = cfg.x1;
  const long long per_segment = cfg.batch * cfg.sync_interval;
  long long segment = 0;
  long long global_step = 0;
  std::vector<Vector> models(pool.workers());
  while (per_segment <= cfg.sfo_budget - trace.counters.sfo_per_worker) {
    // Worker i's local steps consume stream keys (run, i, global_step, .),
    // independent across workers and segments.
    pool.for_each_worker([&](int i) {
      Vector xi = x;
      for (long long s = 1; s <= cfg.sync_interval; ++s) {
        const Vector gi =
            batch_mean(oracle, xi, cfg.batch, cfg.run_seed,
                       static_cast<std::uint32_t>(i),
                       static_cast<std::uint64_t>(global_step + s));
        xi = sgd_step(xi, gi, cfg.gamma);
      }
      models[i] = std::move(xi);
    });
    trace.counters.sfo_per_worker += per_segment;
    x = aggregate(models, trace.counters);
    global_step += cfg.sync_interval;
    ++segment;
    record_round(trace, oracle.objective(), x, 0, segment, per_segment,
                 trace.counters, cfg.record_trace, cfg.record_iterates);
  }
  trace.degenerate = segment == 0;
  trace.final_x = std::move(x);
  return trace;
}

}  // namespace crpsgd
