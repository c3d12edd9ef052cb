#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "crpsgd/executor.hpp"
#include "crpsgd/objectives.hpp"
#include "crpsgd/schedule.hpp"

namespace crpsgd {

/// One record per communication round (or per outer step for the catalyst
/// loop). Loss and the squared gradient norm are measured with the
/// deterministic full objective, never the oracle.
struct TraceRow {
  long long outer_k = 0;
  long long round_t = 0;
  long long batch = 0;  ///< per-worker samples consumed since the last record
  long long cum_sfo = 0;
  long long cum_comm = 0;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
};

struct RunTrace {
  std::string algo;
  std::uint64_t run_seed = 0;
  std::vector<TraceRow> rows;
  Vector final_x;
  Counters counters;
  bool degenerate = false;  ///< budget below the first batch: no update ran
  std::vector<Vector> iterates;  ///< optional per-round snapshots
};

struct CrPsgdConfig {
  int workers = 1;
  long long sfo_budget = 0;  ///< per-worker sample budget T
  Vector x1;
  long long b1 = 2;
  double rho = 1.1;
  double gamma = 0.1;
  std::optional<long long> cap;
  std::uint64_t run_seed = 0;
  bool record_trace = true;
  bool record_iterates = false;
};

/// Geometric-batch parallel SGD: per round, every worker averages B_t fresh
/// samples at the shared iterate, one aggregation, one step, then
/// B_{t+1} = floor(rho^t B_1). When `shared` is given, counters accumulate
/// there (round stream keys use the cumulative communication count, so
/// nested calls never reuse a key).
RunTrace cr_psgd(const StochasticOracle& oracle, const CrPsgdConfig& cfg,
                 const WorkerPool& pool, Counters* shared = nullptr);

struct CatalystConfig {
  int workers = 1;
  long long sfo_budget = 0;  ///< total per-worker budget T
  double theta = 0.0;
  Vector y0;
  long long b1 = 2;
  double rho = 1.1;
  double gamma = 0.1;
  std::optional<long long> cap;
  std::uint64_t run_seed = 0;
  bool record_trace = true;
};

using OracleFactory =
    std::function<std::shared_ptr<const StochasticOracle>(const Vector& center)>;

/// Proximal-point outer loop: K = floor(sqrt(NT)) calls of cr_psgd on
/// h_theta(.; y_{k-1}) with inner budget floor(sqrt(T/N)), each warm-started
/// at y_{k-1}. The factory builds the oracle for a given proximal center;
/// `base` is the objective whose loss/gradient the trace records.
RunTrace cr_psgd_catalyst(const SmoothObjective& base,
                          const OracleFactory& factory,
                          const CatalystConfig& cfg, const WorkerPool& pool);

/// Convenience overload wrapping `base_oracle` with ProximalOracle per call.
RunTrace cr_psgd_catalyst(std::shared_ptr<const StochasticOracle> base_oracle,
                          const CatalystConfig& cfg, const WorkerPool& pool);

struct FixedBatchConfig {
  int workers = 1;
  long long sfo_budget = 0;
  Vector x1;
  long long batch = 1;
  double gamma = 0.1;
  std::uint64_t run_seed = 0;
  bool record_trace = true;
  bool record_iterates = false;
};

/// Classical parallel SGD: constant batch, one aggregation per round;
/// comm_rounds = floor(T/B).
RunTrace psgd_baseline(const StochasticOracle& oracle,
                       const FixedBatchConfig& cfg, const WorkerPool& pool);

struct LocalSgdConfig {
  int workers = 1;
  long long sfo_budget = 0;
  Vector x1;
  long long batch = 1;
  double gamma = 0.1;
  long long sync_interval = 1;  ///< H: local steps between averagings
  std::uint64_t run_seed = 0;
  bool record_trace = true;
  bool record_iterates = false;
};

/// Periodic model averaging: every worker runs H independent local SGD
/// steps between averagings; one communication per H steps, so
/// comm_rounds = floor(T/(B*H)). H = 1 takes the aggregated-gradient round
/// path, so its trace coincides with psgd_baseline bit for bit.
RunTrace local_sgd_baseline(const StochasticOracle& oracle,
                            const LocalSgdConfig& cfg, const WorkerPool& pool);

}  // namespace crpsgd
