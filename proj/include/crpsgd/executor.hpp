#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "crpsgd/objectives.hpp"
#include "crpsgd/types.hpp"

namespace crpsgd {

/// Cumulative cost counters. sfo_per_worker counts stochastic gradient
/// samples drawn by each worker; comm_rounds counts aggregation barriers.
struct Counters {
  long long sfo_per_worker = 0;
  long long comm_rounds = 0;
};

/// Simulated pool of N workers. The thread count is an execution detail:
/// results are identical for any parallelism degree because all randomness
/// is keyed and every worker writes only its own slot.
class WorkerPool {
 public:
  explicit WorkerPool(int workers, int threads = 1);

  int workers() const { return workers_; }
  int threads() const { return threads_; }

  /// Runs fn(i) once for each worker index, possibly concurrently.
  void for_each_worker(const std::function<void(int)>& fn) const;

 private:
  int workers_;
  int threads_;
};

/// Runs fn(i) for i in [0, n), distributing across `threads` threads.
/// Exceptions from fn are rethrown on the calling thread.
void parallel_for(long long n, int threads,
                  const std::function<void(long long)>& fn);

/// Mean of B oracle samples at x, one stream per sample keyed
/// (run, worker, round, j). The running mean is accumulated in difference
/// form, so identical samples reduce to the sample itself exactly.
Vector batch_mean(const StochasticOracle& oracle, const Vector& x, long long b,
                  std::uint64_t run, std::uint32_t worker, std::uint64_t round);

/// Per-worker batch averages of one synchronous round; increments
/// sfo_per_worker by B. Sample order is fixed by the stream keys, so the
/// result does not depend on the thread schedule.
std::vector<Vector> parallel_batch_averages(const StochasticOracle& oracle,
                                            const Vector& x, long long b,
                                            const WorkerPool& pool,
                                            std::uint64_t run,
                                            std::uint64_t round,
                                            Counters& counters);

/// Average over workers by a fixed pairwise tree on the worker index; each
/// node merges subtree means as m_l + w*(m_r - m_l). Identical inputs
/// return the input exactly. Increments comm_rounds by one.
Vector aggregate(const std::vector<Vector>& gs, Counters& counters);

/// x - gamma * g, elementwise.
Vector sgd_step(const Vector& x, const Vector& g, double gamma);

}  // namespace crpsgd
