#include "crpsgd/executor.hpp"

#include <atomic>
#include <exception>
#include <thread>

namespace crpsgd {

WorkerPool::WorkerPool(int workers, int threads)
    : workers_(workers), threads_(threads) {
  if (workers_ < 1) throw ConfigError("WorkerPool: workers must be >= 1");
  if (threads_ < 1) threads_ = 1;
}

void parallel_for(long long n, int threads,
                  const std::function<void(long long)>& fn) {
  if (n <= 0) return;
  const int nthreads = static_cast<int>(
      std::min<long long>(n, std::max(1, threads)));
  if (nthreads == 1) {
    for (long long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long long> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    while (true) {
      const long long i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (int t = 0; t < nthreads; ++t) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

void WorkerPool::for_each_worker(const std::function<void(int)>& fn) const {
  parallel_for(workers_, threads_,
               [&fn](long long i) { fn(static_cast<int>(i)); });
}

Vector batch_mean(const StochasticOracle& oracle, const Vector& x, long long b,
                  std::uint64_t run, std::uint32_t worker,
                  std::uint64_t round) {
  Vector mean(x.size());
  Vector g(x.size());
  for (long long j = 0; j < b; ++j) {
    RngStream stream(run, worker, round, static_cast<std::uint64_t>(j));
    if (j == 0) {
      oracle.sample_into(x, stream, mean);
    } else {
      oracle.sample_into(x, stream, g);
      mean += (g - mean) / static_cast<double>(j + 1);
    }
  }
  return mean;
}

std::vector<Vector> parallel_batch_averages(const StochasticOracle& oracle,
                                            const Vector& x, long long b,
                                            const WorkerPool& pool,
                                            std::uint64_t run,
                                            std::uint64_t round,
                                            Counters& counters) {
  if (b < 1) throw ConfigError("parallel_batch_averages: B must be >= 1");
  check_dim(oracle.objective().dim(), x.size(), "parallel_batch_averages");
  std::vector<Vector> gs(pool.workers());
  pool.for_each_worker([&](int i) {
    gs[i] = batch_mean(oracle, x, b, run, static_cast<std::uint32_t>(i), round);
  });
  counters.sfo_per_worker += b;
  return gs;
}

namespace {

// Subtree mean over [lo, hi); the merge is exact when both halves agree.
Vector tree_mean(const std::vector<Vector>& gs, std::size_t lo,
                 std::size_t hi) {
  if (hi - lo == 1) return gs[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  Vector left = tree_mean(gs, lo, mid);
  const Vector right = tree_mean(gs, mid, hi);
  const double w = static_cast<double>(hi - mid) / static_cast<double>(hi - lo);
  left += w * (right - left);
  return left;
}

}  // namespace

Vector aggregate(const std::vector<Vector>& gs, Counters& counters) {
  if (gs.empty()) throw ConfigError("aggregate: empty input");
  for (const auto& g : gs) check_dim(gs[0].size(), g.size(), "aggregate");
  ++counters.comm_rounds;
  return tree_mean(gs, 0, gs.size());
}

Vector sgd_step(const Vector& x, const Vector& g, double gamma) {
  check_dim(x.size(), g.size(), "sgd_step");
  if (!(gamma > 0.0)) throw ConfigError("sgd_step: gamma must be > 0");
  return x - gamma * g;
}

}  // namespace crpsgd
