#pragma once

#include <optional>

#include "crpsgd/types.hpp"

namespace crpsgd {

/// Exponential batch-size rule: B_t = min(floor(rho^{t-1} * B1), cap).
struct BatchSchedule {
  long long b1;
  double rho;
  std::optional<long long> cap;  ///< optional ceiling on the batch size

  BatchSchedule(long long b1_, double rho_,
                std::optional<long long> cap_ = std::nullopt);

  /// Batch size of round t (t >= 1).
  long long batch_size(long long t) const;

  /// Number of rounds executed under a per-worker sample budget of T:
  /// the largest t* with sum_{tau<=t*} B_tau <= T. Returns 0 when T < B1
  /// (a degenerate run that performs no update).
  long long num_rounds(long long budget) const;

  /// sum_{tau=1}^{rounds} B_tau.
  long long total_samples(long long rounds) const;

  /// log_rho(T(rho-1)/B1 + 1): lower bound on t*+1 for uncapped schedules.
  double rounds_lower_bound(long long budget) const;
};

/// Contraction and rate constants for the geometric-batch analysis:
///   nu    = gamma*mu*(1 - L*gamma)/2
///   delta = log_rho(1/(1-nu)) - 1
///   c1    = (B1/(rho-1))^{1+delta} / (1-nu)
///   c2    = rho^2*gamma*(2-L*gamma)*sigma^2 / ((1-(1-nu)*rho)*(rho-1))
/// `valid` holds iff rho < 1/(1-nu), which makes delta > 0 and c2 finite
/// and positive.
struct RateConstants {
  double nu = 0.0;
  double delta = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  bool valid = false;
};

RateConstants rate_constants(double gamma, double mu, double L, double rho,
                             long long b1, double sigma2);

}  // namespace crpsgd
