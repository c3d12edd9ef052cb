#include "crpsgd/schedule.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace crpsgd {

BatchSchedule::BatchSchedule(long long b1_, double rho_,
                             std::optional<long long> cap_)
    : b1(b1_), rho(rho_), cap(cap_) {
  if (b1 < 2) throw ConfigError("BatchSchedule: B1 must be >= 2");
  if (!(rho > 1.0)) throw ConfigError("BatchSchedule: rho must be > 1");
  if (cap && *cap < b1) throw ConfigError("BatchSchedule: cap must be >= B1");
}

long long BatchSchedule::batch_size(long long t) const {
  if (t < 1) throw ConfigError("BatchSchedule::batch_size: t must be >= 1");
  // rho^{t-1}*B1 accumulated by repeated multiplication in extended
  // precision. The relative guard absorbs the accumulated rounding before
  // the floor so products that are exact integers never round down; for the
  // schedules in use, fractional parts are never within the guard of the
  // next integer.
  long double z = static_cast<long double>(b1);
  for (long long i = 1; i < t; ++i) z *= static_cast<long double>(rho);
  z += z * 4e-13L;
  long long b;
  if (z >= 9.0e18L) {
    b = std::numeric_limits<long long>::max();
  } else {
    b = static_cast<long long>(floorl(z));
  }
  if (cap && b > *cap) b = *cap;
  return b;
}

long long BatchSchedule::num_rounds(long long budget) const {
  long long consumed = 0;
  long long t = 0;
  while (true) {
    const long long b = batch_size(t + 1);
    if (b > budget - consumed) break;  // avoids overflow of consumed + b
    consumed += b;
    ++t;
  }
  return t;
}

long long BatchSchedule::total_samples(long long rounds) const {
  long long s = 0;
  for (long long t = 1; t <= rounds; ++t) s += batch_size(t);
  return s;
}

double BatchSchedule::rounds_lower_bound(long long budget) const {
  return std::log(static_cast<double>(budget) * (rho - 1.0) /
                      static_cast<double>(b1) +
                  1.0) /
         std::log(rho);
}

RateConstants rate_constants(double gamma, double mu, double L, double rho,
                             long long b1, double sigma2) {
  if (!(L > 0.0)) throw ConfigError("rate_constants: L must be positive");
  if (!(mu > 0.0)) throw ConfigError("rate_constants: mu must be positive");
  if (!(gamma > 0.0) || !(gamma < 1.0 / L))
    throw ConfigError("rate_constants: gamma must satisfy 0 < gamma < 1/L");
  if (!(rho > 1.0)) throw ConfigError("rate_constants: rho must be > 1");
  if (b1 < 2) throw ConfigError("rate_constants: B1 must be >= 2");
  if (sigma2 < 0.0) throw ConfigError("rate_constants: sigma2 must be >= 0");

  RateConstants rc;
  rc.nu = 0.5 * gamma * mu * (1.0 - L * gamma);
  rc.valid = rc.nu < 1.0 && (1.0 - rc.nu) * rho < 1.0;
  rc.delta = std::log(1.0 / (1.0 - rc.nu)) / std::log(rho) - 1.0;
  rc.c1 = std::pow(static_cast<double>(b1) / (rho - 1.0), 1.0 + rc.delta) /
          (1.0 - rc.nu);
  rc.c2 = rho * rho * gamma * (2.0 - L * gamma) * sigma2 /
          ((1.0 - (1.0 - rc.nu) * rho) * (rho - 1.0));
  return rc;
}

}  // namespace crpsgd
