#pragma once

#include <vector>

#include "crpsgd/executor.hpp"
#include "crpsgd/objectives.hpp"

namespace test_util {

using crpsgd::Vector;

// Central finite differences with fixed step, the reference for gradient
// checks.
inline Vector fd_gradient(const crpsgd::SmoothObjective& obj, const Vector& x,
                          double h = 1e-6) {
  Vector g(x.size());
  Vector xp = x, xm = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    xm(i) = x(i) - h;
    g(i) = (obj.value(xp) - obj.value(xm)) / (2.0 * h);
    xp(i) = x(i);
    xm(i) = x(i);
  }
  return g;
}

inline double rel_err(const Vector& got, const Vector& want) {
  const double scale = std::max({want.norm(), got.norm(), 1e-6});
  return (got - want).norm() / scale;
}

// Neumaier-compensated mean, the high-precision reference for aggregation.
inline Vector compensated_mean(const std::vector<Vector>& vs) {
  Vector sum = Vector::Zero(vs[0].size());
  Vector comp = Vector::Zero(vs[0].size());
  for (const auto& v : vs) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double t = sum(i) + v(i);
      if (std::abs(sum(i)) >= std::abs(v(i)))
        comp(i) += (sum(i) - t) + v(i);
      else
        comp(i) += (v(i) - t) + sum(i);
      sum(i) = t;
    }
  }
  return (sum + comp) / static_cast<double>(vs.size());
}

// Plain full-gradient descent, the reference trajectory every noiseless
// round-synchronous run must reproduce bit for bit.
inline Vector gd_reference(const crpsgd::SmoothObjective& obj, Vector x,
                           double gamma, long long steps) {
  for (long long s = 0; s < steps; ++s)
    x = crpsgd::sgd_step(x, obj.gradient(x), gamma);
  return x;
}

}  // namespace test_util
