#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "crpsgd/rng.hpp"
#include "crpsgd/types.hpp"

namespace crpsgd {

/// A smooth objective f: R^m -> R with analytic gradient. Metadata that is
/// not known for a family is simply absent. Instances are immutable after
/// construction and safe to share across worker threads.
class SmoothObjective {
 public:
  virtual ~SmoothObjective() = default;

  virtual Eigen::Index dim() const = 0;
  /// Smoothness modulus L.
  virtual double smoothness() const = 0;
  /// P-L modulus mu, when one is known. Any valid lower witness is allowed.
  virtual std::optional<double> pl_modulus() const { return std::nullopt; }
  /// Strong-convexity modulus, when the objective is strongly convex.
  virtual std::optional<double> strong_convexity() const { return std::nullopt; }
  /// Global minimum f*, when known in closed form.
  virtual std::optional<double> known_min() const { return std::nullopt; }
  /// A global minimizer, when known in closed form.
  virtual std::optional<Vector> minimizer() const { return std::nullopt; }

  virtual double value(const Vector& x) const = 0;
  virtual Vector gradient(const Vector& x) const = 0;
};

/// Dimension-checked wrappers.
double eval(const SmoothObjective& obj, const Vector& x);
Vector full_gradient(const SmoothObjective& obj, const Vector& x);

/// Source of unbiased i.i.d. stochastic gradients with a variance bound:
/// E[g] = grad f(x) and E||g - grad f(x)||^2 <= sigma^2 at every x. All
/// randomness flows through the caller-supplied stream.
class StochasticOracle {
 public:
  virtual ~StochasticOracle() = default;

  virtual std::shared_ptr<const SmoothObjective> objective_ptr() const = 0;
  const SmoothObjective& objective() const { return *objective_ptr(); }
  /// Variance bound sigma^2.
  virtual double variance_bound() const = 0;
  /// One stochastic gradient written into `out`. `stream` must be fresh.
  virtual void sample_into(const Vector& x, RngStream& stream,
                           Vector& out) const = 0;

  Vector sample_gradient(const Vector& x, RngStream& stream) const {
    Vector g(objective().dim());
    sample_into(x, stream, g);
    return g;
  }
};

/// Dimension-checked wrapper.
Vector sample_stochastic_gradient(const StochasticOracle& oracle,
                                  const Vector& x, RngStream& stream);

/// f(x) = (s/2)||x - c||^2; L = mu = s, f* = 0, x* = c.
class IsotropicQuadratic final : public SmoothObjective {
 public:
  IsotropicQuadratic(Eigen::Index dim, double scale = 1.0,
                     Vector center = Vector());

  Eigen::Index dim() const override { return dim_; }
  double smoothness() const override { return scale_; }
  std::optional<double> pl_modulus() const override { return scale_; }
  std::optional<double> strong_convexity() const override { return scale_; }
  std::optional<double> known_min() const override { return 0.0; }
  std::optional<Vector> minimizer() const override { return center_; }
  double value(const Vector& x) const override;
  Vector gradient(const Vector& x) const override;

 private:
  Eigen::Index dim_;
  double scale_;
  Vector center_;
};

/// f(x) = 1/2 ||Ax - b||^2. Satisfies the P-L condition with modulus
/// sigma_min+(A)^2 (smallest nonzero singular value squared) even when A is
/// rank deficient; L = sigma_max(A)^2. Minimum-norm minimizer and f* come
/// from the SVD computed once at construction.
class QuadraticPL final : public SmoothObjective {
 public:
  QuadraticPL(Matrix a, Vector b, std::uint64_t seed = 0);

  Eigen::Index dim() const override { return a_.cols(); }
  double smoothness() const override { return smoothness_; }
  std::optional<double> pl_modulus() const override { return pl_mu_; }
  std::optional<double> strong_convexity() const override;
  std::optional<double> known_min() const override { return f_star_; }
  std::optional<Vector> minimizer() const override { return x_star_; }
  double value(const Vector& x) const override;
  Vector gradient(const Vector& x) const override;

  const Matrix& a() const { return a_; }
  const Vector& b() const { return b_; }
  Eigen::Index rank() const { return rank_; }
  std::uint64_t seed() const { return seed_; }

 private:
  Matrix a_;
  Vector b_;
  std::uint64_t seed_;
  double smoothness_ = 0.0;
  double pl_mu_ = 0.0;
  double f_star_ = 0.0;
  Vector x_star_;
  Eigen::Index rank_ = 0;
};

/// mu = sigma_min+(A)^2, a valid P-L modulus for f = 1/2||Ax - b||^2.
double compute_pl_modulus(const QuadraticPL& q);

/// A with prescribed rank (product of two gaussian factors) and gaussian b.
QuadraticPL generate_quadratic_instance(Eigen::Index rows, Eigen::Index cols,
                                        Eigen::Index rank, std::uint64_t seed);

/// Regularized logistic regression over N per-worker shards:
///   f(x) = (1/N) sum_i (1/M_i) sum_j log(1 + exp(-b_ij z_ij^T x))
///          + (reg/2)||x||^2
/// Strongly convex with modulus >= reg when reg > 0. The smoothness bound
/// is reg + lambda_max(second moment of the features)/4, estimated by power
/// iteration at construction.
class LogisticProblem final : public SmoothObjective {
 public:
  LogisticProblem(std::vector<Matrix> features, std::vector<Vector> labels,
                  double reg_mu, Vector x_true, std::uint64_t seed);

  Eigen::Index dim() const override { return dim_; }
  double smoothness() const override { return smoothness_; }
  std::optional<double> pl_modulus() const override;
  std::optional<double> strong_convexity() const override;
  double value(const Vector& x) const override;
  Vector gradient(const Vector& x) const override;

  int workers() const { return static_cast<int>(features_.size()); }
  long long samples_at(int worker) const { return features_[worker].rows(); }
  long long total_samples() const { return total_samples_; }
  double reg_mu() const { return reg_mu_; }
  const Vector& x_true() const { return x_true_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Matrix>& features() const { return features_; }
  const std::vector<Vector>& labels() const { return labels_; }

  /// Loss/gradient of the single regularized sample with flat index `idx`
  /// (workers concatenated in order).
  double sample_value(long long idx, const Vector& x) const;
  void sample_gradient_into(long long idx, const Vector& x, Vector& out) const;

  /// mean_j ||z_j||^2 over all samples; a valid variance bound for the
  /// uniform single-sample oracle at every x.
  double gradient_variance_bound() const { return variance_bound_; }

 private:
  void locate(long long idx, int& worker, long long& row) const;

  std::vector<Matrix> features_;
  std::vector<Vector> labels_;
  double reg_mu_;
  Vector x_true_;
  std::uint64_t seed_;
  Eigen::Index dim_;
  long long total_samples_ = 0;
  double smoothness_ = 0.0;
  double variance_bound_ = 0.0;
  std::vector<long long> offsets_;
};

/// Synthetic instance: features per coordinate are gaussian with variance 4
/// around mean 1 (or mean 0 when zero_mean is set), x_true is standard
/// normal, labels are sign(z^T x_true + xi) with a fresh unit-normal noise
/// draw per sample. Fully reproducible from the seed.
LogisticProblem generate_logistic_instance(Eigen::Index d, int workers,
                                           long long samples_per_worker,
                                           double reg_mu, std::uint64_t seed,
                                           bool zero_mean = false);

/// h_theta(x; y) = f(x) + (theta/2)||x - y||^2; requires theta > L so that
/// h is strongly convex with modulus theta - L and smooth with theta + L.
class ProximalObjective final : public SmoothObjective {
 public:
  ProximalObjective(std::shared_ptr<const SmoothObjective> base, Vector center,
                    double theta);

  Eigen::Index dim() const override { return base_->dim(); }
  double smoothness() const override { return theta_ + base_->smoothness(); }
  std::optional<double> pl_modulus() const override {
    return theta_ - base_->smoothness();
  }
  std::optional<double> strong_convexity() const override {
    return theta_ - base_->smoothness();
  }
  double value(const Vector& x) const override;
  Vector gradient(const Vector& x) const override;

  const SmoothObjective& base() const { return *base_; }
  const Vector& center() const { return center_; }
  double theta() const { return theta_; }

 private:
  std::shared_ptr<const SmoothObjective> base_;
  Vector center_;
  double theta_;
};

ProximalObjective make_proximal(std::shared_ptr<const SmoothObjective> base,
                                Vector center, double theta);

/// f(x) = 1/2||x||^2 + a * sum_j cos(omega x_j). Smooth with
/// L = 1 + a*omega^2, nonconvex when a*omega^2 > 1 (the second derivative
/// at 0 is 1 - a*omega^2), bounded below by -a*dim.
class QuadraticCosine final : public SmoothObjective {
 public:
  QuadraticCosine(Eigen::Index dim, double a, double omega);

  Eigen::Index dim() const override { return dim_; }
  double smoothness() const override { return 1.0 + a_ * omega_ * omega_; }
  double value(const Vector& x) const override;
  Vector gradient(const Vector& x) const override;

  double a() const { return a_; }
  double omega() const { return omega_; }

 private:
  Eigen::Index dim_;
  double a_;
  double omega_;
};

/// Adds gaussian noise with covariance (sigma2/m) I to the exact gradient,
/// so E||noise||^2 = sigma2 exactly.
class GaussianNoiseOracle final : public StochasticOracle {
 public:
  GaussianNoiseOracle(std::shared_ptr<const SmoothObjective> base,
                      double sigma2);

  std::shared_ptr<const SmoothObjective> objective_ptr() const override {
    return base_;
  }
  double variance_bound() const override { return sigma2_; }
  void sample_into(const Vector& x, RngStream& stream,
                   Vector& out) const override;

 private:
  std::shared_ptr<const SmoothObjective> base_;
  double sigma2_;
  double coord_sd_;
};

/// Gradient of one uniformly drawn sample of a LogisticProblem.
class LogisticSampleOracle final : public StochasticOracle {
 public:
  explicit LogisticSampleOracle(std::shared_ptr<const LogisticProblem> problem);

  std::shared_ptr<const SmoothObjective> objective_ptr() const override {
    return problem_;
  }
  double variance_bound() const override {
    return problem_->gradient_variance_bound();
  }
  void sample_into(const Vector& x, RngStream& stream,
                   Vector& out) const override;

 private:
  std::shared_ptr<const LogisticProblem> problem_;
};

/// Stochastic gradients of h_theta(.; center): base sample + theta*(x - center).
/// Unbiased for grad h with the same variance bound as the base oracle.
class ProximalOracle final : public StochasticOracle {
 public:
  ProximalOracle(std::shared_ptr<const StochasticOracle> base, Vector center,
                 double theta);

  std::shared_ptr<const SmoothObjective> objective_ptr() const override {
    return objective_;
  }
  double variance_bound() const override { return base_->variance_bound(); }
  void sample_into(const Vector& x, RngStream& stream,
                   Vector& out) const override;

  const ProximalObjective& proximal() const { return *objective_; }

 private:
  std::shared_ptr<const StochasticOracle> base_;
  std::shared_ptr<const ProximalObjective> objective_;
};

/// Upper estimate of f* by `budget` iterations of deterministic gradient
/// descent with step 1/L from the origin. Nonincreasing in the budget.
double estimate_fstar(const SmoothObjective& obj, long long budget);

}  // namespace crpsgd
