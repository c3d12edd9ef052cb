#include "crpsgd/objectives.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace crpsgd {

namespace {

// log(1 + exp(u)) without overflow.
double log1p_exp(double u) {
  return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
}

}  // namespace

double eval(const SmoothObjective& obj, const Vector& x) {
  check_dim(obj.dim(), x.size(), "eval");
  return obj.value(x);
}

Vector full_gradient(const SmoothObjective& obj, const Vector& x) {
  check_dim(obj.dim(), x.size(), "full_gradient");
  return obj.gradient(x);
}

Vector sample_stochastic_gradient(const StochasticOracle& oracle,
                                  const Vector& x, RngStream& stream) {
  check_dim(oracle.objective().dim(), x.size(), "sample_stochastic_gradient");
  return oracle.sample_gradient(x, stream);
}

// ---------------------------------------------------------------------------
// IsotropicQuadratic

IsotropicQuadratic::IsotropicQuadratic(Eigen::Index dim, double scale,
                                       Vector center)
    : dim_(dim), scale_(scale), center_(std::move(center)) {
  if (dim_ < 1) throw ConfigError("IsotropicQuadratic: dim must be >= 1");
  if (!(scale_ > 0.0)) throw ConfigError("IsotropicQuadratic: scale must be > 0");
  if (center_.size() == 0) center_ = Vector::Zero(dim_);
  check_dim(dim_, center_.size(), "IsotropicQuadratic");
}

double IsotropicQuadratic::value(const Vector& x) const {
  return 0.5 * scale_ * (x - center_).squaredNorm();
}

Vector IsotropicQuadratic::gradient(const Vector& x) const {
  return scale_ * (x - center_);
}

// ---------------------------------------------------------------------------
// QuadraticPL

QuadraticPL::QuadraticPL(Matrix a, Vector b, std::uint64_t seed)
    : a_(std::move(a)), b_(std::move(b)), seed_(seed) {
  check_dim(a_.rows(), b_.size(), "QuadraticPL");
  Eigen::JacobiSVD<Matrix> svd(a_, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double sv_max = sv.size() > 0 ? sv(0) : 0.0;
  if (!(sv_max > 0.0))
    throw DegenerateProblemError("QuadraticPL: matrix is zero");
  const double tol = sv_max * 1e-12;
  rank_ = 0;
  double sv_min_pos = sv_max;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol) {
      ++rank_;
      sv_min_pos = sv(i);
    }
  }
  smoothness_ = sv_max * sv_max;
  pl_mu_ = sv_min_pos * sv_min_pos;
  // minimum-norm least-squares solution from the rank-truncated SVD
  Vector coeff = svd.matrixU().transpose() * b_;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    coeff(i) = sv(i) > tol ? coeff(i) / sv(i) : 0.0;
  x_star_ = svd.matrixV() * coeff;
  f_star_ = value(x_star_);
}

std::optional<double> QuadraticPL::strong_convexity() const {
  if (rank_ == a_.cols()) return pl_mu_;
  return std::nullopt;
}

double QuadraticPL::value(const Vector& x) const {
  return 0.5 * (a_ * x - b_).squaredNorm();
}

Vector QuadraticPL::gradient(const Vector& x) const {
  return a_.transpose() * (a_ * x - b_);
}

double compute_pl_modulus(const QuadraticPL& q) { return *q.pl_modulus(); }

QuadraticPL generate_quadratic_instance(Eigen::Index rows, Eigen::Index cols,
                                        Eigen::Index rank, std::uint64_t seed) {
  if (rows < 1 || cols < 1 || rank < 1 || rank > std::min(rows, cols))
    throw ConfigError("generate_quadratic_instance: invalid shape");
  RngStream s(seed, 0, 0, 0);
  Matrix left(rows, rank), right(rank, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < rank; ++c) left(r, c) = s.next_gaussian();
  for (Eigen::Index r = 0; r < rank; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) right(r, c) = s.next_gaussian();
  Vector b(rows);
  for (Eigen::Index r = 0; r < rows; ++r) b(r) = s.next_gaussian();
  return QuadraticPL(left * right, std::move(b), seed);
}

// ---------------------------------------------------------------------------
// LogisticProblem

LogisticProblem::LogisticProblem(std::vector<Matrix> features,
                                 std::vector<Vector> labels, double reg_mu,
                                 Vector x_true, std::uint64_t seed)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      reg_mu_(reg_mu),
      x_true_(std::move(x_true)),
      seed_(seed) {
  if (features_.empty() || features_.size() != labels_.size())
    throw ConfigError("LogisticProblem: empty or mismatched shards");
  if (reg_mu_ < 0.0) throw ConfigError("LogisticProblem: reg_mu must be >= 0");
  dim_ = features_[0].cols();
  offsets_.reserve(features_.size() + 1);
  offsets_.push_back(0);
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    check_dim(dim_, features_[i].cols(), "LogisticProblem features");
    check_dim(features_[i].rows(), labels_[i].size(), "LogisticProblem labels");
    if (features_[i].rows() < 1)
      throw ConfigError("LogisticProblem: empty shard");
    for (Eigen::Index j = 0; j < labels_[i].size(); ++j) {
      const double b = labels_[i](j);
      if (b != 1.0 && b != -1.0)
        throw ConfigError("LogisticProblem: labels must be +1 or -1");
    }
    total_samples_ += features_[i].rows();
    offsets_.push_back(total_samples_);
    sum_sq += features_[i].rowwise().squaredNorm().sum();
  }
  variance_bound_ = sum_sq / static_cast<double>(total_samples_);

  // L <= reg + lambda_max(W)/4 with W the per-worker-averaged feature second
  // moment; power iteration on v -> W v without forming W.
  const double inv_n = 1.0 / static_cast<double>(features_.size());
  Vector v = Vector::Constant(dim_, 1.0 / std::sqrt(double(dim_)));
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    Vector w = Vector::Zero(dim_);
    for (std::size_t i = 0; i < features_.size(); ++i) {
      w.noalias() += features_[i].transpose() * (features_[i] * v) /
                     static_cast<double>(features_[i].rows());
    }
    w *= inv_n;
    const double next = w.norm();
    if (next == 0.0) {
      lambda = 0.0;
      break;
    }
    v = w / next;
    const bool settled = it >= 10 && std::abs(next - lambda) <= 1e-13 * next;
    lambda = next;
    if (settled) break;
  }
  smoothness_ = reg_mu_ + 0.25 * lambda;
}

std::optional<double> LogisticProblem::pl_modulus() const {
  if (reg_mu_ > 0.0) return reg_mu_;
  return std::nullopt;
}

std::optional<double> LogisticProblem::strong_convexity() const {
  if (reg_mu_ > 0.0) return reg_mu_;
  return std::nullopt;
}

double LogisticProblem::value(const Vector& x) const {
  check_dim(dim_, x.size(), "LogisticProblem::value");
  double total = 0.0;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const Vector t = features_[i] * x;
    double shard = 0.0;
    for (Eigen::Index j = 0; j < t.size(); ++j)
      shard += log1p_exp(-labels_[i](j) * t(j));
    total += shard / static_cast<double>(features_[i].rows());
  }
  total /= static_cast<double>(features_.size());
  return total + 0.5 * reg_mu_ * x.squaredNorm();
}

Vector LogisticProblem::gradient(const Vector& x) const {
  check_dim(dim_, x.size(), "LogisticProblem::gradient");
  Vector g = Vector::Zero(dim_);
  for (std::size_t i = 0; i < features_.size(); ++i) {
    Vector t = features_[i] * x;
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      const double b = labels_[i](j);
      t(j) = -b / (1.0 + std::exp(b * t(j)));
    }
    g.noalias() += features_[i].transpose() * t /
                   static_cast<double>(features_[i].rows());
  }
  g /= static_cast<double>(features_.size());
  g += reg_mu_ * x;
  return g;
}

void LogisticProblem::locate(long long idx, int& worker, long long& row) const {
  if (idx < 0 || idx >= total_samples_)
    throw ConfigError("LogisticProblem: sample index out of range");
  worker = 0;
  while (offsets_[worker + 1] <= idx) ++worker;
  row = idx - offsets_[worker];
}

double LogisticProblem::sample_value(long long idx, const Vector& x) const {
  int i;
  long long j;
  locate(idx, i, j);
  const double t = features_[i].row(j).dot(x);
  return log1p_exp(-labels_[i](j) * t) + 0.5 * reg_mu_ * x.squaredNorm();
}

void LogisticProblem::sample_gradient_into(long long idx, const Vector& x,
                                           Vector& out) const {
  int i;
  long long j;
  locate(idx, i, j);
  const double b = labels_[i](j);
  const double t = features_[i].row(j).dot(x);
  const double coeff = -b / (1.0 + std::exp(b * t));
  out = coeff * features_[i].row(j).transpose();
  out += reg_mu_ * x;
}

LogisticProblem generate_logistic_instance(Eigen::Index d, int workers,
                                           long long samples_per_worker,
                                           double reg_mu, std::uint64_t seed,
                                           bool zero_mean) {
  if (d < 1 || workers < 1 || samples_per_worker < 1)
    throw ConfigError("generate_logistic_instance: sizes must be >= 1");
  if (reg_mu < 0.0)
    throw ConfigError("generate_logistic_instance: reg_mu must be >= 0");

  Vector x_true(d);
  {
    RngStream s(seed, 0xFFFFFFFFu, 0, 0);
    for (Eigen::Index c = 0; c < d; ++c) x_true(c) = s.next_gaussian();
  }
  const double mean = zero_mean ? 0.0 : 1.0;
  std::vector<Matrix> features(workers);
  std::vector<Vector> labels(workers);
  for (int i = 0; i < workers; ++i) {
    Matrix z(samples_per_worker, d);
    RngStream s(seed, static_cast<std::uint32_t>(i), 0, 0);
    for (long long r = 0; r < samples_per_worker; ++r)
      for (Eigen::Index c = 0; c < d; ++c)
        z(r, c) = mean + 2.0 * s.next_gaussian();
    RngStream noise(seed, static_cast<std::uint32_t>(i), 1, 0);
    Vector b(samples_per_worker);
    for (long long r = 0; r < samples_per_worker; ++r) {
      const double xi = noise.next_gaussian();
      b(r) = z.row(r).dot(x_true) + xi >= 0.0 ? 1.0 : -1.0;
    }
    features[i] = std::move(z);
    labels[i] = std::move(b);
  }
  return LogisticProblem(std::move(features), std::move(labels), reg_mu,
                         std::move(x_true), seed);
}

// ---------------------------------------------------------------------------
// ProximalObjective

ProximalObjective::ProximalObjective(
    std::shared_ptr<const SmoothObjective> base, Vector center, double theta)
    : base_(std::move(base)), center_(std::move(center)), theta_(theta) {
  if (!base_) throw ConfigError("ProximalObjective: null base");
  check_dim(base_->dim(), center_.size(), "ProximalObjective");
  if (!(theta_ > base_->smoothness()))
    throw ConfigError("ProximalObjective: theta must exceed the base smoothness");
}

double ProximalObjective::value(const Vector& x) const {
  return base_->value(x) + 0.5 * theta_ * (x - center_).squaredNorm();
}

Vector ProximalObjective::gradient(const Vector& x) const {
  return base_->gradient(x) + theta_ * (x - center_);
}

ProximalObjective make_proximal(std::shared_ptr<const SmoothObjective> base,
                                Vector center, double theta) {
  return ProximalObjective(std::move(base), std::move(center), theta);
}

// ---------------------------------------------------------------------------
// QuadraticCosine

QuadraticCosine::QuadraticCosine(Eigen::Index dim, double a, double omega)
    : dim_(dim), a_(a), omega_(omega) {
  if (dim_ < 1) throw ConfigError("QuadraticCosine: dim must be >= 1");
  if (a_ < 0.0) throw ConfigError("QuadraticCosine: a must be >= 0");
}

double QuadraticCosine::value(const Vector& x) const {
  double c = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) c += std::cos(omega_ * x(j));
  return 0.5 * x.squaredNorm() + a_ * c;
}

Vector QuadraticCosine::gradient(const Vector& x) const {
  Vector g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j)
    g(j) = x(j) - a_ * omega_ * std::sin(omega_ * x(j));
  return g;
}

// ---------------------------------------------------------------------------
// Oracles

GaussianNoiseOracle::GaussianNoiseOracle(
    std::shared_ptr<const SmoothObjective> base, double sigma2)
    : base_(std::move(base)), sigma2_(sigma2) {
  if (!base_) throw ConfigError("GaussianNoiseOracle: null base");
  if (sigma2_ < 0.0)
    throw ConfigError("GaussianNoiseOracle: sigma2 must be >= 0");
  coord_sd_ = std::sqrt(sigma2_ / static_cast<double>(base_->dim()));
}

void GaussianNoiseOracle::sample_into(const Vector& x, RngStream& stream,
                                      Vector& out) const {
  out = base_->gradient(x);
  for (Eigen::Index j = 0; j < out.size(); ++j)
    out(j) += coord_sd_ * stream.next_gaussian();
}

LogisticSampleOracle::LogisticSampleOracle(
    std::shared_ptr<const LogisticProblem> problem)
    : problem_(std::move(problem)) {
  if (!problem_) throw ConfigError("LogisticSampleOracle: null problem");
}

void LogisticSampleOracle::sample_into(const Vector& x, RngStream& stream,
                                       Vector& out) const {
  const long long idx = static_cast<long long>(
      stream.next_below(static_cast<std::uint64_t>(problem_->total_samples())));
  problem_->sample_gradient_into(idx, x, out);
}

ProximalOracle::ProximalOracle(std::shared_ptr<const StochasticOracle> base,
                               Vector center, double theta)
    : base_(std::move(base)) {
  if (!base_) throw ConfigError("ProximalOracle: null base");
  objective_ = std::make_shared<const ProximalObjective>(
      base_->objective_ptr(), std::move(center), theta);
}

void ProximalOracle::sample_into(const Vector& x, RngStream& stream,
                                 Vector& out) const {
  base_->sample_into(x, stream, out);
  out += objective_->theta() * (x - objective_->center());
}

// ---------------------------------------------------------------------------

double estimate_fstar(const SmoothObjective& obj, long long budget) {
  const double step = 1.0 / obj.smoothness();
  Vector x = Vector::Zero(obj.dim());
  for (long long i = 0; i < budget; ++i) x -= step * obj.gradient(x);
  return obj.value(x);
}

}  // namespace crpsgd
