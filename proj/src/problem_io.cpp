#include "crpsgd/problem_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace crpsgd::io {

namespace {

constexpr char kMagic[8] = {'C', 'R', 'P', 'S', 'G', 'D', '1', '\n'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

void put_matrix(std::string& out, const Matrix& m) {
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
}

void put_vector(std::string& out, const Vector& v) {
  put_u64(out, static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(out, v(i));
}

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw ConfigError("cannot open problem file: " + path);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  Matrix matrix() {
    const auto rows = static_cast<Eigen::Index>(u64());
    const auto cols = static_cast<Eigen::Index>(u64());
    if (rows < 0 || cols < 0 || rows * cols > (1LL << 32))
      throw ConfigError("problem file: implausible matrix shape");
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f64();
    return m;
  }
  Vector vector() {
    const auto n = static_cast<Eigen::Index>(u64());
    if (n < 0 || n > (1LL << 32))
      throw ConfigError("problem file: implausible vector length");
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = f64();
    return v;
  }
  void expect_magic() {
    char buf[8];
    in_.read(buf, 8);
    if (!in_ || std::memcmp(buf, kMagic, 8) != 0)
      throw ConfigError("problem file: bad magic");
  }

 private:
  unsigned char byte() {
    const int c = in_.get();
    if (c == EOF) throw ConfigError("problem file: truncated");
    return static_cast<unsigned char>(c);
  }
  std::ifstream in_;
};

}  // namespace

void atomic_write(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open for writing: " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw ConfigError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw ConfigError("rename failed: " + path);
}

ProblemFamily peek_family(const std::string& path) {
  Reader r(path);
  r.expect_magic();
  const std::uint32_t fam = r.u32();
  if (fam != 1 && fam != 2)
    throw ConfigError("problem file: unknown family tag");
  return static_cast<ProblemFamily>(fam);
}

void save_logistic(const LogisticProblem& problem, const std::string& path) {
  std::string out;
  out.append(kMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(ProblemFamily::logistic));
  put_u64(out, problem.seed());
  put_f64(out, problem.reg_mu());
  put_vector(out, problem.x_true());
  put_u32(out, static_cast<std::uint32_t>(problem.workers()));
  for (int i = 0; i < problem.workers(); ++i) {
    put_matrix(out, problem.features()[i]);
    put_vector(out, problem.labels()[i]);
  }
  atomic_write(path, out);
}

LogisticProblem load_logistic(const std::string& path) {
  Reader r(path);
  r.expect_magic();
  if (r.u32() != static_cast<std::uint32_t>(ProblemFamily::logistic))
    throw ConfigError("problem file is not a logistic instance: " + path);
  const std::uint64_t seed = r.u64();
  const double reg_mu = r.f64();
  Vector x_true = r.vector();
  const std::uint32_t workers = r.u32();
  if (workers < 1 || workers > (1u << 20))
    throw ConfigError("problem file: implausible worker count");
  std::vector<Matrix> features;
  std::vector<Vector> labels;
  features.reserve(workers);
  labels.reserve(workers);
  for (std::uint32_t i = 0; i < workers; ++i) {
    features.push_back(r.matrix());
    labels.push_back(r.vector());
  }
  return LogisticProblem(std::move(features), std::move(labels), reg_mu,
                         std::move(x_true), seed);
}

void save_quadratic(const QuadraticPL& problem, const std::string& path) {
  std::string out;
  out.append(kMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(ProblemFamily::quadratic));
  put_u64(out, problem.seed());
  put_matrix(out, problem.a());
  put_vector(out, problem.b());
  atomic_write(path, out);
}

QuadraticPL load_quadratic(const std::string& path) {
  Reader r(path);
  r.expect_magic();
  if (r.u32() != static_cast<std::uint32_t>(ProblemFamily::quadratic))
    throw ConfigError("problem file is not a quadratic instance: " + path);
  const std::uint64_t seed = r.u64();
  Matrix a = r.matrix();
  Vector b = r.vector();
  return QuadraticPL(std::move(a), std::move(b), seed);
}

}  // namespace crpsgd::io
