#pragma once

#include <string>

#include "crpsgd/objectives.hpp"

namespace crpsgd::io {

/// Problem files are little-endian binary: an 8-byte magic "CRPSGD1\n",
/// a u32 family tag, then the family payload with doubles stored bit-exact,
/// so regenerating with the same seed reproduces the file byte for byte.
enum class ProblemFamily : std::uint32_t {
  logistic = 1,
  quadratic = 2,
};

ProblemFamily peek_family(const std::string& path);

void save_logistic(const LogisticProblem& problem, const std::string& path);
LogisticProblem load_logistic(const std::string& path);

void save_quadratic(const QuadraticPL& problem, const std::string& path);
QuadraticPL load_quadratic(const std::string& path);

/// Writes `contents` to `path` via a temporary file and rename.
void atomic_write(const std::string& path, const std::string& contents);

}  // namespace crpsgd::io
