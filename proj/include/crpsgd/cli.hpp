#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "crpsgd/algorithms.hpp"
#include "crpsgd/objectives.hpp"

namespace crpsgd::cli {

using json = nlohmann::json;

/// Parses and schema-validates a run config; unknown keys are rejected and
/// defaults are filled in, so the returned object is the fully resolved
/// config embedded in summaries.
json resolve_run_config(const json& raw);
json load_json_file(const std::string& path);

struct BuiltProblem {
  std::shared_ptr<const SmoothObjective> objective;
  std::shared_ptr<const StochasticOracle> oracle;
};

/// Instantiates the problem/oracle pair described by config["problem"].
BuiltProblem build_problem(const json& problem_cfg);

/// Executes the configured algorithm for one seed.
RunTrace execute_run(const json& resolved, const BuiltProblem& problem,
                     std::uint64_t seed);

/// Trace CSV (RFC 4180, LF endings, round-trip numeric formatting) with the
/// column order:
/// run_id,algo,seed,outer_k,round_t,batch_size,cum_sfo_per_worker,
/// cum_comm_rounds,loss,grad_norm_sq
std::string traces_to_csv(const std::string& run_id,
                          const std::vector<RunTrace>& traces);

struct CsvRow {
  std::string run_id;
  std::string algo;
  std::uint64_t seed = 0;
  long long outer_k = 0;
  long long round_t = 0;
  long long batch = 0;
  long long cum_sfo = 0;
  long long cum_comm = 0;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
};

std::vector<CsvRow> parse_trace_csv(const std::string& csv);

/// Per-seed finals and their means, derived from trace rows only; the same
/// function backs the emitted summary, so re-summarizing a parsed CSV
/// reproduces it exactly.
json summarize_rows(const std::vector<CsvRow>& rows);

/// Full summary for a run: resolved config, per-seed results, rate-constant
/// report and warnings.
json make_summary(const json& resolved, const BuiltProblem& problem,
                  const std::vector<RunTrace>& traces,
                  const std::string& csv_text);

/// Entry point used by the binary; returns the process exit code
/// (0 ok, 2 config error, 3 verification failure).
int run_main(int argc, const char* const* argv);

}  // namespace crpsgd::cli
