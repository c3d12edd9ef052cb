#include "crpsgd/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "crpsgd/problem_io.hpp"
#include "crpsgd/schedule.hpp"
#include "crpsgd/verify.hpp"

namespace crpsgd::cli {

namespace {

std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

[[noreturn]] void config_fail(const std::string& msg) {
  throw ConfigError(msg);
}

void validate_keys(const json& j, const std::string& where,
                   const std::set<std::string>& allowed) {
  if (!j.is_object()) config_fail(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key))
      config_fail(where + ": unknown key '" + key + "'");
  }
}

double get_number(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) config_fail(where + ": missing key '" + key + "'");
  if (!j[key].is_number()) config_fail(where + ": '" + key + "' must be a number");
  return j[key].get<double>();
}

long long get_int(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) config_fail(where + ": missing key '" + key + "'");
  if (!j[key].is_number_integer())
    config_fail(where + ": '" + key + "' must be an integer");
  return j[key].get<long long>();
}

std::string get_string(const json& j, const std::string& where,
                       const char* key) {
  if (!j.contains(key)) config_fail(where + ": missing key '" + key + "'");
  if (!j[key].is_string()) config_fail(where + ": '" + key + "' must be a string");
  return j[key].get<std::string>();
}

}  // namespace

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_fail("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    config_fail("config parse error in " + path + ": " + e.what());
  }
  return j;
}

json resolve_run_config(const json& raw) {
  validate_keys(raw, "config",
                {"run_id", "algorithm", "problem", "params", "seeds",
                 "threads", "output"});
  json r;
  r["run_id"] = raw.value("run_id", std::string("run"));
  if (!raw.contains("algorithm")) config_fail("config: missing 'algorithm'");
  const std::string algo = raw["algorithm"].get<std::string>();
  const std::set<std::string> known_algos{"cr-psgd", "cr-psgd-catalyst",
                                          "psgd", "local-sgd"};
  if (!known_algos.count(algo))
    config_fail("config: unknown algorithm '" + algo + "'");
  r["algorithm"] = algo;

  // problem
  if (!raw.contains("problem")) config_fail("config: missing 'problem'");
  const json& p = raw["problem"];
  validate_keys(p, "problem",
                {"family", "file", "generate", "noise", "sigma2", "dim", "a",
                 "omega"});
  const std::string family = get_string(p, "problem", "family");
  json rp;
  rp["family"] = family;
  if (family == "logistic" || family == "quadratic") {
    const bool has_file = p.contains("file");
    const bool has_gen = p.contains("generate");
    if (has_file == has_gen)
      config_fail("problem: give exactly one of 'file' or 'generate'");
    if (has_file) rp["file"] = get_string(p, "problem", "file");
    if (has_gen) {
      const json& g = p["generate"];
      if (family == "logistic") {
        validate_keys(g, "problem.generate",
                      {"dim", "workers", "samples", "reg", "seed", "zero_mean"});
        json rg;
        rg["dim"] = get_int(g, "problem.generate", "dim");
        rg["workers"] = get_int(g, "problem.generate", "workers");
        rg["samples"] = get_int(g, "problem.generate", "samples");
        rg["reg"] = get_number(g, "problem.generate", "reg");
        rg["seed"] = get_int(g, "problem.generate", "seed");
        rg["zero_mean"] = g.value("zero_mean", false);
        rp["generate"] = rg;
      } else {
        validate_keys(g, "problem.generate", {"rows", "cols", "rank", "seed"});
        json rg;
        rg["rows"] = get_int(g, "problem.generate", "rows");
        rg["cols"] = get_int(g, "problem.generate", "cols");
        rg["rank"] = get_int(g, "problem.generate", "rank");
        rg["seed"] = get_int(g, "problem.generate", "seed");
        rp["generate"] = rg;
      }
    }
  } else if (family == "quadcos") {
    if (!p.contains("dim")) config_fail("problem: quadcos needs 'dim'");
    rp["dim"] = get_int(p, "problem", "dim");
    rp["a"] = p.contains("a") ? get_number(p, "problem", "a") : 1.0;
    rp["omega"] = p.contains("omega") ? get_number(p, "problem", "omega") : 2.0;
  } else {
    config_fail("problem: unknown family '" + family + "'");
  }
  const std::string default_noise =
      family == "logistic" ? "per-sample-data" : "additive-gaussian";
  const std::string noise = p.value("noise", default_noise);
  if (noise != "per-sample-data" && noise != "additive-gaussian")
    config_fail("problem: unknown noise model '" + noise + "'");
  if (noise == "per-sample-data" && family != "logistic")
    config_fail("problem: per-sample-data noise requires the logistic family");
  rp["noise"] = noise;
  rp["sigma2"] = p.contains("sigma2") ? get_number(p, "problem", "sigma2") : 1.0;
  r["problem"] = rp;

  // params
  if (!raw.contains("params")) config_fail("config: missing 'params'");
  const json& q = raw["params"];
  std::set<std::string> allowed{"workers", "budget", "gamma", "x1"};
  if (algo == "cr-psgd") {
    allowed.insert({"b1", "rho", "cap"});
  } else if (algo == "cr-psgd-catalyst") {
    allowed.insert({"b1", "rho", "cap", "theta"});
  } else if (algo == "psgd") {
    allowed.insert({"batch"});
  } else {
    allowed.insert({"batch", "h"});
  }
  validate_keys(q, "params", allowed);
  json rq;
  rq["workers"] = get_int(q, "params", "workers");
  rq["budget"] = get_int(q, "params", "budget");
  rq["gamma"] = get_number(q, "params", "gamma");
  if (algo == "cr-psgd" || algo == "cr-psgd-catalyst") {
    rq["b1"] = q.contains("b1") ? get_int(q, "params", "b1") : 2;
    rq["rho"] = q.contains("rho") ? get_number(q, "params", "rho") : 1.1;
    if (q.contains("cap")) rq["cap"] = get_int(q, "params", "cap");
  }
  if (algo == "cr-psgd-catalyst")
    rq["theta"] = get_number(q, "params", "theta");
  if (algo == "psgd" || algo == "local-sgd")
    rq["batch"] = get_int(q, "params", "batch");
  if (algo == "local-sgd")
    rq["h"] = q.contains("h") ? get_int(q, "params", "h") : 1;
  if (q.contains("x1")) {
    if (!q["x1"].is_array()) config_fail("params: 'x1' must be an array");
    rq["x1"] = q["x1"];
  }
  r["params"] = rq;

  // seeds / threads / output
  if (raw.contains("seeds")) {
    if (!raw["seeds"].is_array() || raw["seeds"].empty())
      config_fail("config: 'seeds' must be a non-empty array");
    for (const auto& s : raw["seeds"])
      if (!s.is_number_integer() || s.get<long long>() < 0)
        config_fail("config: seeds must be non-negative integers");
    r["seeds"] = raw["seeds"];
  } else {
    r["seeds"] = json::array({1});
  }
  r["threads"] = raw.contains("threads") ? get_int(raw, "config", "threads") : 1;
  if (r["threads"].get<long long>() < 1) config_fail("config: threads must be >= 1");

  json out;
  const std::string run_id = r["run_id"].get<std::string>();
  if (raw.contains("output")) {
    validate_keys(raw["output"], "output", {"trace_csv", "summary_json"});
    out["trace_csv"] =
        raw["output"].value("trace_csv", run_id + ".trace.csv");
    out["summary_json"] =
        raw["output"].value("summary_json", run_id + ".summary.json");
  } else {
    out["trace_csv"] = run_id + ".trace.csv";
    out["summary_json"] = run_id + ".summary.json";
  }
  r["output"] = out;
  return r;
}

BuiltProblem build_problem(const json& rp) {
  const std::string family = rp["family"].get<std::string>();
  const std::string noise = rp["noise"].get<std::string>();
  const double sigma2 = rp["sigma2"].get<double>();
  BuiltProblem bp;
  if (family == "logistic") {
    std::shared_ptr<const LogisticProblem> lp;
    if (rp.contains("file")) {
      lp = std::make_shared<const LogisticProblem>(
          io::load_logistic(rp["file"].get<std::string>()));
    } else {
      const json& g = rp["generate"];
      lp = std::make_shared<const LogisticProblem>(generate_logistic_instance(
          g["dim"].get<long long>(), static_cast<int>(g["workers"].get<long long>()),
          g["samples"].get<long long>(), g["reg"].get<double>(),
          static_cast<std::uint64_t>(g["seed"].get<long long>()),
          g["zero_mean"].get<bool>()));
    }
    bp.objective = lp;
    if (noise == "per-sample-data")
      bp.oracle = std::make_shared<const LogisticSampleOracle>(lp);
    else
      bp.oracle = std::make_shared<const GaussianNoiseOracle>(lp, sigma2);
  } else if (family == "quadratic") {
    std::shared_ptr<const QuadraticPL> qp;
    if (rp.contains("file")) {
      qp = std::make_shared<const QuadraticPL>(
          io::load_quadratic(rp["file"].get<std::string>()));
    } else {
      const json& g = rp["generate"];
      qp = std::make_shared<const QuadraticPL>(generate_quadratic_instance(
          g["rows"].get<long long>(), g["cols"].get<long long>(),
          g["rank"].get<long long>(),
          static_cast<std::uint64_t>(g["seed"].get<long long>())));
    }
    bp.objective = qp;
    bp.oracle = std::make_shared<const GaussianNoiseOracle>(qp, sigma2);
  } else {
    const auto obj = std::make_shared<const QuadraticCosine>(
        rp["dim"].get<long long>(), rp["a"].get<double>(),
        rp["omega"].get<double>());
    bp.objective = obj;
    bp.oracle = std::make_shared<const GaussianNoiseOracle>(obj, sigma2);
  }
  return bp;
}

namespace {

Vector initial_point(const json& params, Eigen::Index dim) {
  if (params.contains("x1")) {
    const auto& arr = params["x1"];
    if (static_cast<Eigen::Index>(arr.size()) != dim)
      config_fail("params: 'x1' has wrong dimension");
    Vector x(dim);
    for (Eigen::Index i = 0; i < dim; ++i) x(i) = arr[i].get<double>();
    return x;
  }
  return Vector::Zero(dim);
}

}  // namespace

RunTrace execute_run(const json& resolved, const BuiltProblem& problem,
                     std::uint64_t seed) {
  const std::string algo = resolved["algorithm"].get<std::string>();
  const json& q = resolved["params"];
  const int workers = static_cast<int>(q["workers"].get<long long>());
  const int threads = static_cast<int>(resolved["threads"].get<long long>());
  const WorkerPool pool(workers, threads);
  const Eigen::Index dim = problem.objective->dim();

  if (algo == "cr-psgd") {
    CrPsgdConfig cfg;
    cfg.workers = workers;
    cfg.sfo_budget = q["budget"].get<long long>();
    cfg.x1 = initial_point(q, dim);
    cfg.b1 = q["b1"].get<long long>();
    cfg.rho = q["rho"].get<double>();
    if (q.contains("cap")) cfg.cap = q["cap"].get<long long>();
    cfg.gamma = q["gamma"].get<double>();
    cfg.run_seed = seed;
    return cr_psgd(*problem.oracle, cfg, pool);
  }
  if (algo == "cr-psgd-catalyst") {
    CatalystConfig cfg;
    cfg.workers = workers;
    cfg.sfo_budget = q["budget"].get<long long>();
    cfg.theta = q["theta"].get<double>();
    cfg.y0 = initial_point(q, dim);
    cfg.b1 = q["b1"].get<long long>();
    cfg.rho = q["rho"].get<double>();
    if (q.contains("cap")) cfg.cap = q["cap"].get<long long>();
    cfg.gamma = q["gamma"].get<double>();
    cfg.run_seed = seed;
    return cr_psgd_catalyst(problem.oracle, cfg, pool);
  }
  if (algo == "psgd") {
    FixedBatchConfig cfg;
    cfg.workers = workers;
    cfg.sfo_budget = q["budget"].get<long long>();
    cfg.x1 = initial_point(q, dim);
    cfg.batch = q["batch"].get<long long>();
    cfg.gamma = q["gamma"].get<double>();
    cfg.run_seed = seed;
    return psgd_baseline(*problem.oracle, cfg, pool);
  }
  LocalSgdConfig cfg;
  cfg.workers = workers;
  cfg.sfo_budget = q["budget"].get<long long>();
  cfg.x1 = initial_point(q, dim);
  cfg.batch = q["batch"].get<long long>();
  cfg.gamma = q["gamma"].get<double>();
  cfg.sync_interval = q["h"].get<long long>();
  cfg.run_seed = seed;
  return local_sgd_baseline(*problem.oracle, cfg, pool);
}

namespace {

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted += "\"\"";
    else quoted += c;
  }
  quoted += '"';
  return quoted;
}

}  // namespace

std::string traces_to_csv(const std::string& run_id,
                          const std::vector<RunTrace>& traces) {
  std::string out =
      "run_id,algo,seed,outer_k,round_t,batch_size,cum_sfo_per_worker,"
      "cum_comm_rounds,loss,grad_norm_sq\n";
  for (const auto& trace : traces) {
    for (const auto& row : trace.rows) {
      out += csv_quote(run_id);
      out += ',';
      out += csv_quote(trace.algo);
      out += ',';
      out += std::to_string(trace.run_seed);
      out += ',';
      out += std::to_string(row.outer_k);
      out += ',';
      out += std::to_string(row.round_t);
      out += ',';
      out += std::to_string(row.batch);
      out += ',';
      out += std::to_string(row.cum_sfo);
      out += ',';
      out += std::to_string(row.cum_comm);
      out += ',';
      out += format_double(row.loss);
      out += ',';
      out += format_double(row.grad_norm_sq);
      out += '\n';
    }
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    config_fail("trace csv: bad number '" + s + "'");
  return v;
}

long long parse_ll(const std::string& s) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    config_fail("trace csv: bad integer '" + s + "'");
  return v;
}

}  // namespace

std::vector<CsvRow> parse_trace_csv(const std::string& csv) {
  std::vector<CsvRow> rows;
  std::istringstream in(csv);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      first = false;
      continue;  // header
    }
    const auto f = split_csv_line(line);
    if (f.size() != 10) config_fail("trace csv: expected 10 fields");
    CsvRow row;
    row.run_id = f[0];
    row.algo = f[1];
    row.seed = static_cast<std::uint64_t>(parse_ll(f[2]));
    row.outer_k = parse_ll(f[3]);
    row.round_t = parse_ll(f[4]);
    row.batch = parse_ll(f[5]);
    row.cum_sfo = parse_ll(f[6]);
    row.cum_comm = parse_ll(f[7]);
    row.loss = parse_double(f[8]);
    row.grad_norm_sq = parse_double(f[9]);
    rows.push_back(std::move(row));
  }
  return rows;
}

json summarize_rows(const std::vector<CsvRow>& rows) {
  // keyed by (algo, seed) in order of first appearance
  std::vector<std::pair<std::string, std::uint64_t>> order;
  std::map<std::pair<std::string, std::uint64_t>, const CsvRow*> last;
  std::map<std::pair<std::string, std::uint64_t>, long long> count;
  for (const auto& row : rows) {
    const auto key = std::make_pair(row.algo, row.seed);
    if (!last.count(key)) order.push_back(key);
    last[key] = &row;
    ++count[key];
  }
  json per_seed = json::array();
  double loss_sum = 0.0, grad_sum = 0.0;
  for (const auto& key : order) {
    const CsvRow* row = last[key];
    json entry;
    entry["algo"] = key.first;
    entry["seed"] = key.second;
    entry["rounds"] = count[key];
    entry["final_loss"] = row->loss;
    entry["final_grad_norm_sq"] = row->grad_norm_sq;
    entry["comm_rounds"] = row->cum_comm;
    entry["sfo_per_worker"] = row->cum_sfo;
    per_seed.push_back(std::move(entry));
    loss_sum += row->loss;
    grad_sum += row->grad_norm_sq;
  }
  json out;
  out["per_seed"] = per_seed;
  if (!order.empty()) {
    out["mean_final_loss"] = loss_sum / static_cast<double>(order.size());
    out["mean_final_grad_norm_sq"] =
        grad_sum / static_cast<double>(order.size());
  }
  return out;
}

namespace {

json try_rate_constants(const json& resolved, const BuiltProblem& bp,
                        std::vector<std::string>& warnings) {
  const std::string algo = resolved["algorithm"].get<std::string>();
  const json& q = resolved["params"];
  json rep;
  if (algo == "psgd" || algo == "local-sgd") {
    rep["available"] = false;
    rep["reason"] = "fixed-batch baseline has no batch-growth constants";
    return rep;
  }
  double L = bp.objective->smoothness();
  std::optional<double> mu = bp.objective->pl_modulus();
  if (algo == "cr-psgd-catalyst") {
    // constants of the proximal subproblems
    const double theta = q["theta"].get<double>();
    mu = theta - L;
    L = theta + L;
  }
  if (!mu || !(*mu > 0.0)) {
    rep["available"] = false;
    rep["reason"] = "objective declares no P-L modulus";
    return rep;
  }
  try {
    const RateConstants rc = rate_constants(
        q["gamma"].get<double>(), *mu, L, q["rho"].get<double>(),
        q["b1"].get<long long>(), bp.oracle->variance_bound());
    rep["available"] = true;
    rep["nu"] = rc.nu;
    rep["delta"] = rc.delta;
    rep["c1"] = rc.c1;
    rep["c2"] = rc.c2;
    rep["valid"] = rc.valid;
    if (!rc.valid)
      warnings.push_back(
          "batch-growth validity condition rho < 1/(1-nu) is not met; the "
          "run proceeds anyway");
  } catch (const ConfigError& e) {
    rep["available"] = false;
    rep["reason"] = e.what();
    warnings.push_back(std::string("rate constants unavailable: ") + e.what());
  }
  return rep;
}

}  // namespace

json make_summary(const json& resolved, const BuiltProblem& problem,
                  const std::vector<RunTrace>& traces,
                  const std::string& csv_text) {
  std::vector<std::string> warnings;
  json summary;
  summary["run_id"] = resolved["run_id"];
  summary["algorithm"] = resolved["algorithm"];
  summary["resolved_config"] = resolved;
  summary["results"] = summarize_rows(parse_trace_csv(csv_text));
  json counters = json::array();
  for (const auto& t : traces) {
    json c;
    c["seed"] = t.run_seed;
    c["comm_rounds"] = t.counters.comm_rounds;
    c["sfo_per_worker"] = t.counters.sfo_per_worker;
    c["degenerate"] = t.degenerate;
    if (t.degenerate)
      warnings.push_back("seed " + std::to_string(t.run_seed) +
                         ": budget below the first batch, no update performed");
    counters.push_back(std::move(c));
  }
  summary["counters"] = counters;
  summary["rate_constants"] = try_rate_constants(resolved, problem, warnings);
  summary["warnings"] = warnings;
  return summary;
}

// ---------------------------------------------------------------------------
// subcommand drivers

namespace {

int cmd_run(const std::string& config_path, const json& overrides,
            bool quiet) {
  json raw = config_path.empty() ? json::object() : load_json_file(config_path);
  // flags override file contents
  for (const auto& [key, value] : overrides.items()) {
    if (key == "params" || key == "problem" || key == "output") {
      for (const auto& [k2, v2] : value.items()) raw[key][k2] = v2;
    } else {
      raw[key] = value;
    }
  }
  const json resolved = resolve_run_config(raw);
  const BuiltProblem problem = build_problem(resolved["problem"]);

  std::vector<RunTrace> traces;
  for (const auto& s : resolved["seeds"]) {
    const auto seed = static_cast<std::uint64_t>(s.get<long long>());
    traces.push_back(execute_run(resolved, problem, seed));
    if (!quiet)
      std::cerr << "seed " << seed << ": " << traces.back().counters.comm_rounds
                << " rounds, " << traces.back().counters.sfo_per_worker
                << " samples/worker\n";
  }
  const std::string csv =
      traces_to_csv(resolved["run_id"].get<std::string>(), traces);
  const json summary = make_summary(resolved, problem, traces, csv);
  io::atomic_write(resolved["output"]["trace_csv"].get<std::string>(), csv);
  io::atomic_write(resolved["output"]["summary_json"].get<std::string>(),
                   summary.dump(2) + "\n");
  for (const auto& w : summary["warnings"])
    std::cerr << "warning: " << w.get<std::string>() << "\n";
  if (!quiet) std::cout << summary["results"].dump(2) << "\n";
  return 0;
}

int cmd_gen_logistic(long long dim, int workers, long long samples, double reg,
                     long long seed, bool zero_mean, const std::string& out) {
  const LogisticProblem problem = generate_logistic_instance(
      dim, workers, samples, reg, static_cast<std::uint64_t>(seed), zero_mean);
  io::save_logistic(problem, out);
  std::cout << "wrote " << out << " (logistic d=" << dim << " N=" << workers
            << " M=" << samples << " L=" << problem.smoothness() << ")\n";
  return 0;
}

int cmd_gen_quadratic(long long rows, long long cols, long long rank,
                      long long seed, const std::string& out) {
  const QuadraticPL problem = generate_quadratic_instance(
      rows, cols, rank, static_cast<std::uint64_t>(seed));
  io::save_quadratic(problem, out);
  std::cout << "wrote " << out << " (quadratic " << rows << "x" << cols
            << " rank=" << problem.rank() << " pl_mu=" << *problem.pl_modulus()
            << ")\n";
  return 0;
}

int cmd_compare(const std::string& config_path, int threads_override) {
  json raw = load_json_file(config_path);
  validate_keys(raw, "compare config",
                {"run_id", "problem", "workers", "budget", "gamma", "seeds",
                 "threads", "cr_psgd", "psgd", "local_sgd", "output"});
  const std::string run_id = raw.value("run_id", std::string("compare"));
  const long long workers = get_int(raw, "compare", "workers");
  const long long budget = get_int(raw, "compare", "budget");
  const double gamma = get_number(raw, "compare", "gamma");
  long long threads = raw.contains("threads") ? get_int(raw, "compare", "threads") : 1;
  if (threads_override > 0) threads = threads_override;
  json seeds = raw.contains("seeds") ? raw["seeds"] : json::array({1});

  auto run_algo = [&](const std::string& algo, json params) -> json {
    json cfg;
    cfg["run_id"] = run_id;
    cfg["algorithm"] = algo;
    cfg["problem"] = raw["problem"];
    params["workers"] = workers;
    params["budget"] = budget;
    params["gamma"] = gamma;
    cfg["params"] = params;
    cfg["seeds"] = seeds;
    cfg["threads"] = threads;
    return resolve_run_config(cfg);
  };

  json cr_params = json::object();
  if (raw.contains("cr_psgd")) {
    validate_keys(raw["cr_psgd"], "compare.cr_psgd", {"b1", "rho", "cap"});
    cr_params = raw["cr_psgd"];
  }
  if (!raw.contains("psgd")) config_fail("compare: missing 'psgd' section");
  validate_keys(raw["psgd"], "compare.psgd", {"batch"});
  if (!raw.contains("local_sgd")) config_fail("compare: missing 'local_sgd'");
  validate_keys(raw["local_sgd"], "compare.local_sgd", {"batch", "h"});

  const json cfg_cr = run_algo("cr-psgd", cr_params);
  const json cfg_psgd = run_algo("psgd", raw["psgd"]);
  const json cfg_local = run_algo("local-sgd", raw["local_sgd"]);

  const BuiltProblem problem = build_problem(cfg_cr["problem"]);
  std::vector<RunTrace> all;
  json finals = json::object();
  for (const json* cfg : {&cfg_cr, &cfg_psgd, &cfg_local}) {
    double loss_sum = 0.0;
    long long comm = 0;
    int n = 0;
    for (const auto& s : (*cfg)["seeds"]) {
      RunTrace t = execute_run(*cfg, problem,
                               static_cast<std::uint64_t>(s.get<long long>()));
      loss_sum += problem.objective->value(t.final_x);
      comm = t.counters.comm_rounds;
      ++n;
      all.push_back(std::move(t));
    }
    json f;
    f["mean_final_loss"] = loss_sum / n;
    f["comm_rounds"] = comm;
    finals[(*cfg)["algorithm"].get<std::string>()] = f;
  }

  json report;
  report["run_id"] = run_id;
  report["finals"] = finals;
  const double psgd_loss = finals["psgd"]["mean_final_loss"].get<double>();
  const double psgd_comm =
      static_cast<double>(finals["psgd"]["comm_rounds"].get<long long>());
  json deltas = json::object();
  json ratios = json::object();
  for (const std::string algo : {"cr-psgd", "local-sgd"}) {
    const double loss = finals[algo]["mean_final_loss"].get<double>();
    deltas[algo] = (loss - psgd_loss) / std::abs(psgd_loss);
    ratios[algo] =
        static_cast<double>(finals[algo]["comm_rounds"].get<long long>()) /
        psgd_comm;
  }
  report["final_loss_delta_vs_psgd"] = deltas;
  report["comm_round_ratio_vs_psgd"] = ratios;

  const std::string csv = traces_to_csv(run_id, all);
  std::string trace_path = run_id + ".compare.csv";
  std::string report_path = run_id + ".compare.json";
  if (raw.contains("output")) {
    validate_keys(raw["output"], "compare.output", {"trace_csv", "report_json"});
    trace_path = raw["output"].value("trace_csv", trace_path);
    report_path = raw["output"].value("report_json", report_path);
  }
  io::atomic_write(trace_path, csv);
  io::atomic_write(report_path, report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_sweep_local_h(const std::string& config_path,
                      const std::vector<long long>& h_list, double factor,
                      const std::string& out_path) {
  if (h_list.empty()) config_fail("sweep-local-h: empty H list");
  json raw = load_json_file(config_path);
  raw["algorithm"] = "local-sgd";
  json resolved = resolve_run_config(raw);
  const BuiltProblem problem = build_problem(resolved["problem"]);

  auto mean_final = [&](long long h) -> std::pair<double, long long> {
    json cfg = resolved;
    cfg["params"]["h"] = h;
    double loss_sum = 0.0;
    long long comm = 0;
    int n = 0;
    for (const auto& s : cfg["seeds"]) {
      const RunTrace t = execute_run(
          cfg, problem, static_cast<std::uint64_t>(s.get<long long>()));
      loss_sum += problem.objective->value(t.final_x);
      comm = t.counters.comm_rounds;
      ++n;
    }
    return {loss_sum / n, comm};
  };

  const auto [ref_loss, ref_comm] = mean_final(1);
  json table = json::array();
  long long selected = -1;
  double selected_ratio = 0.0;
  std::string csv = "h,mean_final_loss,comm_rounds,loss_ratio_vs_h1\n";
  for (long long h : h_list) {
    const auto [loss, comm] = h == 1 ? std::pair<double, long long>{ref_loss, ref_comm}
                                     : mean_final(h);
    const double ratio = loss / ref_loss;
    json row;
    row["h"] = h;
    row["mean_final_loss"] = loss;
    row["comm_rounds"] = comm;
    row["loss_ratio_vs_h1"] = ratio;
    table.push_back(row);
    csv += std::to_string(h) + "," + format_double(loss) + "," +
           std::to_string(comm) + "," + format_double(ratio) + "\n";
    if (ratio <= factor && h > selected) {
      selected = h;
      selected_ratio = ratio;
    }
  }
  json report;
  report["table"] = table;
  report["factor"] = factor;
  report["selected_h"] = selected;
  report["selected_loss_ratio"] = selected_ratio;
  std::cout << report.dump(2) << "\n";
  if (!out_path.empty()) io::atomic_write(out_path, csv);
  if (selected < 0) {
    std::cerr << "no H in the list stays within the loss factor\n";
    return 3;
  }
  return 0;
}

int cmd_plot_script(const std::string& csv_path, const std::string& out_path,
                    const std::string& xcol, const std::string& ycol,
                    bool logy) {
  const std::vector<std::string> cols{
      "run_id",          "algo",        "seed",
      "outer_k",         "round_t",     "batch_size",
      "cum_sfo_per_worker", "cum_comm_rounds", "loss",
      "grad_norm_sq"};
  auto index_of = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return static_cast<int>(i) + 1;
    config_fail("plot-script: unknown column '" + name + "'");
  };
  const int xi = index_of(xcol);
  const int yi = index_of(ycol);
  std::string script;
  script += "set datafile separator ','\n";
  script += "set key top right\n";
  script += "set xlabel '" + xcol + "'\n";
  script += "set ylabel '" + ycol + "'\n";
  if (logy) script += "set logscale y\n";
  script += "plot '" + csv_path + "' every ::1 using " + std::to_string(xi) +
            ":" + std::to_string(yi) + " with lines title '" + ycol + "'\n";
  script += "pause -1\n";
  io::atomic_write(out_path, script);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

json lemma1_report_json(const verify::Lemma1Report& report) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    json j;
    j["gamma"] = c.gamma;
    j["workers"] = c.workers;
    j["batch"] = c.batch;
    j["sigma2"] = c.sigma2;
    j["lhs_exact"] = c.lhs_exact;
    j["rhs_bound"] = c.rhs_bound;
    j["empirical_mean"] = c.empirical_mean;
    j["empirical_se"] = c.empirical_se;
    j["closed_form_ok"] = c.closed_form_ok;
    j["empirical_ok"] = c.empirical_ok;
    cells.push_back(std::move(j));
  }
  json out;
  out["cells"] = cells;
  out["pass"] = report.pass;
  return out;
}

json facts_report_json(const verify::FactsReport& report) {
  json facts = json::array();
  for (const auto& f : report.facts) {
    json j;
    j["name"] = f.name;
    j["applicable"] = f.applicable;
    j["checked"] = f.checked;
    j["violations"] = f.violations;
    j["max_violation"] = f.max_violation;
    j["equality"] = f.equality;
    j["pass"] = f.pass;
    facts.push_back(std::move(j));
  }
  json out;
  out["facts"] = facts;
  out["pass"] = report.pass;
  if (!report.notice.empty()) out["notice"] = report.notice;
  return out;
}

json fit_report_json(const verify::FitReport& rep) {
  json j;
  j["exponent"] = rep.fit.exponent;
  j["stderr"] = rep.fit.stderr_exponent;
  j["residual_rms"] = rep.fit.residual_rms;
  j["points"] = rep.fit.n;
  j["target"] = rep.target;
  j["window"] = json::array({rep.window_lo, rep.window_hi});
  j["pass"] = rep.pass;
  return j;
}

int emit_verify_report(const json& report, const std::string& out_path) {
  if (!out_path.empty()) io::atomic_write(out_path, report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return report["pass"].get<bool>() ? 0 : 3;
}

int cmd_verify(const std::string& suite, long long trials, int points,
               int seeds, int threads, const std::string& out_path) {
  if (suite == "lemma1") {
    const auto report = verify::lemma1_grid(trials, 0xA11CE);
    return emit_verify_report(lemma1_report_json(report), out_path);
  }
  if (suite == "facts") {
    json all = json::array();
    bool pass = true;
    // exact-equality witness f = (L/2)||x||^2
    {
      const IsotropicQuadratic witness(6, 3.0);
      const auto rep = verify::check_facts_suite(witness, points, 0xFAC7);
      json j = facts_report_json(rep);
      j["objective"] = "isotropic-quadratic L=3";
      pass = pass && rep.pass;
      all.push_back(std::move(j));
    }
    for (int i = 0; i < 10; ++i) {
      const QuadraticPL q = generate_quadratic_instance(
          8, 8, 8, 0xBEEF00 + static_cast<std::uint64_t>(i));
      const auto rep = verify::check_facts_suite(q, points, 0xFAC8 + i);
      json j = facts_report_json(rep);
      j["objective"] = "random quadratic " + std::to_string(i);
      pass = pass && rep.pass;
      all.push_back(std::move(j));
    }
    json report;
    report["suites"] = all;
    report["pass"] = pass;
    return emit_verify_report(report, out_path);
  }
  if (suite == "pl-rate") {
    verify::PlSweepParams p;
    p.workers = {1, 2, 4, 8};
    p.budgets = {1 << 12, 1 << 13, 1 << 14, 1 << 15, 1 << 16};
    p.seeds = seeds;
    p.threads = threads;
    const auto sweep = verify::run_pl_gap_sweep(p);
    const auto fit_t = verify::fit_pl_rate_vs_budget(sweep, 1, -1.3, -0.8);
    const auto fit_n =
        verify::fit_pl_rate_vs_workers(sweep, 1 << 16, -1.5, -0.6);
    json cells = json::array();
    for (const auto& c : sweep) {
      cells.push_back(json{{"workers", c.workers},
                           {"budget", c.budget},
                           {"mean_gap", c.value}});
    }
    json report;
    report["cells"] = cells;
    report["fit_vs_budget"] = fit_report_json(fit_t);
    report["fit_vs_workers"] = fit_report_json(fit_n);
    report["pass"] = fit_t.pass && fit_n.pass;
    return emit_verify_report(report, out_path);
  }
  if (suite == "catalyst-rate") {
    verify::CatalystSweepParams p;
    p.budgets = {1 << 11, 1 << 13, 1 << 15, 1 << 17};
    p.seeds = seeds;
    p.threads = threads;
    const auto sweep = verify::run_catalyst_sweep(p);
    json cells = json::array();
    for (const auto& c : sweep)
      cells.push_back(json{{"workers", c.workers},
                           {"budget", c.budget},
                           {"mean_grad_norm_sq", c.value}});
    bool pass = true;
    json ratios = json::array();
    for (std::size_t i = 0; i + 1 < sweep.size(); ++i) {
      const double ratio = sweep[i].value / sweep[i + 1].value;
      ratios.push_back(ratio);
      pass = pass && ratio >= 1.4 && ratio <= 2.8;
    }
    const auto fit = verify::fit_catalyst_rate(sweep, -0.9, -0.25);
    json report;
    report["cells"] = cells;
    report["quadrupling_ratios"] = ratios;
    report["ratio_window"] = json::array({1.4, 2.8});
    report["fit_vs_total_budget"] =
        json{{"exponent", fit.fit.exponent}, {"points", fit.fit.n}};
    report["pass"] = pass;
    return emit_verify_report(report, out_path);
  }
  if (suite == "determinism") {
    json cfg;
    cfg["run_id"] = "determinism";
    cfg["algorithm"] = "cr-psgd";
    cfg["problem"] = {{"family", "quadcos"}, {"dim", 8}, {"sigma2", 1.0}};
    cfg["params"] = {{"workers", 8}, {"budget", 1 << 12}, {"b1", 2},
                     {"rho", 1.1},   {"gamma", 0.04}};
    cfg["seeds"] = json::array({1, 2});
    std::vector<std::string> outputs;
    for (int threads_n : {1, 2, 8}) {
      cfg["threads"] = threads_n;
      const json resolved = resolve_run_config(cfg);
      const BuiltProblem problem = build_problem(resolved["problem"]);
      std::vector<RunTrace> traces;
      for (const auto& s : resolved["seeds"])
        traces.push_back(execute_run(
            resolved, problem, static_cast<std::uint64_t>(s.get<long long>())));
      outputs.push_back(traces_to_csv("determinism", traces));
    }
    const bool pass = outputs[0] == outputs[1] && outputs[0] == outputs[2];
    json report;
    report["parallelism"] = json::array({1, 2, 8});
    report["byte_identical"] = pass;
    report["pass"] = pass;
    return emit_verify_report(report, out_path);
  }
  config_fail("verify: unknown suite '" + suite + "'");
}

}  // namespace

int run_main(int argc, const char* const* argv) {
  CLI::App app{"communication-reduced parallel SGD laboratory"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a problem instance file");
  gen->require_subcommand(1);
  auto* gen_log = gen->add_subcommand("logistic", "synthetic logistic regression");
  long long g_dim = 500, g_samples = 10000, g_seed = 1;
  int g_workers = 10;
  double g_reg = 0.001;
  bool g_zero_mean = false;
  std::string g_out = "logistic.bin";
  gen_log->add_option("--dim", g_dim, "feature dimension d");
  gen_log->add_option("--workers", g_workers, "number of workers N");
  gen_log->add_option("--samples", g_samples, "samples per worker M_i");
  gen_log->add_option("--reg", g_reg, "l2 regularization coefficient");
  gen_log->add_option("--seed", g_seed, "generator seed");
  gen_log->add_flag("--zero-mean", g_zero_mean, "feature mean 0 instead of 1");
  gen_log->add_option("--out", g_out, "output path");

  auto* gen_quad = gen->add_subcommand("quadratic", "random least-squares instance");
  long long q_rows = 10, q_cols = 10, q_rank = 5, q_seed = 1;
  std::string q_out = "quadratic.bin";
  gen_quad->add_option("--rows", q_rows, "rows of A");
  gen_quad->add_option("--cols", q_cols, "columns of A");
  gen_quad->add_option("--rank", q_rank, "rank of A");
  gen_quad->add_option("--seed", q_seed, "generator seed");
  gen_quad->add_option("--out", q_out, "output path");

  // run
  auto* run = app.add_subcommand("run", "execute one configured experiment");
  std::string r_config;
  run->add_option("--config", r_config, "run config JSON file");
  std::string r_run_id, r_algo, r_trace, r_summary, r_seeds;
  long long r_workers = -1, r_budget = -1, r_b1 = -1, r_batch = -1, r_h = -1,
            r_cap = -1, r_threads = -1;
  double r_rho = -1.0, r_gamma = -1.0, r_theta = -1.0, r_sigma2 = -1.0;
  bool r_quiet = false;
  run->add_option("--run-id", r_run_id, "run identifier");
  run->add_option("--algorithm", r_algo, "algorithm id");
  run->add_option("--workers", r_workers, "N");
  run->add_option("--budget", r_budget, "per-worker SFO budget T");
  run->add_option("--b1", r_b1, "initial batch size");
  run->add_option("--rho", r_rho, "batch growth factor");
  run->add_option("--gamma", r_gamma, "learning rate");
  run->add_option("--batch", r_batch, "fixed batch size (baselines)");
  run->add_option("--sync-h", r_h, "local steps between averagings");
  run->add_option("--cap", r_cap, "batch size cap");
  run->add_option("--theta", r_theta, "proximal coefficient");
  std::string r_family, r_problem_file, r_noise;
  long long r_dim = -1;
  run->add_option("--family", r_family, "problem family");
  run->add_option("--problem-file", r_problem_file, "problem instance file");
  run->add_option("--dim", r_dim, "dimension (quadcos family)");
  run->add_option("--noise", r_noise, "oracle noise model");
  run->add_option("--sigma2", r_sigma2, "oracle noise variance");
  run->add_option("--threads", r_threads, "worker thread count");
  run->add_option("--seeds", r_seeds, "comma-separated seed list");
  run->add_option("--trace", r_trace, "trace CSV path");
  run->add_option("--summary", r_summary, "summary JSON path");
  run->add_flag("--quiet", r_quiet, "suppress progress output");

  // compare
  auto* compare = app.add_subcommand(
      "compare", "run cr-psgd, psgd and local-sgd on a shared problem");
  std::string c_config;
  int c_threads = -1;
  compare->add_option("--config", c_config, "compare config JSON file")
      ->required();
  compare->add_option("--threads", c_threads, "worker thread count");

  // verify
  auto* ver = app.add_subcommand("verify", "run a verification suite");
  std::string v_suite, v_out;
  long long v_trials = 10000;
  int v_points = 1000, v_seeds = 20, v_threads = 2;
  ver->add_option("suite", v_suite,
                  "one of lemma1|facts|pl-rate|catalyst-rate|determinism")
      ->required();
  ver->add_option("--trials", v_trials, "Monte-Carlo trials per cell");
  ver->add_option("--points", v_points, "random points per inequality");
  ver->add_option("--seeds", v_seeds, "seeds per sweep cell");
  ver->add_option("--threads", v_threads, "parallel sweep cells");
  ver->add_option("--out", v_out, "report JSON path");

  // sweep-local-h
  auto* sweep = app.add_subcommand("sweep-local-h",
                                   "sweep the communication-skipping interval");
  std::string s_config, s_out, s_hlist = "1,2,5,10,20,50";
  double s_factor = 1.01;
  sweep->add_option("--config", s_config, "base run config JSON file")
      ->required();
  sweep->add_option("--h-list", s_hlist, "comma-separated H values");
  sweep->add_option("--factor", s_factor, "acceptable loss ratio vs H=1");
  sweep->add_option("--out", s_out, "table CSV path");

  // plot-script
  auto* plot = app.add_subcommand("plot-script",
                                  "emit a gnuplot script for a trace CSV");
  std::string p_csv, p_out = "plot.gp", p_x = "cum_comm_rounds", p_y = "loss";
  bool p_logy = false;
  plot->add_option("--csv", p_csv, "trace CSV path")->required();
  plot->add_option("--out", p_out, "script path");
  plot->add_option("--x", p_x, "x column");
  plot->add_option("--y", p_y, "y column");
  plot->add_flag("--logy", p_logy, "log-scale y axis");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen_log->parsed())
      return cmd_gen_logistic(g_dim, g_workers, g_samples, g_reg, g_seed,
                              g_zero_mean, g_out);
    if (gen_quad->parsed())
      return cmd_gen_quadratic(q_rows, q_cols, q_rank, q_seed, q_out);
    if (run->parsed()) {
      json overrides = json::object();
      if (!r_run_id.empty()) overrides["run_id"] = r_run_id;
      if (!r_algo.empty()) overrides["algorithm"] = r_algo;
      json params = json::object();
      if (r_workers >= 0) params["workers"] = r_workers;
      if (r_budget >= 0) params["budget"] = r_budget;
      if (r_b1 >= 0) params["b1"] = r_b1;
      if (r_rho > 0) params["rho"] = r_rho;
      if (r_gamma > 0) params["gamma"] = r_gamma;
      if (r_batch >= 0) params["batch"] = r_batch;
      if (r_h >= 0) params["h"] = r_h;
      if (r_cap >= 0) params["cap"] = r_cap;
      if (r_theta > 0) params["theta"] = r_theta;
      if (!params.empty()) overrides["params"] = params;
      json probp = json::object();
      if (!r_family.empty()) probp["family"] = r_family;
      if (!r_problem_file.empty()) probp["file"] = r_problem_file;
      if (r_dim > 0) probp["dim"] = r_dim;
      if (!r_noise.empty()) probp["noise"] = r_noise;
      if (r_sigma2 >= 0) probp["sigma2"] = r_sigma2;
      if (!probp.empty()) overrides["problem"] = probp;
      if (r_threads > 0) overrides["threads"] = r_threads;
      if (!r_seeds.empty()) {
        json seeds = json::array();
        std::stringstream ss(r_seeds);
        std::string tok;
        while (std::getline(ss, tok, ','))
          seeds.push_back(std::stoll(tok));
        overrides["seeds"] = seeds;
      }
      json outp = json::object();
      if (!r_trace.empty()) outp["trace_csv"] = r_trace;
      if (!r_summary.empty()) outp["summary_json"] = r_summary;
      if (!outp.empty()) overrides["output"] = outp;
      return cmd_run(r_config, overrides, r_quiet);
    }
    if (compare->parsed()) return cmd_compare(c_config, c_threads);
    if (ver->parsed())
      return cmd_verify(v_suite, v_trials, v_points, v_seeds, v_threads, v_out);
    if (sweep->parsed()) {
      std::vector<long long> hs;
      std::stringstream ss(s_hlist);
      std::string tok;
      while (std::getline(ss, tok, ',')) hs.push_back(std::stoll(tok));
      return cmd_sweep_local_h(s_config, hs, s_factor, s_out);
    }
    if (plot->parsed())
      return cmd_plot_script(p_csv, p_out, p_x, p_y, p_logy);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DegenerateProblemError& e) {
    std::cerr << "degenerate problem: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace crpsgd::cli
