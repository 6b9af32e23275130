#pragma once

// Command implementations for the igbss executable. Kept in a header so the
// test suite can drive every subcommand in-process.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "igbss/igbss.hpp"

namespace igbss::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum ExitCode : int {
  kOk = 0,
  kNotConverged = 2,
  kUsage = 64,
  kDataFormat = 65,
  kIoError = 74,
};

/// Flag combination that cannot be honored.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data that violates a documented precondition.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline json number_or_inf(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline void write_csv(const fs::path& path, const MatrixXd& X) {
  std::ostringstream s;
  write_matrix_csv(s, X);
  write_text(path, s.str());
}

inline MatrixXd read_csv(const std::string& path) {
  try {
    return read_matrix_csv(path);
  } catch (const DataFormatError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataFormatError(path + ": " + e.what());
  }
}

/// x.csv -> x.manifest.json next to it.
inline fs::path manifest_path_for(const fs::path& output) {
  fs::path p = output;
  p.replace_extension();
  p += ".manifest.json";
  return p;
}

/// Record of one command invocation. Everything under "timing" is runtime
/// and is ignored when comparing a replay with the original.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  json flags = json::object();
  json seeds = json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  json timing = json::object();
  json iterations = nullptr;

  json to_json() const {
    json j;
    j["tool"] = "igbss";
    j["version"] = kVersion;
    j["command"] = command;
    j["argv"] = argv;
    j["flags"] = flags;
    j["seeds"] = seeds;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["iterations"] = iterations;
    j["timing"] = timing;
    return j;
  }
};

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
  std::string kind;
  std::size_t samples = 500;
  std::size_t count = 1000;
  std::uint64_t seed = 1;
  std::string output;
};

inline int cmd_generate(const GenerateOptions& o, RunManifest& man, std::ostream& log) {
  const auto t0 = Clock::now();
  MatrixXd Z;
  if (o.kind == "timeseries") {
    Z = gen_timeseries(o.samples);
    man.flags["samples"] = o.samples;
  } else {
    Z = gen_pointcloud(o.count, o.seed);
    man.flags["count"] = o.count;
  }
  man.flags["kind"] = o.kind;
  man.seeds["data"] = o.seed;
  man.timing["generate"] = seconds_since(t0);
  write_csv(o.output, Z);
  man.outputs.push_back(o.output);
  write_json(manifest_path_for(o.output), man.to_json());
  log << "wrote " << Z.rows() << "x" << Z.cols() << " " << o.kind << " to " << o.output << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// mix

inline json mixing_spec_to_json(const MixingSpec& s) {
  json j;
  j["rows"] = s.rows;
  j["sources"] = s.sources;
  j["order"] = s.order;
  j["lo"] = s.lo;
  j["hi"] = s.hi;
  j["seed"] = s.seed;
  json terms = json::array();
  for (const auto& t : s.terms) {
    json tj;
    tj["row"] = t.row;
    tj["sources"] = t.sources;
    tj["coefficient"] = t.coefficient;
    terms.push_back(tj);
  }
  j["terms"] = terms;
  return j;
}

inline MixingSpec mixing_spec_from_json(const json& j) {
  try {
    MixingSpec s;
    s.rows = j.at("rows").get<std::size_t>();
    s.sources = j.at("sources").get<std::size_t>();
    s.order = j.at("order").get<std::size_t>();
    s.lo = j.value("lo", 0.0);
    s.hi = j.value("hi", 1.0);
    s.seed = j.value("seed", std::uint64_t{0});
    for (const auto& tj : j.at("terms"))
      s.terms.push_back({tj.at("row").get<std::uint32_t>(), tj.at("sources").get<std::vector<std::uint32_t>>(),
                         tj.at("coefficient").get<double>()});
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw DataFormatError(std::string("mixing spec: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataFormatError(std::string("mixing spec: ") + e.what());
  }
}

struct MixOptions {
  std::string sources;
  std::string spec;
  std::size_t rows = 0;  // 0: same as the number of sources
  std::size_t order = 1;
  double lo = 0.5;
  double hi = 2.0;
  std::uint64_t seed = 1;
  std::string output;
};

inline fs::path spec_path_for(const fs::path& output) {
  fs::path p = output;
  p.replace_extension();
  p += ".spec.json";
  return p;
}

inline int cmd_mix(const MixOptions& o, RunManifest& man, std::ostream& log) {
  const auto t0 = Clock::now();
  const MatrixXd Z = read_csv(o.sources);
  man.inputs.push_back(o.sources);
  MixingSpec spec;
  if (!o.spec.empty()) {
    spec = mixing_spec_from_json(read_json(o.spec));
    man.inputs.push_back(o.spec);
  } else {
    const std::size_t L = o.rows ? o.rows : static_cast<std::size_t>(Z.rows());
    if (o.order < 1 || o.order > static_cast<std::size_t>(Z.rows()))
      throw UsageError("--order must be between 1 and the number of sources (" + std::to_string(Z.rows()) + ")");
    if (!(o.lo < o.hi)) throw UsageError("--lo must be smaller than --hi");
    spec = gen_mixing(L, static_cast<std::size_t>(Z.rows()), o.order, o.lo, o.hi, o.seed);
    man.seeds["mixing"] = o.seed;
  }
  if (spec.sources != static_cast<std::size_t>(Z.rows()))
    throw DataError("mixing spec expects " + std::to_string(spec.sources) + " sources, '" + o.sources + "' has " +
                    std::to_string(Z.rows()) + " rows");
  const MatrixXd X = mix(Z, spec);
  man.flags = {{"order", spec.order}, {"rows", spec.rows}, {"lo", spec.lo}, {"hi", spec.hi}};
  man.timing["mix"] = seconds_since(t0);

  write_csv(o.output, X);
  const fs::path spec_out = spec_path_for(o.output);
  write_json(spec_out, mixing_spec_to_json(spec));
  man.outputs = {o.output, spec_out.string()};
  write_json(manifest_path_for(o.output), man.to_json());
  log << "mixed " << Z.rows() << " sources into " << X.rows() << " signals (" << spec.terms.size()
      << " coefficients) -> " << o.output << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// separate

struct SeparateOptions {
  std::string input;
  std::size_t sources = 0;
  std::size_t order = 1;
  std::string norm = "minmax";
  std::string optimizer = "ng";
  double lr = 1.0;
  double tol = 1e-8;
  std::size_t max_iter = 0;
  std::string init = "zeros";
  double sigma = 0.1;
  std::uint64_t seed = 0;
  double epsilon = -1.0;
  std::string outdir;
};

inline FitConfig fit_config_from(const SeparateOptions& o) {
  FitConfig c;
  c.method = parse_method(o.optimizer);
  c.lr = o.lr;
  c.tol = o.tol;
  c.max_iter = o.max_iter;
  c.init = o.init == "zeros" ? Init::zeros() : Init::random_normal(o.sigma, o.seed);
  c.validate();
  return c;
}

inline json report_to_json(const SeparationResult& r) {
  json j;
  j["converged"] = r.report.converged;
  j["iterations"] = r.report.iterations;
  j["final_kl"] = r.report.final_kl;
  j["final_grad_inf_norm"] = r.report.final_grad_inf_norm;
  j["fallback_steps"] = r.report.fallback_steps;
  j["step_halvings"] = r.report.step_halvings;
  j["kl_trace"] = r.report.kl_trace;
  const auto& n = r.normalization;
  j["normalization"] = {{"scheme", to_string(n.scheme)}, {"data_min", n.data_min}, {"data_max", n.data_max},
                        {"epsilon", n.epsilon},          {"shift", n.shift},       {"total", n.total}};
  j["space"] = {{"states", r.space->size()},
                {"mixing", r.space->mixing_size()},
                {"sources", r.space->source_size()},
                {"received", r.space->received_size()}};
  return j;
}

inline int cmd_separate(const SeparateOptions& o, RunManifest& man, std::ostream& log) {
  const FitConfig config = fit_config_from(o);
  const NormScheme scheme = parse_norm_scheme(o.norm);

  auto t0 = Clock::now();
  const MatrixXd X = read_csv(o.input);
  man.inputs.push_back(o.input);
  man.timing["read"] = seconds_since(t0);
  if (X.rows() < 2) throw DataError("'" + o.input + "' has " + std::to_string(X.rows()) + " rows; need at least 2");
  if (o.order > o.sources) throw UsageError("--order must not exceed --sources");

  man.flags = {{"sources", o.sources}, {"order", o.order},         {"norm", to_string(scheme)},
               {"optimizer", to_string(config.method)}, {"lr", o.lr}, {"tol", o.tol},
               {"max_iter", config.effective_max_iter()}, {"init", o.init}, {"sigma", o.sigma},
               {"epsilon", o.epsilon < 0.0 ? json(nullptr) : json(o.epsilon)}};
  man.seeds["init"] = o.seed;

  t0 = Clock::now();
  SeparationResult r;
  try {
    r = separate(SignalMatrix(X, SignalRole::Received), o.sources, o.order, scheme, config, o.epsilon);
  } catch (const NumericalError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  man.timing["fit"] = seconds_since(t0);
  man.timing["evaluate"] = r.report.times.evaluate;
  man.timing["fisher"] = r.report.times.fisher;
  man.timing["solve"] = r.report.times.solve;
  man.iterations = r.report.iterations;

  t0 = Clock::now();
  const fs::path dir(o.outdir);
  write_csv(dir / "recovered.csv", r.recovered.data);
  write_csv(dir / "source_probabilities.csv", r.source_probabilities);
  json theta = json::array();
  for (const auto& mp : r.mixing_params) theta.push_back({{"state", to_string(mp.state)}, {"theta", mp.theta}});
  write_json(dir / "mixing_theta.json", theta);
  write_json(dir / "report.json", report_to_json(r));
  man.timing["write"] = seconds_since(t0);
  for (const char* f : {"recovered.csv", "source_probabilities.csv", "mixing_theta.json", "report.json"})
    man.outputs.push_back((dir / f).string());
  write_json(dir / "manifest.json", man.to_json());

  log << (r.report.converged ? "converged" : "did not converge") << " after " << r.report.iterations
      << " iterations, KL " << r.report.final_kl << ", max|grad| " << r.report.final_grad_inf_norm << "\n";
  return r.report.converged ? kOk : kNotConverged;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
  std::string recovered;
  std::string truth;
  bool allow_sign = false;
  std::string scaling = "minmax";
  std::string output;
};

inline json evaluation_to_json(const Evaluation& ev, bool allow_sign, MetricScaling scaling) {
  json j;
  j["allow_sign"] = allow_sign;
  j["scaling"] = to_string(scaling);
  j["rmse"] = number_or_inf(ev.rmse);
  j["snr_db"] = number_or_inf(ev.snr_db);
  j["permutation"] = ev.matching.permutation;
  j["signs"] = ev.matching.signs;
  json per = json::array();
  for (const auto& s : ev.per_signal)
    per.push_back({{"rmse", number_or_inf(s.rmse)}, {"snr_db", number_or_inf(s.snr_db)},
                   {"correlation", s.correlation}});
  j["per_signal"] = per;
  return j;
}

inline int cmd_evaluate(const EvaluateOptions& o, RunManifest& man, std::ostream& log) {
  const auto scaling = parse_metric_scaling(o.scaling);
  const auto t0 = Clock::now();
  const MatrixXd R = read_csv(o.recovered);
  const MatrixXd T = read_csv(o.truth);
  man.inputs = {o.recovered, o.truth};
  if (R.rows() != T.rows() || R.cols() != T.cols())
    throw DataError("recovered is " + std::to_string(R.rows()) + "x" + std::to_string(R.cols()) + " but truth is " +
                    std::to_string(T.rows()) + "x" + std::to_string(T.cols()));
  if (static_cast<std::size_t>(T.rows()) > kMaxExhaustiveSignals)
    throw DataError("evaluation supports at most " + std::to_string(kMaxExhaustiveSignals) + " signals");
  const Evaluation ev = evaluate_recovery(R, T, o.allow_sign, scaling);
  man.flags = {{"allow_sign", o.allow_sign}, {"scaling", o.scaling}};
  man.timing["evaluate"] = seconds_since(t0);
  const json metrics = evaluation_to_json(ev, o.allow_sign, scaling);
  if (o.output.empty()) {
    log << metrics.dump(2) << "\n";
  } else {
    write_json(o.output, metrics);
    man.outputs.push_back(o.output);
    write_json(manifest_path_for(o.output), man.to_json());
    log << "rmse " << ev.rmse << ", snr " << ev.snr_db << " dB -> " << o.output << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// benchmark

struct BenchmarkOptions {
  std::string preset = "timeseries";
  std::vector<std::size_t> orders{1, 2, 3};
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::string> norms{"minmax", "exp"};
  std::vector<std::size_t> sizes{100, 200, 400, 800};
  std::vector<std::string> optimizers{"gd", "ng"};
  std::size_t samples = 500;
  std::size_t scaling_iters = 20;
  double lo = 0.5;
  double hi = 2.0;
  std::string outdir;
};

/// Worker cap from IGBSS_THREADS, defaulting to the hardware concurrency.
inline std::size_t benchmark_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("IGBSS_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw UsageError("IGBSS_THREADS must be a positive integer");
    n = static_cast<std::size_t>(v);
  }
  return n;
}

/// Runs task(i) for i in [0, count) on at most `threads` workers.
template <class Task>
void parallel_for(std::size_t count, std::size_t threads, Task&& task) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min(threads, count);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct Row {
  std::vector<std::pair<std::string, json>> cells;
  void add(std::string key, json v) { cells.emplace_back(std::move(key), std::move(v)); }
};

inline std::string table_csv(const std::vector<Row>& rows) {
  std::ostringstream s;
  if (rows.empty()) return "";
  for (std::size_t c = 0; c < rows[0].cells.size(); ++c) s << (c ? "," : "") << rows[0].cells[c].first;
  s << "\n";
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.cells.size(); ++c) {
      const json& v = r.cells[c].second;
      s << (c ? "," : "");
      if (v.is_string())
        s << v.get<std::string>();
      else if (v.is_number_float())
        s << format_double(v.get<double>());
      else
        s << v.dump();
    }
    s << "\n";
  }
  return s.str();
}

inline json table_json(const std::vector<Row>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    json j = json::object();
    for (const auto& [k, v] : r.cells) j[k] = v;
    arr.push_back(j);
  }
  return arr;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sd_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return v.size() < 2 ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

/// Least-squares line y = a + b x and its coefficient of determination.
struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
};

inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  f.r2 = (sxx > 0 && syy > 0) ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

struct TimeseriesRun {
  std::size_t order = 1;
  std::string norm;
  std::uint64_t seed = 0;
  double rmse = 0.0, snr = 0.0, seconds = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

inline void benchmark_timeseries(const BenchmarkOptions& o, std::size_t threads, std::vector<Row>& rows,
                                 json& extra) {
  std::vector<TimeseriesRun> runs;
  for (auto k : o.orders)
    for (const auto& norm : o.norms)
      for (auto seed : o.seeds) runs.push_back({k, norm, seed});
  const MatrixXd Z = gen_timeseries(o.samples);
  parallel_for(runs.size(), threads, [&](std::size_t i) {
    auto& run = runs[i];
    const MatrixXd X = mix(Z, gen_mixing(3, 3, run.order, o.lo, o.hi, run.seed));
    const auto t0 = Clock::now();
    const auto r = separate(SignalMatrix(X, SignalRole::Received), 3, run.order, parse_norm_scheme(run.norm),
                            FitConfig{});
    run.seconds = seconds_since(t0);
    const auto ev = evaluate_recovery(r.recovered.data, Z, false);
    run.rmse = ev.rmse;
    run.snr = ev.snr_db;
    run.iterations = r.report.iterations;
    run.converged = r.report.converged;
  });
  json per_run = json::array();
  for (auto k : o.orders)
    for (const auto& norm : o.norms) {
      std::vector<double> rm, sn, sec, it;
      bool all = true;
      for (const auto& run : runs)
        if (run.order == k && run.norm == norm) {
          rm.push_back(run.rmse);
          sn.push_back(run.snr);
          sec.push_back(run.seconds);
          it.push_back(static_cast<double>(run.iterations));
          all = all && run.converged;
          per_run.push_back({{"order", k}, {"norm", norm}, {"seed", run.seed}, {"rmse", run.rmse},
                             {"snr_db", number_or_inf(run.snr)}, {"iterations", run.iterations},
                             {"converged", run.converged}, {"seconds", run.seconds}});
        }
      Row row;
      row.add("order", k);
      row.add("norm", norm);
      row.add("optimizer", "ng");
      row.add("runs", rm.size());
      row.add("rmse_mean", mean_of(rm));
      row.add("rmse_sd", sd_of(rm));
      row.add("snr_db_mean", mean_of(sn));
      row.add("snr_db_sd", sd_of(sn));
      row.add("iterations_mean", mean_of(it));
      row.add("all_converged", all);
      row.add("seconds_mean", mean_of(sec));
      rows.push_back(std::move(row));
    }
  extra["runs"] = per_run;
}

inline void benchmark_scaling(const BenchmarkOptions& o, std::vector<Row>& rows, json& extra) {
  // Timed runs execute one at a time so that workers do not share cores.
  for (const auto& opt : o.optimizers) {
    std::vector<double> xs, ys;
    for (auto M : o.sizes) {
      const MatrixXd X = mix(gen_timeseries(M), gen_mixing(3, 3, 1, o.lo, o.hi, o.seeds.front()));
      const auto sp = build_sample_space(3, 3, M, 1);
      const auto emp = empirical_distribution(sp, X, NormScheme::MinMax);
      FitConfig c;
      c.method = parse_method(opt);
      c.max_iter = o.scaling_iters;
      c.tol = 0.0;
      c.record_trace = false;
      const auto t0 = Clock::now();
      const auto r = fit(sp, emp, c);
      const double total = seconds_since(t0);
      const double per = total / static_cast<double>(std::max<std::size_t>(r.report.iterations, 1));
      xs.push_back(static_cast<double>(M));
      ys.push_back(per);
      Row row;
      row.add("optimizer", opt);
      row.add("samples", M);
      row.add("states", sp.size());
      row.add("iterations", r.report.iterations);
      row.add("seconds_total", total);
      row.add("seconds_per_iteration", per);
      row.add("seconds_evaluate", r.report.times.evaluate);
      row.add("seconds_fisher", r.report.times.fisher);
      row.add("seconds_solve", r.report.times.solve);
      rows.push_back(std::move(row));
    }
    const LinearFit f = fit_line(xs, ys);
    extra["linear_fit"][opt] = {{"intercept", f.intercept}, {"slope", f.slope}, {"r2", f.r2}};
  }
}

inline int cmd_benchmark(const BenchmarkOptions& o, RunManifest& man, std::ostream& log) {
  if (o.seeds.empty()) throw UsageError("--seeds must list at least one seed");
  for (auto k : o.orders)
    if (k < 1 || k > 3) throw UsageError("--orders entries must be 1, 2 or 3");
  for (const auto& n : o.norms) parse_norm_scheme(n);
  for (const auto& m : o.optimizers) parse_method(m);
  const std::size_t threads = benchmark_threads();

  const auto t0 = Clock::now();
  std::vector<Row> rows;
  json extra = json::object();
  if (o.preset == "timeseries")
    benchmark_timeseries(o, threads, rows, extra);
  else
    benchmark_scaling(o, rows, extra);
  man.timing["benchmark"] = seconds_since(t0);
  man.timing["threads"] = threads;
  man.flags = {{"preset", o.preset}, {"orders", o.orders}, {"norms", o.norms},     {"sizes", o.sizes},
               {"optimizers", o.optimizers}, {"samples", o.samples}, {"scaling_iters", o.scaling_iters},
               {"lo", o.lo},         {"hi", o.hi}};
  man.seeds["mixing"] = o.seeds;

  const fs::path dir(o.outdir);
  write_text(dir / "table.csv", table_csv(rows));
  json j;
  j["preset"] = o.preset;
  j["rows"] = table_json(rows);
  for (auto& [k, v] : extra.items()) j[k] = v;
  write_json(dir / "table.json", j);
  man.outputs = {(dir / "table.csv").string(), (dir / "table.json").string()};
  write_json(dir / "manifest.json", man.to_json());
  log << table_csv(rows);
  return kOk;
}

// ---------------------------------------------------------------------------
// entry point

template <class T>
std::vector<T> parse_list(const std::string& s, const char* flag) {
  std::vector<T> out;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (tok.empty()) continue;
    if constexpr (std::is_same_v<T, std::string>) {
      out.push_back(tok);
    } else {
      T v{};
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw UsageError(std::string(flag) + ": cannot parse '" + tok + "'");
      out.push_back(v);
    }
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

inline int run_replay(const std::string& manifest, const std::string& output, std::ostream& out,
                      std::ostream& err) {
  const json j = read_json(manifest);
  std::vector<std::string> argv;
  try {
    argv = j.at("argv").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataFormatError(manifest + ": " + e.what());
  }
  if (argv.size() < 2) throw DataFormatError(manifest + ": argv is empty");
  if (argv[1] == "replay") throw DataFormatError(manifest + ": refusing to replay a replay");
  if (!output.empty()) {
    bool replaced = false;
    for (std::size_t i = 1; i + 1 < argv.size(); ++i)
      if (argv[i] == "-o" || argv[i] == "--output") {
        argv[i + 1] = output;
        replaced = true;
      }
    if (!replaced) throw UsageError("manifest has no -o/--output flag to redirect");
  }
  return run(argv, out, err);
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Blind source separation on a log-linear model over a partially ordered sample space", "igbss"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic source fixture");
  g->add_option("kind", gen.kind, "timeseries or pointcloud")->required()->check(CLI::IsMember({"timeseries", "pointcloud"}));
  g->add_option("--samples", gen.samples, "Samples per time series")->check(CLI::Range(2, 1 << 24));
  g->add_option("--count", gen.count, "Points in the point cloud")->check(CLI::Range(2, 1 << 24));
  g->add_option("--seed", gen.seed, "Random seed (recorded; the time series is deterministic)");
  g->add_option("-o,--output", gen.output, "Output CSV")->required();

  MixOptions mx;
  auto* m = app.add_subcommand("mix", "Mix source signals with a polynomial mixing model");
  m->add_option("--sources", mx.sources, "Source CSV (N x M)")->required();
  auto* spec_opt = m->add_option("--spec", mx.spec, "Mixing spec JSON (overrides the random draw)");
  m->add_option("--order", mx.order, "Maximum interaction order k")->excludes(spec_opt);
  m->add_option("--rows", mx.rows, "Number of mixed signals L (default: N)")->excludes(spec_opt);
  m->add_option("--lo", mx.lo, "Lower coefficient bound")->excludes(spec_opt);
  m->add_option("--hi", mx.hi, "Upper coefficient bound")->excludes(spec_opt);
  m->add_option("--seed", mx.seed, "Coefficient seed")->excludes(spec_opt);
  m->add_option("-o,--output", mx.output, "Output CSV")->required();

  SeparateOptions sep;
  auto* s = app.add_subcommand("separate", "Recover sources from mixed signals");
  s->add_option("--input", sep.input, "Mixed CSV (L x M)")->required();
  s->add_option("--sources", sep.sources, "Number of sources N")->required()->check(CLI::PositiveNumber);
  s->add_option("--order", sep.order, "Maximum interaction order k")->check(CLI::PositiveNumber);
  s->add_option("--norm", sep.norm, "Normalization: sum, minmax or exp")
      ->check(CLI::IsMember({"sum", "minmax", "exp"}));
  s->add_option("--epsilon", sep.epsilon, "Offset for minmax (default: 1e-3 of the data range)")
      ->check(CLI::PositiveNumber);
  s->add_option("--optimizer", sep.optimizer, "gd or ng")->check(CLI::IsMember({"gd", "ng"}));
  s->add_option("--lr", sep.lr, "Step size")->check(CLI::PositiveNumber);
  s->add_option("--tol", sep.tol, "Stop when max |eta - eta_hat| <= tol")->check(CLI::NonNegativeNumber);
  s->add_option("--max-iter", sep.max_iter, "Iteration budget (0: 100000 for gd, 1000 for ng)");
  s->add_option("--init", sep.init, "zeros or random")->check(CLI::IsMember({"zeros", "random"}));
  s->add_option("--sigma", sep.sigma, "Standard deviation of the random init")->check(CLI::PositiveNumber);
  s->add_option("--seed", sep.seed, "Seed of the random init");
  s->add_option("-o,--output", sep.outdir, "Output directory")->required();

  EvaluateOptions ev;
  auto* e = app.add_subcommand("evaluate", "Score recovered signals against the truth");
  e->add_option("--recovered", ev.recovered, "Recovered CSV")->required();
  e->add_option("--truth", ev.truth, "Ground-truth CSV")->required();
  e->add_flag("--allow-sign", ev.allow_sign, "Also search over per-signal sign flips");
  e->add_option("--scaling", ev.scaling, "Per-signal rescaling before scoring: minmax or zscore")
      ->check(CLI::IsMember({"minmax", "zscore"}));
  e->add_option("-o,--output", ev.output, "Metrics JSON (default: stdout)");

  BenchmarkOptions bm;
  std::string orders = "1,2,3", seeds = "1", norms = "minmax,exp", sizes = "100,200,400,800", opts = "gd,ng";
  auto* b = app.add_subcommand("benchmark", "Run a preset experiment grid");
  b->add_option("--preset", bm.preset, "timeseries or scaling")->check(CLI::IsMember({"timeseries", "scaling"}));
  b->add_option("--orders", orders, "Comma-separated mixing orders");
  b->add_option("--seeds", seeds, "Comma-separated mixing seeds");
  b->add_option("--norms", norms, "Comma-separated normalizations (timeseries preset)");
  b->add_option("--samples", bm.samples, "Samples per signal (timeseries preset)")->check(CLI::Range(2, 1 << 20));
  b->add_option("--sizes", sizes, "Comma-separated sample counts (scaling preset)");
  b->add_option("--optimizers", opts, "Comma-separated optimizers (scaling preset)");
  b->add_option("--iterations", bm.scaling_iters, "Timed iterations per run (scaling preset)")
      ->check(CLI::PositiveNumber);
  b->add_option("-o,--output", bm.outdir, "Output directory")->required();

  std::string replay_manifest, replay_output;
  auto* r = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  r->add_option("manifest", replay_manifest, "Manifest JSON")->required();
  r->add_option("-o,--output", replay_output, "Redirect the recorded output path");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kOk : kUsage;
  }

  RunManifest man;
  man.argv = args;
  try {
    if (*g) {
      man.command = "generate";
      return cmd_generate(gen, man, out);
    }
    if (*m) {
      man.command = "mix";
      return cmd_mix(mx, man, out);
    }
    if (*s) {
      man.command = "separate";
      if (sep.order > sep.sources) throw UsageError("--order must not exceed --sources");
      if (sep.init == "random" && !s->count("--seed")) throw UsageError("--init random requires --seed");
      return cmd_separate(sep, man, out);
    }
    if (*e) {
      man.command = "evaluate";
      return cmd_evaluate(ev, man, out);
    }
    if (*b) {
      man.command = "benchmark";
      bm.orders = parse_list<std::size_t>(orders, "--orders");
      bm.seeds = parse_list<std::uint64_t>(seeds, "--seeds");
      bm.norms = parse_list<std::string>(norms, "--norms");
      bm.sizes = parse_list<std::size_t>(sizes, "--sizes");
      bm.optimizers = parse_list<std::string>(opts, "--optimizers");
      for (auto M : bm.sizes)
        if (M < 2) throw UsageError("--sizes entries must be at least 2");
      return cmd_benchmark(bm, man, out);
    }
    return run_replay(replay_manifest, replay_output, out, err);
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << "\n";
    return kUsage;
  } catch (const DataFormatError& ex) {
    err << "data format error: " << ex.what() << "\n";
    return kDataFormat;
  } catch (const DataError& ex) {
    err << "data error: " << ex.what() << "\n";
    return kDataFormat;
  } catch (const IoError& ex) {
    err << "i/o error: " << ex.what() << "\n";
    return kIoError;
  } catch (const NumericalError& ex) {
    err << "numerical error: " << ex.what() << "\n";
    return kNotConverged;
  } catch (const std::invalid_argument& ex) {
    err << "usage error: " << ex.what() << "\n";
    return kUsage;
  }
}

}  // namespace igbss::cli
