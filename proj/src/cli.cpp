#include "klsplit/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <thread>

#include "klsplit/descent_monitor.hpp"
#include "klsplit/errors.hpp"
#include "klsplit/io.hpp"
#include "klsplit/lm_newton.hpp"
#include "klsplit/metric_ops.hpp"

namespace klsplit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// config helpers

double num(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ConfigError(std::string("config: '") + key + "' must be a number");
  return j.at(key).get<double>();
}

double need_num(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("config: " + where + " needs '" + key + "'");
  return num(j, key, 0.0);
}

std::size_t count(const json& j, const char* key, std::size_t fallback) {
  const double v = num(j, key, static_cast<double>(fallback));
  if (v < 0 || v != std::floor(v)) throw ConfigError(std::string("config: '") + key + "' must be a nonnegative integer");
  return static_cast<std::size_t>(v);
}

Vector vec(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError("config: " + what + " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError("config: " + what + " must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Matrix mat(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw ConfigError("config: " + what + " must be a nonempty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix M(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Vector row = vec(j[i], what);
    if (static_cast<std::size_t>(row.size()) != cols) throw ConfigError("config: " + what + " has ragged rows");
    M.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return M;
}

std::string str(const json& j, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) throw ConfigError(std::string("config: '") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw ConfigError(std::string("config: '") + key + "' must be an object");
  return j.at(key);
}


// ---------------------------------------------------------------------------
// exit-code mapping

int classify(std::exception_ptr ep, std::ostream& log) {
  try {
    std::rethrow_exception(ep);
  } catch (const ScheduleError& e) {
    log << "schedule error: " << e.what() << " (first bad k = " << e.first_bad_k() << ")\n";
    return kScheduleError;
  } catch (const ParameterError& e) {
    log << "schedule error: " << e.what() << '\n';
    return kScheduleError;
  } catch (const DivergenceError& e) {
    log << "divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const InsufficientDataError& e) {
    log << "insufficient data: " << e.what() << '\n';
    return kInsufficientData;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const SchemaError& e) {
    log << "schema error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    log << "data error: " << e.what() << '\n';
    return kConfigError;
  } catch (const json::exception& e) {
    log << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kConfigError;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setw(2) << j << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// problem construction

BlockVector perturbed_truth(const DecompositionInstance& inst, double radius, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto perturb = [&](const Matrix& M) {
    Matrix E(M.rows(), M.cols());
    for (Eigen::Index i = 0; i < E.size(); ++i) E.data()[i] = normal(rng);
    const double scale = M.norm() > 0.0 ? M.norm() : 1.0;
    return Matrix(M + (radius * scale / E.norm()) * E);
  };
  return pack_pair(perturb(*inst.X_true), perturb(*inst.Y_true));
}

SmoothProblem smooth_from_block(const BlockProblem& P) {
  if (P.p() != 1) throw ConfigError("lm solver needs a single-block problem");
  SmoothProblem S;
  S.dim = P.dims[0];
  S.h = [h = P.h_eval](const Vector& x) { return h(BlockVector{x}); };
  S.grad = [g = P.h_grad_block](const Vector& x) { return g(0, BlockVector{x}); };
  S.L = P.L;
  S.constraint = P.g[0];
  return S;
}

std::vector<double> block_steps(const json& sched, std::size_t p, const std::string& solver) {
  if (sched.contains("steps")) {
    const Vector s = vec(sched.at("steps"), "schedule.steps");
    if (static_cast<std::size_t>(s.size()) != p) throw ConfigError("config: schedule.steps needs one entry per block");
    return {s.data(), s.data() + s.size()};
  }
  if (solver == "aapm" || (p == 2 && sched.contains("lambda"))) {
    return {num(sched, "lambda", 0.5), num(sched, "mu", 0.5)};
  }
  return std::vector<double>(p, need_num(sched, "step", "schedule"));
}

}  // namespace

// ---------------------------------------------------------------------------

fs::path output_dir(const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("OUTPUT_DIR"); env && *env) return env;
  return fallback.empty() ? "." : fallback;
}

Experiment parse_experiment(const json& config, const std::string& stem) {
  if (!config.is_object()) throw ConfigError("config: top level must be an object");
  Experiment e;
  e.config = config;
  e.stem = stem;
  if (!config.contains("seed") || !config.at("seed").is_number_integer())
    throw ConfigError("config: an integer 'seed' is mandatory");
  e.seed = config.at("seed").get<std::uint64_t>();

  const json& prob = section(config, "problem");
  e.problem_type = str(prob, "type", "");
  if (e.problem_type.empty()) throw ConfigError("config: problem.type is required");

  const std::string default_solver = e.problem_type == "abs"             ? "proximal_point"
                                     : e.problem_type == "decomposition" ? "aapm"
                                                                         : "afb";
  e.solver = str(config, "solver", default_solver);
  static const std::vector<std::string> solvers = {"afb", "afbe", "lm", "proximal_point", "aapm"};
  if (std::find(solvers.begin(), solvers.end(), e.solver) == solvers.end())
    throw ConfigError("config: unknown solver '" + e.solver + "'");

  const json& stop = section(config, "stop");
  e.stop.step_tol = num(stop, "step_tol", e.stop.step_tol);
  e.stop.slope_tol = num(stop, "slope_tol", e.stop.slope_tol);
  e.stop.max_iter = count(stop, "max_iter", e.stop.max_iter);
  e.certificate_tol = num(stop, "certificate_tol", e.certificate_tol);

  const json& sched = section(config, "schedule");
  e.options.override_hp = sched.value("override_hp", false);

  auto need_x0 = [&]() {
    if (!config.contains("x0")) throw ConfigError("config: 'x0' is required for problem " + e.problem_type);
    return vec(config.at("x0"), "x0");
  };

  if (e.problem_type == "power_potential") {
    const Vector x0 = need_x0();
    const double q = need_num(prob, "q", "problem");
    const double radius = num(prob, "radius", x0.norm() > 0.0 ? x0.norm() : 1.0);
    const auto mode = e.solver == "proximal_point" ? PotentialMode::Proximal : PotentialMode::Gradient;
    e.problem = make_power_potential(q, x0.size(), radius, mode);
    e.x0 = BlockVector{x0};
  } else if (e.problem_type == "abs") {
    const Vector x0 = need_x0();
    if (x0.size() != 1) throw ConfigError("config: the abs problem is scalar");
    e.problem = make_abs_prox_problem(need_num(sched, "step", "schedule")).problem;
    e.x0 = BlockVector{x0};
  } else if (e.problem_type == "quadratic") {
    const Matrix Q = mat(prob.at("Q"), "problem.Q");
    const Vector b = vec(prob.at("b"), "problem.b");
    std::optional<std::pair<Matrix, Vector>> C;
    if (prob.contains("B")) C = std::make_pair(mat(prob.at("B"), "problem.B"), vec(prob.at("c"), "problem.c"));
    const QuadraticProblem qp = make_quadratic(Q, b, C);
    e.problem = qp.problem;
    e.smooth = qp.smooth;
    e.x0 = BlockVector{need_x0()};
    if (e.x0[0].size() != Q.rows()) throw ConfigError("config: x0 does not match Q");
  } else if (e.problem_type == "double_well") {
    const Vector x0 = need_x0();
    const SmoothProblem dw = make_double_well(num(prob, "radius", std::sqrt(7.0 / 3.0)));
    e.smooth = dw;
    e.problem.dims = {1};
    e.problem.h_eval = [h = dw.h](const BlockVector& X) { return h(X[0]); };
    e.problem.h_grad_block = [g = dw.grad](std::size_t, const BlockVector& X) { return g(X[0]); };
    e.problem.L = dw.L;
    e.problem.g = {ProxOracle::zero()};
    e.x0 = BlockVector{x0};
  } else if (e.problem_type == "decomposition") {
    DecompositionInstance inst;
    if (prob.contains("matrix_file")) {
      inst = read_instance(str(prob, "matrix_file", ""));
    } else {
      inst = generate_decomposition(static_cast<Eigen::Index>(count(prob, "m", 20)),
                                    static_cast<Eigen::Index>(count(prob, "n", 20)),
                                    static_cast<Eigen::Index>(count(prob, "r", 2)), count(prob, "s", 10),
                                    num(prob, "gap", 10.0), static_cast<std::uint64_t>(count(prob, "seed", e.seed)));
    }
    e.problem = make_decomposition_problem(inst);
    const json& init = section(prob, "init");
    const std::string kind = str(init, "kind", inst.X_true ? "perturbed_truth" : "zero");
    if (kind == "perturbed_truth") {
      if (!inst.X_true) throw ConfigError("config: perturbed_truth init needs a planted instance");
      e.x0 = perturbed_truth(inst, num(init, "perturbation", 1e-3), e.seed);
    } else if (kind == "zero") {
      e.x0 = BlockVector::zeros(e.problem.dims);
    } else {
      throw ConfigError("config: unknown init kind '" + kind + "'");
    }
    e.instance = std::move(inst);
  } else {
    throw ConfigError("config: unknown problem type '" + e.problem_type + "'");
  }

  if (e.solver == "aapm" && e.problem_type != "decomposition")
    throw ConfigError("config: the aapm solver needs a decomposition problem");

  if (e.solver == "lm") {
    if (!e.smooth) e.smooth = smooth_from_block(e.problem);
    const json& lmj = section(config, "lm");
    LmConfig lm;
    lm.epsilon = num(lmj, "epsilon", 1e-3);
    lm.pure_newton = lmj.value("pure_newton", false);
    if (!lm.pure_newton) {
      const double lam = need_num(lmj, "lambda", "lm");
      lm.lambda = [lam](std::size_t) { return lam; };
    }
    const std::string hmode = str(lmj, "hessian", "fd");
    if (hmode == "fd") {
      lm.hessian = HessianMode::finite_difference(num(lmj, "h_fd", 0.0));
    } else if (hmode == "analytic") {
      if (e.problem_type != "quadratic") throw ConfigError("config: analytic Hessian only for quadratic problems");
      const Matrix Q = mat(prob.at("Q"), "problem.Q");
      lm.hessian = HessianMode::analytic([Q](const Vector&) { return Q; });
    } else {
      throw ConfigError("config: unknown lm.hessian '" + hmode + "'");
    }
    e.lm = lm;
  } else {
    const std::vector<double> steps = block_steps(sched, e.problem.p(), e.solver);
    std::vector<double> scales;
    for (double s : steps) {
      if (!(s > 0.0)) throw ConfigError("config: step sizes must be positive");
      scales.push_back(1.0 / s);
    }
    e.metrics = MetricSchedule::per_block(e.problem.dims, scales);
  }

  if (e.solver == "afbe") {
    const json& err = section(config, "errors");
    const double mu0 = num(err, "mu0", 0.0);
    const double ratio = num(err, "mu_ratio", 0.5);
    e.errors = ErrorModel::random(need_num(err, "sigma", "errors"), need_num(err, "rho", "errors"),
                                  [mu0, ratio](std::size_t k) { return mu0 * std::pow(ratio, static_cast<double>(k)); },
                                  static_cast<std::uint64_t>(count(err, "seed", e.seed)));
  }

  if (config.contains("kl")) {
    const json& kl = section(config, "kl");
    const double eta = num(kl, "eta", kUnboundedEta);
    e.kl = Desingularizer::power(need_num(kl, "C", "kl"), need_num(kl, "theta", "kl"), eta);
    if (kl.contains("x_star")) {
      KLRegion reg;
      reg.x_star = vec(kl.at("x_star"), "kl.x_star");
      if (reg.x_star.size() != e.x0.total_dim()) throw ConfigError("config: kl.x_star has the wrong size");
      reg.f_star = num(kl, "f_star", 0.0);
      reg.delta = num(kl, "delta", 1.0);
      reg.eta = eta;
      reg.strict = false;
      e.region = reg;
    }
  }
  return e;
}

Experiment load_experiment(const fs::path& path) {
  return parse_experiment(read_json(path), path.stem().string());
}

Outcome execute(const Experiment& e) {
  Outcome out;
  json hp_json;
  if (e.solver == "lm") {
    out.trace = run_lm(*e.smooth, *e.lm, e.stop, e.x0[0], e.options);
  } else {
    // schedule checks on the declared (constant) metrics before iterating
    const std::size_t horizon = std::max<std::size_t>(2, std::min<std::size_t>(e.stop.max_iter + 1, 200));
    std::vector<double> alphas, betas;
    const AfbState s0 = AfbState::at(e.x0);
    for (std::size_t k = 0; k < horizon; ++k) {
      double a = std::numeric_limits<double>::infinity(), b = 0.0;
      for (std::size_t i = 0; i < e.problem.p(); ++i) {
        const SpdOperator A = e.metrics.provider(i, k, s0);
        a = std::min(a, A.alpha());
        b = std::max(b, A.beta());
      }
      alphas.push_back(a);
      betas.push_back(b);
    }
    const HPReport hp = hp_check(alphas, betas, e.problem.L, horizon);
    hp_json = hp;
    if (!hp.hard_pass() && !e.options.override_hp) {
      std::ostringstream msg;
      if (hp.hp1 != Verdict::Pass)
        msg << "HP1 violated: alpha_k = " << hp.min_alpha << " <= L = " << e.problem.L << " at k=" << hp.min_alpha_index;
      else
        msg << "HP3 violated: beta_k/alpha_{k+1} = " << hp.max_ratio << " at k=" << hp.max_ratio_index;
      throw ScheduleError(msg.str(), hp.hp1 != Verdict::Pass ? hp.min_alpha_index : hp.max_ratio_index);
    }
    out.trace = run(e.problem, e.metrics, e.errors, e.stop, e.x0, e.options);
  }
  if (e.region) flag_region(out.trace, *e.region);

  const IterateRecord& last = out.trace.back();
  json summary = {{"problem", e.problem_type},
                  {"solver", e.solver},
                  {"seed", e.seed},
                  {"status", to_string(out.trace.status)},
                  {"iterations", out.trace.size() - 1},
                  {"final_value", last.f_val},
                  {"final_slope", last.slope_norm ? json(*last.slope_norm) : json(nullptr)},
                  {"certificate", criticality_certificate(out.trace, e.certificate_tol)},
                  {"log", out.trace.log}};
  if (!hp_json.is_null()) summary["hp"] = hp_json;
  if (e.errors.enabled) summary["he"] = he_check(out.trace.he, e.errors.sigma, e.errors.rho);
  if (e.instance && last.x) {
    const auto [X, Y] = unpack_pair(*last.x, e.instance->rows(), e.instance->cols());
    summary["recovery"] = recovery_report(*e.instance, X, Y);
  }
  out.summary = std::move(summary);
  return out;
}

// ---------------------------------------------------------------------------
// commands

namespace {

int run_one(const std::string& config_path, const RunArgs& args, std::ostream& log) {
  try {
    json cfg = read_json(config_path);
    if (args.force_solver) cfg["solver"] = *args.force_solver;
    const Experiment e = parse_experiment(cfg, fs::path(config_path).stem().string());
    const json& outj = section(cfg, "output");
    const fs::path dir = output_dir(args.out, str(outj, "dir", "."));
    const fs::path trace_path = dir / str(outj, "trace", e.stem + "_trace.csv");
    const fs::path summary_path = dir / str(outj, "summary", e.stem + "_summary.json");

    Outcome o;
    try {
      o = execute(e);
    } catch (const DivergenceError& d) {
      write_trace_csv(trace_path, d.partial());
      throw;
    }
    write_trace_csv(trace_path, o.trace);
    if (args.dump_iterates) {
      fs::path it = trace_path;
      it.replace_extension(".iterates.csv");
      write_iterates_csv(it, o.trace);
      o.summary["iterates"] = it.string();
    }
    if (e.instance && o.trace.back().x) {
      const auto [X, Y] = unpack_pair(*o.trace.back().x, e.instance->rows(), e.instance->cols());
      write_matrix_csv(dir / (e.stem + "_X.csv"), X);
      write_matrix_csv(dir / (e.stem + "_Y.csv"), Y);
    }
    o.summary["trace"] = trace_path.string();
    write_json(summary_path, o.summary);
    log << config_path << ": " << o.summary["status"].get<std::string>() << " after "
        << o.summary["iterations"].get<std::size_t>() << " iterations, f = " << format_double(o.trace.back().f_val)
        << '\n';
    return kOk;
  } catch (...) {
    log << config_path << ": ";
    return classify(std::current_exception(), log);
  }
}

std::vector<double> column(const IterateTrace& t, std::optional<double> IterateRecord::*field) {
  std::vector<double> out;
  out.reserve(t.size());
  for (const auto& r : t.records) out.push_back((r.*field).value_or(std::numeric_limits<double>::quiet_NaN()));
  return out;
}

bool has_schedule(const IterateTrace& t) {
  return t.size() >= 2 && t.records[0].a && t.records[1].b;
}

}  // namespace

int cmd_run(const RunArgs& args, std::ostream& log) {
  if (args.configs.empty()) {
    log << "config error: no --config given\n";
    return kConfigError;
  }
  const std::size_t n = args.configs.size();
  std::vector<int> codes(n, kOk);
  std::vector<std::string> logs(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < n; i = next++) {
      std::ostringstream os;
      codes[i] = run_one(args.configs[i], args, os);
      logs[i] = os.str();
    }
  };
  const int jobs = std::max(1, std::min<int>(args.jobs, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& l : logs) log << l;
  return *std::max_element(codes.begin(), codes.end());
}

int cmd_lm(RunArgs args, std::ostream& log) {
  args.force_solver = "lm";
  return cmd_run(args, log);
}

int cmd_monitor(const MonitorArgs& args, std::ostream& log) {
  try {
    const IterateTrace trace = read_trace_csv(fs::path(args.trace));
    json rep;
    const CheckReport h1 = check_H1(trace);
    const CheckReport h2 = args.h2prime ? check_H2prime(trace) : check_H2(trace);
    rep["H1"] = h1;
    rep[args.h2prime ? "H2prime" : "H2"] = h2;
    bool hard = h1.passed() && h2.passed();

    std::vector<double> a, b, eps;
    for (std::size_t k = 1; k + 1 < trace.size(); ++k) {
      const auto& r = trace.records[k];
      if (!r.a || !r.b) continue;
      a.push_back(*r.a);
      b.push_back(*r.b);
      eps.push_back(r.eps.value_or(0.0));
    }
    if (!a.empty()) {
      const CheckReport h3 = check_H3(a, b, eps, a.size());
      rep["H3"] = h3;
      hard = hard && h3.details["H3_i"] == "pass" && h3.details["H3_iii"] == "pass";
    } else {
      rep["H3"] = {{"verdict", "inconclusive"}, {"reason", "trace carries no schedule"}};
    }

    const bool flagged = std::any_of(trace.records.begin(), trace.records.end(),
                                     [](const IterateRecord& r) { return r.region_flag.has_value(); });
    if (args.kl_C && args.kl_theta && args.f_star && flagged) {
      const Desingularizer d = Desingularizer::power(*args.kl_C, *args.kl_theta, args.kl_eta.value_or(kUnboundedEta));
      const CheckReport l = check_step_bound(trace, d, *args.f_star, args.M.value_or(0.0));
      rep["step_bound"] = l;
      hard = hard && l.passed();
    }
    rep["hard_pass"] = hard;
    if (args.out.empty()) {
      log << std::setw(2) << rep << '\n';
    } else {
      write_json(args.out, rep);
    }
    log << "monitor: H1 " << to_string(h1.verdict) << ", " << h2.name << ' ' << to_string(h2.verdict) << " -> "
        << (hard ? "pass" : "fail") << '\n';
    return hard ? kOk : kCheckFailed;
  } catch (...) {
    return classify(std::current_exception(), log);
  }
}

int cmd_rates(const RatesArgs& args, std::ostream& log) {
  try {
    IterateTrace trace = read_trace_csv(fs::path(args.trace));
    if (trace.empty()) throw InsufficientDataError("rates: empty trace");
    const std::size_t n = trace.size();

    std::vector<double> r(n);
    for (std::size_t k = 0; k < n; ++k) {
      r[k] = trace.records[k].f_val - args.f_star;
      if (r[k] < 0.0) throw DataError("rates: f_val below f_star at k=" + std::to_string(trace.records[k].k));
    }
    const bool sched = has_schedule(trace);
    std::vector<double> b_fit = args.use_schedule && sched ? column(trace, &IterateRecord::b) : std::vector<double>(n, 1.0);
    if (args.use_schedule && sched) b_fit[0] = 0.0;

    const Desingularizer d = Desingularizer::power(args.kl_C, args.kl_theta, args.kl_eta.value_or(kUnboundedEta));
    const std::vector<double> a_pred = sched ? column(trace, &IterateRecord::a) : std::vector<double>(n, 1.0);
    const std::vector<double> b_pred = sched ? column(trace, &IterateRecord::b) : std::vector<double>(n, 1.0);
    const std::vector<double> eps = sched ? column(trace, &IterateRecord::eps) : std::vector<double>{};
    const RatePrediction pred = predict_rates(d, a_pred, b_pred, args.h2prime, eps);
    const RateFit fit = fit_rates(r, b_fit, args.tail_fraction);

    json rep = {{"prediction", pred},
                {"fit", fit},
                {"schedule", sched ? "trace" : "unit"},
                {"fit_variable", args.use_schedule && sched ? "sum_b" : "iteration"}};
    json agreement;
    using Regime = RatePrediction::Regime;
    if (pred.status != RatePrediction::Status::Ok) {
      agreement = {{"comparable", false}};
    } else if (pred.regime == Regime::FiniteTermination) {
      agreement = {{"comparable", true}, {"agree", fit.finite_termination}};
    } else if (fit.finite_termination) {
      agreement = {{"comparable", true}, {"agree", false}, {"observed", "finite_termination"}};
    } else if (pred.regime == Regime::Polynomial) {
      const double rel = std::abs(fit.poly_slope - pred.exponent_values) / std::abs(pred.exponent_values);
      agreement = {{"comparable", true},
                   {"agree", rel <= 0.2 && fit.chosen == RateFit::Model::Polynomial},
                   {"relative_exponent_error", rel}};
    } else if (pred.regime == Regime::Exponential) {
      agreement = {{"comparable", true},
                   {"agree", fit.chosen == RateFit::Model::Exponential},
                   {"fitted_rate_over_c", pred.c > 0.0 ? -fit.exp_slope / pred.c : 0.0}};
    } else {
      agreement = {{"comparable", false}};
    }

    if (args.iterates && !args.x_star.empty()) {
      read_iterates_csv(*args.iterates, trace);
      const Vector xs = Eigen::Map<const Vector>(args.x_star.data(), static_cast<Eigen::Index>(args.x_star.size()));
      std::vector<double> dist;
      for (const auto& rec : trace.records) {
        if (!rec.x) throw DataError("rates: iterates file does not cover every record");
        if (rec.x->total_dim() != xs.size()) throw DataError("rates: x_star has the wrong size");
        dist.push_back((rec.x->flatten() - xs).norm());
      }
      if (!fit.finite_termination) {
        const RateFit it = fit_rates(dist, b_fit, args.tail_fraction);
        rep["iterates_fit"] = it;
        if (pred.status == RatePrediction::Status::Ok && pred.regime == Regime::Polynomial)
          agreement["relative_iterates_exponent_error"] =
              std::abs(it.poly_slope - pred.exponent_iterates) / std::abs(pred.exponent_iterates);
      }
      rep["distance_gap"] = distance_gap_diagnostic(trace, d, BlockVector{xs}, args.f_star);
    }
    rep["agreement"] = agreement;

    if (args.plot_dir) {
      std::vector<double> ks, logS, vals;
      double S = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        S += std::isfinite(b_fit[k]) ? b_fit[k] : 0.0;
        if (!(r[k] > 0.0) || !(S > 0.0)) continue;
        ks.push_back(static_cast<double>(trace.records[k].k));
        logS.push_back(std::log10(S));
        vals.push_back(r[k]);
      }
      const fs::path dir(*args.plot_dir);
      write_svg_plot(dir / "value_vs_k.svg", "f(x_k) - f*", "k", ks, vals);
      write_svg_plot(dir / "value_vs_log_sum_b.svg", "f(x_k) - f*", "log10 sum b", logS, vals);
    }

    if (args.out.empty()) {
      log << std::setw(2) << rep << '\n';
    } else {
      write_json(args.out, rep);
    }
    log << "rates: predicted " << to_string(pred.regime) << ", fitted " << to_string(fit.chosen) << '\n';
    return kOk;
  } catch (...) {
    return classify(std::current_exception(), log);
  }
}

int cmd_decompose(const DecomposeArgs& args, std::ostream& log) {
  try {
    json cfg;
    if (args.config) {
      cfg = read_json(*args.config);
    } else {
      json prob = {{"type", "decomposition"}};
      if (args.matrix) {
        prob["matrix_file"] = *args.matrix;
      } else {
        prob.update({{"m", args.m}, {"n", args.n}, {"r", args.r}, {"s", args.s}, {"gap", args.gap}});
      }
      prob["init"] = {{"perturbation", args.perturbation}};
      cfg = {{"seed", args.seed},
             {"problem", prob},
             {"solver", "aapm"},
             {"schedule", {{"lambda", args.lambda}, {"mu", args.mu}}},
             {"stop", {{"max_iter", args.max_iter}}}};
    }
    const Experiment e = parse_experiment(cfg, "decompose");
    if (!e.instance) throw ConfigError("decompose: the config must describe a decomposition problem");
    const Outcome o = execute(e);
    const fs::path dir = output_dir(args.out, str(section(cfg, "output"), "dir", "."));
    const auto [X, Y] = unpack_pair(*o.trace.back().x, e.instance->rows(), e.instance->cols());
    write_matrix_csv(dir / "X.csv", X);
    write_matrix_csv(dir / "Y.csv", Y);
    write_trace_csv(dir / "trace.csv", o.trace);
    if (args.dump_iterates) write_iterates_csv(dir / "trace.iterates.csv", o.trace);
    const RecoveryMetrics rm = recovery_report(*e.instance, X, Y);
    json rep = {{"recovery", rm},
                {"status", to_string(o.trace.status)},
                {"iterations", o.trace.size() - 1},
                {"final_value", o.trace.back().f_val}};
    write_json(dir / "recovery.json", rep);
    log << "decompose: " << to_string(o.trace.status) << " after " << o.trace.size() - 1
        << " iterations, residual " << format_double(rm.residual) << '\n';
    return kOk;
  } catch (...) {
    return classify(std::current_exception(), log);
  }
}

// ---------------------------------------------------------------------------

void write_svg_plot(const fs::path& path, const std::string& title, const std::string& xlabel,
                    const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("plot: x and y differ in length");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());

  constexpr double W = 640, H = 400, ml = 70, mr = 20, mt = 30, mb = 50;
  std::vector<double> ly;
  for (double v : y) ly.push_back(std::log10(v));
  auto [xmin_it, xmax_it] = std::minmax_element(x.begin(), x.end());
  auto [ymin_it, ymax_it] = std::minmax_element(ly.begin(), ly.end());
  const double xmin = x.empty() ? 0 : *xmin_it, xmax = x.empty() ? 1 : *xmax_it;
  const double ymin = ly.empty() ? 0 : *ymin_it, ymax = ly.empty() ? 1 : *ymax_it;
  const double xs = xmax > xmin ? (W - ml - mr) / (xmax - xmin) : 1.0;
  const double ys = ymax > ymin ? (H - mt - mb) / (ymax - ymin) : 1.0;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
      << " (log10)</text>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel
      << "</text>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << ml - 5 << "\" y=\"" << mt + 4 << "\" text-anchor=\"end\" font-size=\"10\">"
      << std::setprecision(3) << ymax << "</text>\n";
  out << "<text x=\"" << ml - 5 << "\" y=\"" << H - mb << "\" text-anchor=\"end\" font-size=\"10\">" << ymin
      << "</text>\n";
  out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
  out << std::setprecision(6);
  for (std::size_t i = 0; i < x.size(); ++i)
    out << ml + (x[i] - xmin) * xs << ',' << H - mb - (ly[i] - ymin) * ys << ' ';
  out << "\"/>\n</svg>\n";
}

}  // namespace klsplit::cli
