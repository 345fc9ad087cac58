#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "klsplit/afb_engine.hpp"
#include "klsplit/kl_core.hpp"
#include "klsplit/problems.hpp"
#include "klsplit/trace.hpp"

namespace klsplit::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kConfigError = 2,
  kScheduleError = 3,
  kDivergence = 4,
  kInsufficientData = 5,
};

/// A parsed and validated experiment description.
struct Experiment {
  nlohmann::json config;
  std::string problem_type;
  std::string solver;
  std::uint64_t seed = 0;

  BlockProblem problem;
  MetricSchedule metrics;
  ErrorModel errors;
  StoppingRule stop;
  RunOptions options;
  BlockVector x0;
  double certificate_tol = 1e-8;

  // lm solver
  std::optional<SmoothProblem> smooth;
  std::optional<LmConfig> lm;

  // decomposition problems
  std::optional<DecompositionInstance> instance;

  // optional region data for the trace
  std::optional<Desingularizer> kl;
  std::optional<KLRegion> region;

  std::string stem = "experiment";
};

/// ConfigError on anything malformed or unsupported.
Experiment parse_experiment(const nlohmann::json& config, const std::string& stem = "experiment");
Experiment load_experiment(const std::filesystem::path& path);

struct Outcome {
  IterateTrace trace;
  nlohmann::json summary;
};

/// Runs the schedule checks, then the solver. Throws ScheduleError /
/// ParameterError on infeasible schedules and DivergenceError on blow-up.
Outcome execute(const Experiment& e);

struct RunArgs {
  std::vector<std::string> configs;
  std::string out;  // overrides OUTPUT_DIR and the config's output.dir
  int jobs = 1;
  bool dump_iterates = false;
  std::optional<std::string> force_solver;
};

struct MonitorArgs {
  std::string trace;
  std::string out;
  bool h2prime = false;
  std::optional<double> kl_C, kl_theta, kl_eta, f_star;
  std::optional<double> M;
};

struct RatesArgs {
  std::string trace;
  std::string out;
  bool h2prime = false;
  double kl_C = 1.0;
  double kl_theta = 0.5;
  std::optional<double> kl_eta;
  double f_star = 0.0;
  double tail_fraction = 0.8;
  bool use_schedule = false;  // fit against the b_k column instead of the iteration count
  std::optional<std::string> iterates;
  std::vector<double> x_star;
  std::optional<std::string> plot_dir;
};

struct DecomposeArgs {
  std::optional<std::string> config;
  std::optional<std::string> matrix;
  std::string out;
  Eigen::Index m = 20, n = 20, r = 2;
  std::size_t s = 10;
  double gap = 10.0;
  std::uint64_t seed = 0;
  double lambda = 0.5, mu = 0.5;
  double perturbation = 1e-3;
  std::size_t max_iter = 500;
  bool dump_iterates = false;
};

int cmd_run(const RunArgs& args, std::ostream& log);
int cmd_lm(RunArgs args, std::ostream& log);
int cmd_monitor(const MonitorArgs& args, std::ostream& log);
int cmd_rates(const RatesArgs& args, std::ostream& log);
int cmd_decompose(const DecomposeArgs& args, std::ostream& log);

/// Output directory: explicit flag, then OUTPUT_DIR, then the fallback.
std::filesystem::path output_dir(const std::string& flag, const std::string& fallback);

/// Log-scale line plot written as a standalone SVG document.
void write_svg_plot(const std::filesystem::path& path, const std::string& title, const std::string& xlabel,
                    const std::vector<double>& x, const std::vector<double>& y);

}  // namespace klsplit::cli
