#include <iostream>

#include "CLI11.hpp"
#include "klsplit/cli.hpp"

using namespace klsplit::cli;

int main(int argc, char** argv) {
  CLI::App app{"klsplit: variable-metric splitting methods and KL rate diagnostics"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "run experiments from JSON configs");
  run->add_option("--config", run_args.configs, "experiment config (repeatable)")->required();
  run->add_option("--out", run_args.out, "output directory (overrides OUTPUT_DIR)");
  run->add_option("--jobs", run_args.jobs, "parallel experiments")->check(CLI::PositiveNumber);
  run->add_flag("--dump-iterates", run_args.dump_iterates, "write iterates next to the trace");

  RunArgs lm_args;
  auto* lm = app.add_subcommand("lm", "run configs with the Levenberg-Marquardt solver");
  lm->add_option("--config", lm_args.configs, "experiment config (repeatable)")->required();
  lm->add_option("--out", lm_args.out, "output directory");
  lm->add_option("--jobs", lm_args.jobs, "parallel experiments")->check(CLI::PositiveNumber);
  lm->add_flag("--dump-iterates", lm_args.dump_iterates, "write iterates next to the trace");

  MonitorArgs mon;
  auto* monitor = app.add_subcommand("monitor", "check the descent hypotheses on a trace");
  monitor->add_option("--trace", mon.trace, "trace CSV")->required();
  monitor->add_option("--out", mon.out, "report JSON (stdout when omitted)");
  monitor->add_flag("--h2prime", mon.h2prime, "check the strong relative error condition");
  monitor->add_option("--kl-C", mon.kl_C, "desingularizer constant");
  monitor->add_option("--kl-theta", mon.kl_theta, "desingularizer exponent");
  monitor->add_option("--kl-eta", mon.kl_eta, "KL value window");
  monitor->add_option("--f-star", mon.f_star, "critical value");
  monitor->add_option("--M", mon.M, "constant for the one-step inequality");

  RatesArgs rates_args;
  auto* rates = app.add_subcommand("rates", "predict and fit convergence rates");
  rates->add_option("--trace", rates_args.trace, "trace CSV")->required();
  rates->add_option("--out", rates_args.out, "report JSON (stdout when omitted)");
  rates->add_flag("--h2prime", rates_args.h2prime, "the trace satisfies the strong error condition");
  rates->add_option("--kl-C", rates_args.kl_C, "desingularizer constant");
  rates->add_option("--kl-theta", rates_args.kl_theta, "desingularizer exponent");
  rates->add_option("--kl-eta", rates_args.kl_eta, "KL value window");
  rates->add_option("--f-star", rates_args.f_star, "critical value");
  rates->add_option("--tail-fraction", rates_args.tail_fraction, "fraction of the trace used by the fit")
      ->check(CLI::Range(0.0, 1.0));
  rates->add_flag("--use-schedule", rates_args.use_schedule, "fit against the running sum of b_k");
  rates->add_option("--iterates", rates_args.iterates, "iterates CSV for the distance fit");
  rates->add_option("--x-star", rates_args.x_star, "limit point")->delimiter(',');
  rates->add_option("--plot", rates_args.plot_dir, "directory for SVG plots");

  DecomposeArgs dec;
  auto* decompose = app.add_subcommand("decompose", "low-rank plus sparse decomposition");
  decompose->add_option("--config", dec.config, "decomposition config");
  decompose->add_option("--matrix", dec.matrix, "instance file");
  decompose->add_option("--out", dec.out, "output directory");
  decompose->add_option("--m", dec.m);
  decompose->add_option("--n", dec.n);
  decompose->add_option("--rank", dec.r);
  decompose->add_option("--sparsity", dec.s);
  decompose->add_option("--gap", dec.gap);
  decompose->add_option("--seed", dec.seed);
  decompose->add_option("--lambda", dec.lambda);
  decompose->add_option("--mu", dec.mu);
  decompose->add_option("--perturbation", dec.perturbation);
  decompose->add_option("--max-iter", dec.max_iter);
  decompose->add_flag("--dump-iterates", dec.dump_iterates);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  if (*run) return cmd_run(run_args, std::cerr);
  if (*lm) return cmd_lm(lm_args, std::cerr);
  if (*monitor) return cmd_monitor(mon, std::cout);
  if (*rates) return cmd_rates(rates_args, std::cout);
  if (*decompose) return cmd_decompose(dec, std::cerr);
  return kConfigError;
}
