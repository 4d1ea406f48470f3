#include <CLI11.hpp>

#include <iostream>

#include "advecta/commands.hpp"

int main(int argc, char** argv) {
  using namespace advecta;
  CLI::App app{"Spectral advection-diffusion models: simulate, fit, filter, nowcast, plot"};
  app.require_subcommand(1);

  CommandOptions opt;
  int steps = -1;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* cmd, bool config_required) {
    auto* c = cmd->add_option("--config", opt.config_path, "Run configuration (YAML)");
    if (config_required) c->required();
    cmd->add_option("--out", opt.out_dir, "Output directory (default: the config's out)");
    cmd->add_option("--seed", seed, "Override the config seed");
    cmd->add_option("--threads", opt.threads, "Worker threads (default: ADVECTA_THREADS or 1)");
  };

  auto* sim = app.add_subcommand("simulate", "Simulate frames from the configured model");
  add_common(sim, true);
  sim->add_option("--steps", steps, "Number of time steps (default: time.steps)");

  auto* fit = app.add_subcommand("fit", "Maximum-likelihood fit of the model to frames");
  add_common(fit, true);
  fit->add_option("--data", opt.data_path, "Frame file or directory")->required();

  auto* filt = app.add_subcommand("filter", "Kalman filter over frames with the configured model");
  add_common(filt, true);
  filt->add_option("--data", opt.data_path, "Frame file or directory")->required();

  auto* now = app.add_subcommand("nowcast", "Filter, then predict ahead");
  add_common(now, true);
  now->add_option("--data", opt.data_path, "Frame file or directory")->required();
  now->add_option("--steps", steps, "Forecast horizon in steps")->required();

  auto* plot = app.add_subcommand("plot", "Render frames as PGM images");
  add_common(plot, false);
  plot->add_option("--data", opt.data_path, "Frame file or directory")->required();
  plot->add_option("--palette", opt.palette, "gray (per frame range) or gray-shared");
  plot->add_option("--subsample", opt.subsample, "Velocity arrow spacing in grid points");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  for (auto* cmd : {sim, fit, filt, now, plot}) {
    if (cmd->parsed()) {
      const auto* st = cmd->get_option_no_throw("--steps");
      if (st && st->count() > 0) opt.steps = steps;
      if (cmd->get_option("--seed")->count() > 0) opt.seed = seed;
    }
  }

  try {
    if (sim->parsed()) return cmd_simulate(opt);
    if (fit->parsed()) return cmd_fit(opt);
    if (filt->parsed()) return cmd_filter(opt);
    if (now->parsed()) return cmd_nowcast(opt);
    if (plot->parsed()) return cmd_plot(opt);
  } catch (const std::exception& e) {
    std::cerr << "advecta: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitFailure;
}
