// Command-line front end: stability grids, loss-boundary heatmaps, delayed
// training simulation, hardware cost model, schedule previews, and bundled
// reproduction targets with pass/fail checks.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "pipesim/runner.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::string seeds;
  int jobs = (int)std::max(1u, std::thread::hardware_concurrency());
  bool full_scale = false;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool config_required) {
  auto* copt = cmd->add_option("--config", a.config, "experiment config file (key = value)");
  if (config_required) copt->required();
  cmd->add_option("--out", a.out, "output directory (default: $PIPESIM_OUT or ./out)");
  cmd->add_option("--seeds", a.seeds, "comma-separated seeds, overrides the config");
  cmd->add_option("--jobs", a.jobs, "worker threads; results are identical for any value")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--full-scale", a.full_scale, "run full-length grids instead of desk-scale");
}

pipesim::RunOptions make_options(const CommonArgs& a) {
  pipesim::RunOptions opt;
  opt.config_path = a.config;
  opt.out_dir = pipesim::resolve_out_dir(a.out);
  opt.jobs = a.jobs;
  opt.full_scale = a.full_scale;
  if (!a.seeds.empty()) {
    for (const auto& tok : pipesim::detail::split(a.seeds, ',')) {
      long long s = 0;
      if (!pipesim::detail::parse_ll(tok, s))
        throw pipesim::ConfigError("--seeds", "expected integers, got '" + tok + "'");
      opt.seeds.push_back(s);
    }
  }
  return opt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asynchronous pipeline-parallel training: stability analysis, simulation,"
               " and cost model"};
  app.require_subcommand(1);

  CommonArgs a_stab, a_heat, a_sim, a_cost, a_prev, a_repro;
  std::string repro_name;

  auto* stab = app.add_subcommand("analyze-stability",
                                  "characteristic-polynomial spectra over a parameter grid");
  add_common(stab, a_stab, true);

  auto* heat = app.add_subcommand("heatmap",
                                  "final-loss grid over (delay, learning rate) with the"
                                  " closed-form boundary");
  add_common(heat, a_heat, true);

  auto* sim = app.add_subcommand("simulate", "delayed-gradient training runs, one per seed");
  add_common(sim, a_sim, true);

  auto* cost = app.add_subcommand("cost-model",
                                  "throughput and memory for pipeline configurations");
  add_common(cost, a_cost, true);

  auto* prev = app.add_subcommand("schedule-preview",
                                  "per-stage delays, step sizes, and memory without running");
  add_common(prev, a_prev, true);

  auto* repro = app.add_subcommand("repro", "bundled reproduction targets with checks");
  repro->add_option("target", repro_name,
                    "fig2a | fig2b | fig3a | fig3b | table1-util | appA-ratios | hogwild")
      ->required();
  add_common(repro, a_repro, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (stab->parsed()) {
      auto opt = make_options(a_stab);
      return pipesim::cmd_analyze_stability(pipesim::load_config(a_stab.config), opt);
    }
    if (heat->parsed()) {
      auto opt = make_options(a_heat);
      return pipesim::cmd_heatmap(pipesim::load_config(a_heat.config), opt);
    }
    if (sim->parsed()) {
      auto opt = make_options(a_sim);
      return pipesim::cmd_simulate(pipesim::load_config(a_sim.config), opt);
    }
    if (cost->parsed()) {
      auto opt = make_options(a_cost);
      return pipesim::cmd_cost_model(pipesim::load_config(a_cost.config), opt);
    }
    if (prev->parsed()) {
      auto opt = make_options(a_prev);
      return pipesim::cmd_schedule_preview(pipesim::load_config(a_prev.config), opt);
    }
    if (repro->parsed()) {
      auto opt = make_options(a_repro);
      if (!a_repro.config.empty())
        std::cerr << "note: repro targets use bundled settings; --config is ignored\n";
      return pipesim::cmd_repro(repro_name, opt);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
