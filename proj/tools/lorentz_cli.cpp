#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

#include "lorentz/cli.hpp"

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("lorentz");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("LORENTZ_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  lorentz::ExperimentConfig cfg;
  CLI::App app{"Lorentz gases on substitution tilings: tilings, scatterer fields, billiard statistics"};
  app.set_config("--config", "", "INI/TOML file; flags given on the command line override it");
  app.require_subcommand(1);

  app.add_option("--rule", cfg.rule, "Builtin rule (half-hex, square, rhombus-product) or rule file")->capture_default_str();
  app.add_option("--assignment", cfg.assignment, "Scatterer assignment file");
  app.add_option("--observable", cfg.observable, "Observable file");
  app.add_option("--observable2", cfg.observable2, "Second observable file (defaults to the first)");
  app.add_option("--proto", cfg.proto, "Prototile of the supertile")->capture_default_str();
  app.add_option("--generations", cfg.generations, "Substitution generations")->capture_default_str();
  app.add_option("--window-radius,--window_radius", cfg.window_radius, "Patch window radius T (0: whole supertile)")->capture_default_str();
  app.add_option("--window-center,--window_center", cfg.window_center, "Patch window center z as (x, y)");
  app.add_option("--address-depth,--address_depth", cfg.address_depth, "Address depth (negative: 2M + 2)")->capture_default_str();
  app.add_option("--sweep-directions,--sweep_directions", cfg.sweep_directions, "Horizon sweep directions")->capture_default_str();
  app.add_option("--sweep-spacing,--sweep_spacing", cfg.sweep_spacing, "Horizon sweep offset spacing (fraction of sep_min)")->capture_default_str();
  app.add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  app.add_option("--workers", cfg.workers, "Worker threads")->capture_default_str();
  app.add_option("--out-dir,--out_dir", cfg.out_dir, "Output directory")->capture_default_str();
  app.add_option("--samples", cfg.samples, "Invariant-measure samples")->capture_default_str();
  app.add_option("--region", cfg.region, "Sampling disk radius (0: largest admissible)")->capture_default_str();
  app.add_option("--n-list,--n_list", cfg.n_list, "Correlation lags")->capture_default_str();
  app.add_option("--T-list,--T_list", cfg.T_list, "Disk radii or flow horizons")->capture_default_str();
  app.add_option("--t-max,--t_max", cfg.t_max, "Flow horizon when no T list is given")->capture_default_str();
  app.add_option("--steps", cfg.steps, "Trajectory collisions")->capture_default_str();
  app.add_option("--starts", cfg.starts, "Independent starts or disk centers")->capture_default_str();
  app.add_option("--view-radius,--view_radius", cfg.view_radius, "Radius of the rendered field view")->capture_default_str();
  app.add_option("--quad-spacing,--quad_spacing", cfg.quad_spacing, "Quadrature rho spacing")->capture_default_str();
  app.add_option("--quad-nodes,--quad_nodes", cfg.quad_nodes, "Gauss-Legendre nodes in theta")->capture_default_str();
  app.add_flag("--center-observables,!--no-center-observables", cfg.center_observables, "Subtract the invariant mean from observables");

  const std::vector<std::pair<const char*, const char*>> kinds{
      {"tile", "Render a substitution patch and its tile frequencies"},
      {"scatter", "Place and certify a scatterer field"},
      {"trajectory", "Follow one billiard orbit"},
      {"invariants", "Check reversibility, charts, cones and measure invariance"},
      {"mixing", "Correlation identity and decay"},
      {"ergodic", "Flow time averages"},
      {"spectrum", "Deviation spectrum of the substitution matrix"},
  };
  for (const auto& [name, help] : kinds) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  cfg.kind = app.get_subcommands().front()->get_name();

  const lorentz::RunResult r = lorentz::run(cfg);
  if (r.exit_code != 0) {
    std::cerr << r.message << "\n";
    return r.exit_code;
  }
  for (const std::string& f : r.files) std::cout << f << "\n";
  return 0;
}
