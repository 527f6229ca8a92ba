#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dmech/errors.hpp"
#include "dmech/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"discrete variational mechanics on curve-segment bundles"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_override;
  std::optional<std::uint64_t> seed_override;
  std::vector<double> h_list;

  auto add_common = [&](CLI::App* sub) {
    sub->set_help_flag("--help", "print help");  // frees -h/--h for step sizes
    sub->add_option("config", config_path, "run configuration file")
        ->required();
    sub->add_option("--out", out_override, "override the output path");
    sub->add_option("--seed", seed_override,
                    "override the seed for randomized diagnostics");
  };

  CLI::App* simulate = app.add_subcommand(
      "simulate", "evolve the system; write trajectory CSV + JSON summary");
  add_common(simulate);

  CLI::App* converge = app.add_subcommand(
      "converge", "endpoint-error convergence table against a tight "
                  "continuous reference");
  add_common(converge);
  converge->add_option("--h", h_list, "comma-separated step sizes")
      ->delimiter(',')
      ->required();

  CLI::App* diagnose = app.add_subcommand(
      "diagnose", "theorem-by-theorem structural checks; JSON report");
  add_common(diagnose);

  CLI11_PARSE(app, argc, argv);

  try {
    dmech::RunConfig cfg = dmech::load_config(config_path);
    if (out_override) cfg.out = *out_override;
    if (seed_override) cfg.seed = *seed_override;
    if (simulate->parsed()) return dmech::run_simulate(cfg);
    if (converge->parsed()) return dmech::run_converge(cfg, h_list);
    return dmech::run_diagnose(cfg);
  } catch (const dmech::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
