#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmech/discrete_form.hpp"
#include "dmech/solver.hpp"

namespace dmech {

/// A fully validated run description, parsed from flat key=value text.
struct RunConfig {
  // system
  std::string system;
  std::vector<double> params;
  Vec q0;
  Vec v0;

  // scheme
  double gamma = 0.5;
  std::string segment = "linear";     ///< linear | flow
  std::string method = "rk4";         ///< flow one-step method: rk4 | midpoint
  int substeps = 1;                   ///< flow substeps per unit step
  std::string quadrature = "midpoint";
  std::string one_form = "exact";     ///< exact | pulled_back
  std::string constraint_anchor = "anchor";  ///< anchor | average

  // run
  double h = 0.0;
  int steps = 0;
  double newton_tol = 1e-12;
  int newton_max_iter = 50;
  double fd_step_scale = 1.0;
  std::uint64_t seed = 0;

  // output
  std::string out;                    ///< empty: mode-specific default
  std::vector<int> monitor;           ///< generator indices; empty: all
};

/// Parse config text (flat key=value lines; optional [section] headers are
/// organizational only; '#' and ';' start comments; lists are bracketed,
/// comma-separated). Unknown keys or sections and missing required keys are
/// errors naming the offender (fail-closed). Throws ConfigError.
RunConfig parse_config(const std::string& text);

/// parse_config on the contents of a file.
RunConfig load_config(const std::string& path);

/// Instantiate the discretized system a config describes. Flow segments use
/// the system's own unconstrained Euler-Lagrange field.
DiscreteSystem make_discrete_system(const RunConfig& cfg);

/// Initial state from the config (dimension-checked against the system).
State initial_state(const RunConfig& cfg, const DiscreteSystem& d);

/// Newton options from the config.
SolveOptions solve_options(const RunConfig& cfg);

}  // namespace dmech
