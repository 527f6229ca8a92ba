#pragma once

#include <string>
#include <vector>

#include "dmech/config.hpp"

namespace dmech {

/// Serialize a double with 17 significant digits (binary64 round-trip).
std::string format_g17(double x);

/// Simulate: evolve the configured system, write the trajectory CSV to the
/// output path and a JSON summary of max residuals next to it
/// (.csv -> .json). Returns the process exit status (0 = success;
/// 2 = solver failure, partial CSV flushed, failure index in the JSON).
int run_simulate(const RunConfig& cfg);

/// Convergence study over h_list (errors vs a tight continuous reference);
/// writes the table CSV (h, error, ratio) whose final line carries the
/// least-squares slope, or the word "exact" when every error sits at
/// rounding level. Returns 0 on success.
int run_converge(const RunConfig& cfg, const std::vector<double>& h_list);

/// Theorem-by-theorem diagnostics on the configured run; writes a JSON
/// report keyed by check name, each entry carrying residual, threshold and
/// status (pass / fail / not_applicable). Returns 0 iff every applicable
/// check passes.
int run_diagnose(const RunConfig& cfg);

}  // namespace dmech
