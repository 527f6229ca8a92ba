#pragma once

#include <string>
#include <vector>

#include "dmech/discrete_form.hpp"

namespace dmech {

/// Newton options for the implicit step.
struct SolveOptions {
  double tol = 1e-12;          ///< residual infinity-norm target
  int max_iterations = 50;
  bool polish = true;          ///< one extra iteration once tol is met
  double fd_step_scale = 1.0;  ///< multiplies every FD step in the solve
};

/// A solved evolution step: current state v, next state w, multipliers.
struct SolutionPair {
  State v;
  State w;
  Vec lambda;                           ///< R^m (empty when unconstrained)
  double residual_norm = 0.0;
  int newton_iterations = 0;
  std::vector<double> residual_history; ///< per-iterate infinity norms
};

/// A chain of states produced by iterating the evolution map. Per-state
/// arrays are aligned with states: index k carries the data of the solve
/// that produced state k (index 0 holds zeros — no solve).
struct Trajectory {
  std::vector<State> states;        ///< s_0 .. s_N
  std::vector<Vec> lambdas;
  std::vector<int> newton_iterations;
  std::vector<double> residuals;
  std::vector<Vec> configurations;  ///< m_0 .. m_{N+1}

  bool failed = false;
  int failure_index = -1;           ///< step index that failed
  std::string failure_message;

  int steps_completed() const {
    return static_cast<int>(states.size()) - 1;
  }
};

// ---------------------------------------------------------------------------
// The discrete equations and their Newton solve
// ---------------------------------------------------------------------------

/// Residual of the discrete equations for the unknowns (q_next, v_next,
/// lambda), stacked as R^(2n+m):
///   R1 (n): boundary_minus(next) - boundary_plus(v)     [adjacency]
///   R2 (m): g_d(next)                                   [constraint]
///   R3 (n): legendre_plus(v) - legendre_minus(next) - mu(v)^T lambda
Vec residual(const DiscreteSystem& d, const State& v, const State& next,
             const Vec& lambda);

/// Canonical adjacent candidate used as the Newton initial guess:
/// the state over (boundary_plus(v), boundary_plus(v) + h*v_fiber)
/// (closed form for linear segments, boundary inversion for flows).
State canonical_adjacent(const DiscreteSystem& d, const State& v);

/// One step of the evolution map: Newton on (q_next, v_next, lambda) with
/// an FD Jacobian and dense LU. Throws SolveError on non-convergence and
/// RegularityError when the Newton matrix is singular.
SolutionPair step(const DiscreteSystem& d, const State& v,
                  const SolveOptions& opts = {});

/// Iterate step() N times from a feasible initial state. Solver failures do
/// not throw: the partial trajectory is returned with the failure marker set.
Trajectory evolve(const DiscreteSystem& d, const State& v0, int steps,
                  const SolveOptions& opts = {});

/// Tangent of the evolution map at v (2n x 2n), by central differences of
/// step() with relative step fd_step; every evaluation re-solves Newton at
/// a tolerance tight enough to keep differentiation noise harmless.
Mat tangent_step(const DiscreteSystem& d, const State& v,
                 const SolveOptions& opts = {}, double fd_step = 1e-6);

/// Estimated convergence order of a Newton residual history: least-squares
/// slope of log r_{k+1} against log r_k over the last (up to three) usable
/// pairs. Pairs with either residual at or below the rounding floor are
/// excluded — contraction into rounding noise carries no order information.
/// Returns +inf when the very first update already hit the floor.
double newton_order_estimate(const std::vector<double>& history,
                             double floor = 2.5e-14);

// ---------------------------------------------------------------------------
// Regularity diagnostics
// ---------------------------------------------------------------------------

/// A square matrix together with its singular-value verdict.
struct RegularityReport {
  Mat matrix;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  double condition = 0.0;
  bool nonsingular = false;
};

/// The regularity form of an adjacent pair: entries
/// dpm_bilinear(w)(dq_j, dq_tilde_i) with columns dq_j over an orthonormal
/// basis of the admissible variations at v (null space of the annihilator)
/// and rows dq_tilde_i over an orthonormal basis of the forward boundary
/// image of the constrained minus-vertical space at w. Nonsingularity is
/// the local solvability condition of the discrete equations.
RegularityReport regularity_matrix(const DiscreteSystem& d, const State& v,
                                   const State& w);

/// The skew Hessian of the two-point action at a solution pair: rows over
/// constrained minus-vertical directions (0, dv_tilde) at pair.w, columns
/// over the paired lift basis of the admissible variations (orthonormalized
/// jointly). Nondegenerate together with regularity_matrix.
RegularityReport skew_hessian(const DiscreteSystem& d,
                              const SolutionPair& pair,
                              double solution_tol = 1e-8);

}  // namespace dmech
