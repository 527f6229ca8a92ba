#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dmech/solver.hpp"

namespace dmech {

/// Diagnostic energy E = <dL/dv, v> - L at a state. The association of a
/// single continuous state with a segment is a modeling convention, so this
/// is reported for monitoring only.
double energy(const ContinuousSystem& sys, const Vec& q, const Vec& v);

// ---------------------------------------------------------------------------
// Momentum
// ---------------------------------------------------------------------------

struct MomentumCheck {
  bool applicable = false;
  double admissibility_defect = 0.0;  ///< |mu(v) . xi_Q(junction)|, rows unit-normalized
  double residual = 0.0;              ///< |J_xi(w) - J_xi(v)|
  double j_before = 0.0;
  double j_after = 0.0;
};

/// Conservation of the generator momentum across one solved step. The check
/// applies only when the generator's base value at the junction lies in the
/// admissible variation space (defect <= admissibility_tol); otherwise it is
/// reported not applicable with the defect.
MomentumCheck momentum_theorem_check(const DiscreteSystem& d,
                                     const SolutionPair& pair,
                                     const AffineGenerator& gen,
                                     double admissibility_tol = 1e-10);

/// A state-dependent combination of the registered generators, as
/// coefficients. Used by the constrained momentum balance.
using GeneratorField = std::function<Vec(const State&)>;

/// The projected-generator field: coefficients c(s) obtained by projecting
/// the fixed vector coeffs0 onto the kernel of mu * G at the state's
/// backward endpoint, where G collects the generator base values. Anchoring
/// at the incoming endpoint makes the field admissible at the junction it
/// enters through, which is what the discrete momentum balance pairs it
/// with. Throws UnsupportedError without generators or a constraint.
GeneratorField projected_generator_field(const DiscreteSystem& d,
                                         const Vec& coeffs0);

/// Residual of the discrete momentum balance across one solved step for a
/// state-dependent generator field:
///   | [J_{xi(w)}(w) - J_{xi(v)}(v)] - <J(v), xi(w) - xi(v)> |
/// with J taken through the backward Legendre transform.
double nonholonomic_momentum_residual(const DiscreteSystem& d,
                                      const SolutionPair& pair,
                                      const GeneratorField& xi_field);

// ---------------------------------------------------------------------------
// Symplecticity and constraint geometry
// ---------------------------------------------------------------------------

/// Bases (columns, orthonormal) of the three constraint-compatible
/// distributions at a state; each has 2r = 2(n - m) columns.
struct KBasis {
  Mat k_minus;
  Mat k_zero;
  Mat k_plus;
  int expected_dim = 0;
};

/// K_plus = ker Tg_d ∩ (J_plus)^{-1} E_plus, K_minus the backward analogue,
/// K_zero the intersection of the two preimages, where E_± are the
/// admissible variation spaces at the respective endpoints. Throws
/// RegularityError when any dimension differs from 2(n - m).
KBasis k_bases(const DiscreteSystem& d, const State& s);

struct SymplecticCheck {
  double max_defect = 0.0;  ///< relative to the sampled two-form scale
  double scale = 1.0;
  int pairs = 0;
};

/// Preservation defect of the two-form under one evolution step:
/// max over sampled pairs of
///   |omega(F v)(TF dv, TF dw) - omega(v)(dv, dw)| / scale,
/// with pairs drawn (seeded) from the span of `directions` and TF the FD
/// tangent of step().
SymplecticCheck symplectic_check(const DiscreteSystem& d, const State& s,
                                 const Mat& directions, int num_pairs,
                                 std::uint64_t seed,
                                 const SolveOptions& opts = {});

/// Smooth vector field on configuration space.
using VectorField = std::function<Vec(const Vec&)>;

struct InvolutivityReport {
  bool involutive = false;
  double max_defect = 0.0;      ///< relative span defect of the worst bracket
  double bracket_scale = 0.0;   ///< largest bracket norm encountered
};

/// FD Lie brackets [X_i, X_j](q) = DX_j X_i - DX_i X_j, each tested for
/// membership in span{X_k(q)} by least squares; involutive iff every
/// relative defect is at most tol. Single fields are trivially involutive.
InvolutivityReport involutivity_check(const std::vector<VectorField>& fields,
                                      const Vec& q, double tol = 1e-6);

/// Brackets themselves (i < j, lexicographic), for tests that pin values.
std::vector<Vec> fd_lie_brackets(const std::vector<VectorField>& fields,
                                 const Vec& q);

// ---------------------------------------------------------------------------
// Series diagnostics over trajectories
// ---------------------------------------------------------------------------

/// Per-state conserved-quantity series of a trajectory. energy/momenta/
/// constraint have one entry per state; legendre_mismatch has one entry per
/// transition (length N).
struct ConservationSeries {
  std::vector<double> energy;
  std::vector<std::vector<double>> momenta;     ///< [generator][state]
  std::vector<std::vector<double>> constraint;  ///< [component][state]
  std::vector<double> legendre_mismatch;
};

ConservationSeries conservation_series(const DiscreteSystem& d,
                                       const Trajectory& traj);

/// Max over transitions of ||legendre_plus(v_k) - legendre_minus(v_{k+1})
/// - mu(v_k)^T lambda_{k+1}||_inf — the stationarity block re-evaluated.
double legendre_match_series(const DiscreteSystem& d, const Trajectory& traj);

// ---------------------------------------------------------------------------
// Reference solutions and convergence order
// ---------------------------------------------------------------------------

struct ReferencePoint {
  Vec q;
  Vec v;
};

/// Continuous-dynamics reference: the index-reduced equations
///   [ L_vv  g_v^T ] [ a      ]   [ L_q - L_vq v ]
///   [ g_v   0     ] [ lambda ] = [ -g_q v       ]
/// (unconstrained systems drop the multiplier rows), integrated by an
/// embedded Dormand-Prince 5(4) pair with adaptive steps at
/// atol = rtol = tol. Hessian blocks by central FD of the gradient.
ReferencePoint reference_solution(const ContinuousSystem& sys, const Vec& q0,
                                  const Vec& v0, double T, double tol = 1e-12);

struct ConvergenceReport {
  std::vector<double> hs;
  std::vector<double> errors;  ///< |q_num(T) - q_ref(T)|_2 per h
  std::vector<double> ratios;  ///< errors[i-1] / errors[i] (NaN first)
  double slope = 0.0;          ///< least-squares slope of log e vs log h
  bool exact = false;          ///< all errors at rounding level
};

/// Endpoint-error convergence study: re-discretize `proto` at each h,
/// evolve over round(T/h) steps from (q0, v0), compare the final anchor
/// configuration with the reference at T. Errors below 1e-12 are treated
/// as exact and excluded from the fit.
ConvergenceReport convergence_order(const DiscreteSystem& proto, const Vec& q0,
                                    const Vec& v0, double T,
                                    const std::vector<double>& hs,
                                    const SolveOptions& opts = {});

}  // namespace dmech
