#pragma once

#include <memory>

#include "dmech/quadrature.hpp"
#include "dmech/segments.hpp"
#include "dmech/system.hpp"

namespace dmech {

/// How the discrete one-form sigma_d is produced.
enum class OneFormMode {
  /// sigma_d = d(L_d): gradient of the discrete Lagrangian in the anchor
  /// coordinates (chain rule through the segment sensitivities when the
  /// system registers an analytic gradient, 4th-order FD otherwise).
  /// Closed by construction.
  exact_differential,
  /// sigma_d = quadrature of dL pulled back through the segment
  /// sensitivities node by node. Closed only when it coincides with d(L_d).
  pulled_back,
};

/// Where the discrete constraint samples the continuous one.
enum class ConstraintAnchor {
  anchor_point,        ///< g_d(q, v) = g(q, v) at the segment anchor t = 0
  quadrature_average,  ///< g_d = sum_i w_i g(c(t_i), c'(t_i))
};

enum class Side { minus, plus };

/// A Lagrangian system discretized by a segment scheme and quadrature:
/// carries everything needed to evaluate the discrete Lagrangian, the
/// discrete one-form and Legendre transforms, the discrete constraint,
/// and the variation annihilator.
struct DiscreteSystem {
  ContinuousSystem system;
  std::shared_ptr<const SegmentScheme> scheme;
  Quadrature quadrature = quadrature_rule("midpoint");
  OneFormMode one_form_mode = OneFormMode::exact_differential;
  ConstraintAnchor constraint_anchor = ConstraintAnchor::anchor_point;
  double feasibility_tol = 1e-9;

  int dim() const { return system.dim_q; }
  int dim_constraint() const { return system.dim_constraint; }
  double h() const { return scheme->h(); }

  /// Same discretization at another step (convergence studies).
  DiscreteSystem with_step(double h) const {
    DiscreteSystem out = *this;
    out.scheme = std::shared_ptr<const SegmentScheme>(scheme->with_step(h));
    return out;
  }
};

// ---------------------------------------------------------------------------
// Discrete Lagrangian and one-form
// ---------------------------------------------------------------------------

/// L_d(q, v) = h * sum_i w_i L(c(t_i), c'(t_i)), t_i = alpha_minus + node_i*h.
double discrete_lagrangian(const DiscreteSystem& d, const State& s);

/// The discrete one-form as a covector over the anchor coordinates
/// (length 2n, q-block then v-block), per the active OneFormMode.
Vec sigma_d(const DiscreteSystem& d, const State& s);

/// True when sigma_d is produced by finite differences of L_d (no analytic
/// gradient in exact_differential mode); consumers widen their FD steps.
bool sigma_is_fd(const DiscreteSystem& d);

/// Splitting components of sigma_d: theta_plus contracts a variation's
/// plus-part, theta_minus the negated minus-part; both length 2n.
/// Identity: theta_plus - theta_minus = sigma_d.
Vec theta_plus(const DiscreteSystem& d, const State& s);
Vec theta_minus(const DiscreteSystem& d, const State& s);

/// Discrete Legendre transforms, n-covectors on the tangent space at the
/// respective endpoint: <legendre_plus(s), dq> = sigma_d(s) . lift_plus(dq),
/// <legendre_minus(s), dq> = -sigma_d(s) . lift_minus(dq).
Vec legendre_plus(const DiscreteSystem& d, const State& s);
Vec legendre_minus(const DiscreteSystem& d, const State& s);

/// Junction covector of an adjacent pair:
/// delta_sigma(v, w) = legendre_plus(v) - legendre_minus(w); the evolution
/// equations say it lies in the span of the annihilator rows at v.
Vec delta_sigma(const DiscreteSystem& d, const State& v, const State& w);

/// Momentum paired with an affine generator through the chosen Legendre
/// transform: side minus gives <legendre_minus(s), xi_Q(boundary_minus(s))>,
/// side plus the forward analogue.
double momentum(const DiscreteSystem& d, const State& s,
                const AffineGenerator& gen, Side side);

/// Exterior derivative of theta_side as a two-form at s, evaluated on a
/// pair of tangent vectors by central differences of the contractions
/// (constant coordinate extensions). Antisymmetric by construction.
double omega(const DiscreteSystem& d, const State& s, const Vec& dv,
             const Vec& dw, Side side = Side::plus);

/// Mixed second derivative of sigma_d pairing a variation dq (extended as a
/// minus-lift) against a direction dq_tilde (extended as a plus-lift):
/// the bilinear form whose nonsingularity between the admissible-variation
/// and constrained-fiber bases is the regularity of the discrete system.
double dpm_bilinear(const DiscreteSystem& d, const State& s, const Vec& dq,
                    const Vec& dq_tilde);

/// Companion with the roles of the two lifts exchanged; equals dpm_bilinear
/// (up to FD tolerance) exactly when sigma_d is closed.
double dmp_bilinear(const DiscreteSystem& d, const State& s, const Vec& dq,
                    const Vec& dq_tilde);

// ---------------------------------------------------------------------------
// Discrete constraint
// ---------------------------------------------------------------------------

/// g_d(s) per the active ConstraintAnchor (R^m).
Vec discrete_constraint(const DiscreteSystem& d, const State& s);

/// Derivative of g_d in the anchor coordinates (m x 2n, chain rule).
Mat discrete_constraint_jacobian(const DiscreteSystem& d, const State& s);

/// Annihilator rows of the admissible variation space attached to s,
/// evaluated at (boundary_plus(s), v_fiber): m x n.
Mat annihilator_at(const DiscreteSystem& d, const State& s);

/// True iff ||g_d(s)||_inf <= tol (default: d.feasibility_tol).
bool feasible(const DiscreteSystem& d, const State& s, double tol = -1.0);

/// Rank checks of the dimension bookkeeping at s: the discrete constraint
/// Jacobian has full rank m and the annihilator rows rank m, so the
/// constrained fiber and the admissible variations both have
/// dimension n - m. Throws RegularityError on violation.
void check_dimension_balance(const DiscreteSystem& d, const State& s);

}  // namespace dmech
