#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dmech/linalg.hpp"

namespace dmech {

/// Infinitesimal generator of an affine action on the configuration space:
/// xi_Q(q) = A q + b. Its tangent lift acts on velocities by v -> A v.
struct AffineGenerator {
  Mat A;  ///< n x n (zero for pure translations)
  Vec b;  ///< n
  std::string label;

  Vec base(const Vec& q) const { return A * q + b; }
  Vec fiber(const Vec& v) const { return A * v; }
};

/// How admissible velocity variations are derived from the constraint.
enum class VariationRule {
  chetaev,               ///< annihilator rows = dg/dv
  explicit_annihilator,  ///< user-supplied annihilator row function
};

/// A Lagrangian system on Q = R^n, optionally with a velocity constraint
/// g(q, v) = 0 (m rows) and a list of affine symmetry generators.
///
/// Callable fields marked "optional" may be left empty; the library falls
/// back to finite differences where derivatives are needed.
struct ContinuousSystem {
  int dim_q = 0;
  std::string name;

  std::function<double(const Vec&, const Vec&)> lagrangian;
  /// Optional analytic gradient, returning (dL/dq, dL/dv).
  std::function<std::pair<Vec, Vec>(const Vec&, const Vec&)> gradient;

  int dim_constraint = 0;  ///< m; 0 means unconstrained
  std::function<Vec(const Vec&, const Vec&)> constraint;
  /// Optional analytic constraint Jacobians, returning (dg/dq, dg/dv).
  std::function<std::pair<Mat, Mat>(const Vec&, const Vec&)>
      constraint_jacobian;

  VariationRule variation_rule = VariationRule::chetaev;
  /// Required iff variation_rule == explicit_annihilator: m x n rows
  /// annihilating the admissible variations at (q, v).
  std::function<Mat(const Vec&, const Vec&)> annihilator_rows;

  std::vector<AffineGenerator> generators;

  /// Optional smooth basis fields of the velocity distribution ker dg/dv,
  /// as functions of q (n - m fields). Used by the involutivity diagnostic;
  /// a generic SVD null space is not a smooth selection, so these must be
  /// supplied explicitly where available.
  std::vector<std::function<Vec(const Vec&)>> distribution_fields;

  bool constrained() const { return dim_constraint > 0; }
};

// ---------------------------------------------------------------------------
// Evaluation (with domain checks and finite-difference fallbacks)
// ---------------------------------------------------------------------------

/// L(q, v); throws DomainError on non-finite values or size mismatch.
double eval_lagrangian(const ContinuousSystem& sys, const Vec& q, const Vec& v);

/// (dL/dq, dL/dv): analytic if registered, else 4th-order central FD.
std::pair<Vec, Vec> eval_gradient(const ContinuousSystem& sys, const Vec& q,
                                  const Vec& v);

/// g(q, v); throws UnsupportedError when the system is unconstrained.
Vec eval_constraint(const ContinuousSystem& sys, const Vec& q, const Vec& v);

/// (dg/dq, dg/dv): analytic if registered, else central FD per column.
std::pair<Mat, Mat> eval_constraint_jacobian(const ContinuousSystem& sys,
                                             const Vec& q, const Vec& v);

/// Annihilator rows of the admissible variation space at (q, v): m x n.
/// Chetaev: dg/dv. Throws UnsupportedError for unconstrained systems and
/// RegularityError when the rows are rank deficient.
Mat variation_annihilator(const ContinuousSystem& sys, const Vec& q,
                          const Vec& v);

/// Tangent lift of generator `index` at (q, v): (base, fiber) components.
std::pair<Vec, Vec> generator_lift(const ContinuousSystem& sys, int index,
                                   const Vec& q, const Vec& v);

/// True iff ||g(q, v)||_inf <= tol (unconstrained systems are feasible).
bool is_feasible(const ContinuousSystem& sys, const Vec& q, const Vec& v,
                 double tol = 1e-9);

/// Project v onto the constraint manifold over fixed q (Newton in v,
/// minimum-norm correction). Identity for unconstrained systems.
Vec project_feasible(const ContinuousSystem& sys, const Vec& q, const Vec& v,
                     double tol = 1e-12);

/// Unconstrained Euler-Lagrange acceleration a(q, v) solving
/// (d2L/dv2) a = dL/dq - (d2L/dvdq) v. Hessian blocks by central FD of the
/// gradient. Throws RegularityError when the velocity Hessian is singular.
Vec el_acceleration(const ContinuousSystem& sys, const Vec& q, const Vec& v);

// ---------------------------------------------------------------------------
// Built-in catalogue
// ---------------------------------------------------------------------------

/// Construct a named built-in system.
///
///   free_particle [n]        L = |v|^2/2, translation generators      (n>=1)
///   harmonic [n]             L = |v|^2/2 - |q|^2/2, rotations for n>=2
///   pendulum                 L = v^2/2 + cos q
///   nonholonomic_particle    n=3, L = |v|^2/2, g = v_z - q_y v_x
///   chaplygin_sleigh [m,I,a] knife-edge g = -v_x sin th + v_y cos th
///   degenerate               n=1, L = v (planted regularity failure)
///
/// Unlisted params default as documented in the README.
ContinuousSystem builtin_system(const std::string& name,
                                const std::vector<double>& params = {});

}  // namespace dmech
