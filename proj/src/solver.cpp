#include "dmech/solver.hpp"

#include <cmath>
#include <limits>

#include "dmech/errors.hpp"
#include "dmech/fd.hpp"

namespace dmech {

namespace {

Vec residual_cached(const DiscreteSystem& d, const Vec& b_plus_v,
                    const Vec& legendre_plus_v, const Mat& mu_v,
                    const State& next, const Vec& lambda) {
  const int n = d.dim();
  const int m = d.dim_constraint();
  Vec r(2 * n + m);
  r.head(n) = boundary_minus(*d.scheme, next) - b_plus_v;
  if (m > 0) r.segment(n, m) = discrete_constraint(d, next);
  Vec r3 = legendre_plus_v - legendre_minus(d, next);
  if (m > 0) r3 -= mu_v.transpose() * lambda;
  r.tail(n) = r3;
  return r;
}

}  // namespace

Vec residual(const DiscreteSystem& d, const State& v, const State& next,
             const Vec& lambda) {
  const int m = d.dim_constraint();
  if (lambda.size() != m)
    throw DomainError("multiplier has " + std::to_string(lambda.size()) +
                      " entries, expected " + std::to_string(m));
  const Mat mu = m > 0 ? annihilator_at(d, v) : Mat(0, d.dim());
  return residual_cached(d, boundary_plus(*d.scheme, v), legendre_plus(d, v),
                         mu, next, lambda);
}

State canonical_adjacent(const DiscreteSystem& d, const State& v) {
  const Vec m_plus = boundary_plus(*d.scheme, v);
  if (d.scheme->family() == "linear") {
    State s;
    s.v = v.v;
    s.q = m_plus - d.scheme->alpha_minus() * v.v;
    return s;
  }
  // Continue with the segment's exit velocity and invert for exact adjacency.
  const Vec v_exit = d.scheme->eval(v.q, v.v, d.scheme->alpha_plus()).c_dot;
  return invert_boundaries(*d.scheme, m_plus, Vec(m_plus + d.h() * v_exit));
}

SolutionPair step(const DiscreteSystem& d, const State& v,
                  const SolveOptions& opts) {
  const int n = d.dim();
  const int m = d.dim_constraint();

  // Quantities depending on the fixed state only.
  const Vec b_plus_v = boundary_plus(*d.scheme, v);
  const Vec fpl_v = legendre_plus(d, v);
  const Mat mu_v = m > 0 ? annihilator_at(d, v) : Mat(0, n);

  auto eval_res = [&](const Vec& u) {
    const State next{u.head(n), u.segment(n, n)};
    return residual_cached(d, b_plus_v, fpl_v, mu_v, next, u.tail(m));
  };

  const State guess = canonical_adjacent(d, v);
  Vec u(2 * n + m);
  u << guess.q, guess.v, Vec::Zero(m);

  Vec r = eval_res(u);
  double rnorm = r.cwiseAbs().maxCoeff();
  std::vector<double> history{rnorm};

  Vec u_met;
  double met_norm = std::numeric_limits<double>::infinity();
  bool met = false;
  int updates = 0;
  while (updates < opts.max_iterations) {
    if (rnorm <= opts.tol) {
      if (!opts.polish || met) break;
      met = true;  // remember the accepted iterate, then polish once
      u_met = u;
      met_norm = rnorm;
    }
    const Mat J =
        fd::jacobian(eval_res, u, fd::step_stacked * opts.fd_step_scale);
    Eigen::FullPivLU<Mat> lu(J);
    if (!lu.isInvertible()) {
      if (met) break;  // converged; the polish pass is best-effort
      throw RegularityError(
          "Newton matrix of the discrete equations is singular (system \"" +
          d.system.name + "\"): the discretization is not regular here");
    }
    u -= lu.solve(r);
    r = eval_res(u);
    rnorm = r.cwiseAbs().maxCoeff();
    history.push_back(rnorm);
    ++updates;
  }
  if (met && met_norm < rnorm) {  // polish did not improve; keep the best
    u = u_met;
    rnorm = met_norm;
  }
  if (rnorm > opts.tol)
    throw SolveError("Newton did not reach tol=" + std::to_string(opts.tol) +
                         " in " + std::to_string(updates) + " updates",
                     history);

  SolutionPair out;
  out.v = v;
  out.w = State{u.head(n), u.segment(n, n)};
  out.lambda = u.tail(m);
  out.residual_norm = rnorm;
  out.newton_iterations = updates;
  out.residual_history = std::move(history);
  return out;
}

Trajectory evolve(const DiscreteSystem& d, const State& v0, int steps,
                  const SolveOptions& opts) {
  if (steps < 0) throw DomainError("evolve needs steps >= 0");
  if (!feasible(d, v0))
    throw DomainError("initial state violates the discrete constraint");

  Trajectory traj;
  traj.states.push_back(v0);
  traj.lambdas.push_back(Vec::Zero(d.dim_constraint()));
  traj.newton_iterations.push_back(0);
  traj.residuals.push_back(0.0);

  for (int k = 0; k < steps; ++k) {
    try {
      SolutionPair p = step(d, traj.states.back(), opts);
      traj.states.push_back(p.w);
      traj.lambdas.push_back(p.lambda);
      traj.newton_iterations.push_back(p.newton_iterations);
      traj.residuals.push_back(p.residual_norm);
    } catch (const Error& e) {
      traj.failed = true;
      traj.failure_index = k;
      traj.failure_message = e.what();
      break;
    }
  }
  traj.configurations = reconstruct_configurations(*d.scheme, traj.states);
  return traj;
}

Mat tangent_step(const DiscreteSystem& d, const State& v,
                 const SolveOptions& opts, double fd_step) {
  const int n = d.dim();
  SolveOptions inner = opts;
  inner.tol = std::min(opts.tol, 1e-13);
  inner.polish = true;
  auto f = [&](const Vec& x) {
    const SolutionPair p = step(d, State{x.head(n), x.tail(n)}, inner);
    return stack(p.w.q, p.w.v);
  };
  return fd::jacobian(f, stack(v.q, v.v), fd_step * opts.fd_step_scale);
}

double newton_order_estimate(const std::vector<double>& history,
                             double floor) {
  if (history.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  if (history[1] <= floor)
    return std::numeric_limits<double>::infinity();

  // Usable pairs: both residuals above the rounding floor. A successor at
  // the floor is rounding noise, not contraction, and would drag the fitted
  // slope toward zero, so such pairs are dropped rather than clamped.
  std::vector<std::pair<double, double>> pts;
  for (std::size_t k = 0; k + 1 < history.size(); ++k) {
    if (history[k] <= floor || history[k + 1] <= floor) break;
    pts.emplace_back(std::log(history[k]), std::log(history[k + 1]));
  }
  if (pts.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (pts.size() > 3) pts.erase(pts.begin(), pts.end() - 3);
  if (pts.size() == 1) {
    // One contraction observed: order estimate assuming unit constant
    // (valid when the starting residual is below 1).
    return pts[0].second / pts[0].first;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double k = static_cast<double>(pts.size());
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// Regularity diagnostics
// ---------------------------------------------------------------------------

namespace {

/// Orthonormal basis of the admissible variation space at v (null space of
/// the annihilator rows), full space when unconstrained.
Mat admissible_basis(const DiscreteSystem& d, const State& v) {
  const int n = d.dim();
  const int m = d.dim_constraint();
  if (m == 0) return Mat::Identity(n, n);
  return null_space_basis(annihilator_at(d, v), n - m);
}

/// Orthonormal basis of the constrained minus-vertical space at w:
/// ker J_minus ∩ ker Tg_d (dimension n - m).
Mat constrained_fiber_basis(const DiscreteSystem& d, const State& w) {
  const int n = d.dim();
  const int m = d.dim_constraint();
  const Mat jm = boundary_jacobians(*d.scheme, w).first;
  Mat S(n + m, 2 * n);
  if (m > 0)
    S << jm, discrete_constraint_jacobian(d, w);
  else
    S << jm;
  return null_space_basis(S, n - m);
}

RegularityReport report_from(const Mat& M) {
  RegularityReport out;
  out.matrix = M;
  const auto sv = singular_value_summary(M, 1e-8);
  out.sigma_min = sv.sigma_min;
  out.sigma_max = sv.sigma_max;
  out.condition = sv.condition;
  out.nonsingular = sv.nonsingular;
  return out;
}

}  // namespace

RegularityReport regularity_matrix(const DiscreteSystem& d, const State& v,
                                   const State& w) {
  if (!adjacent(*d.scheme, v, w))
    throw AdjacencyError("regularity_matrix requires an adjacent pair");
  const int r = d.dim() - d.dim_constraint();
  const Mat E = admissible_basis(d, v);
  const Mat W = constrained_fiber_basis(d, w);
  const Mat jp = boundary_jacobians(*d.scheme, w).second;
  const Mat Qt = orthonormalize_columns(jp * W);

  Mat M(r, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j)
      M(i, j) = dpm_bilinear(d, w, E.col(j), Qt.col(i));
  return report_from(M);
}

RegularityReport skew_hessian(const DiscreteSystem& d,
                              const SolutionPair& pair, double solution_tol) {
  const Vec r0 = residual(d, pair.v, pair.w, pair.lambda);
  if (r0.cwiseAbs().maxCoeff() > solution_tol)
    throw AdjacencyError(
        "skew_hessian needs a solution pair (residual " +
        std::to_string(r0.cwiseAbs().maxCoeff()) + ")");

  const int n = d.dim();
  const int r = n - d.dim_constraint();
  const Mat E = admissible_basis(d, pair.v);

  // Paired variation directions (lift at v, lift at w), orthonormalized
  // jointly; the pairing is linear in the generating variation, so the
  // orthonormalized columns are lifts of a transformed basis E_tilde.
  const Mat lp_v = lift_plus_matrix(*d.scheme, pair.v);
  const Mat lm_w = lift_minus_matrix(*d.scheme, pair.w);
  Mat P(4 * n, r);
  P << lp_v * E, lm_w * E;
  Eigen::ColPivHouseholderQR<Mat> qr(P);
  if (qr.rank() < r)
    throw RegularityError("paired variation basis is rank deficient");
  const Mat R = qr.matrixR().topLeftCorner(r, r).triangularView<Eigen::Upper>();
  const Mat E_perm = E * qr.colsPermutation();
  const Mat E_tilde =
      R.transpose()
          .triangularView<Eigen::Lower>()
          .solve(E_perm.transpose())
          .transpose();

  const Mat U = constrained_fiber_basis(d, pair.w);
  const Vec x0 = stack(pair.w.q, pair.w.v);
  const double rel = sigma_is_fd(d) ? fd::step_stacked : fd::step_first;

  // Entry (i, j): derivative of the action-sum pairing against the j-th
  // paired variation along the i-th constrained fiber direction at w. The
  // v-side term of the pairing is constant along these curves and drops
  // out of the difference quotient.
  Mat H(r, r);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) {
      H(i, j) = fd::directional_scalar(
          [&](const Vec& x) {
            const State t{x.head(n), x.tail(n)};
            return -legendre_minus(d, t).dot(E_tilde.col(j));
          },
          x0, U.col(i), rel);
    }
  }
  return report_from(H);
}

}  // namespace dmech
