#include "dmech/discrete_form.hpp"

#include <cmath>

#include "dmech/errors.hpp"
#include "dmech/fd.hpp"

namespace dmech {

namespace {

/// Boundary Jacobians and lift matrices of a state, factored once.
struct Frame {
  Mat jm, jp;  // n x 2n
  Mat lm, lp;  // 2n x n
};

Frame frame(const DiscreteSystem& d, const State& s) {
  Frame f;
  std::tie(f.jm, f.jp) = boundary_jacobians(*d.scheme, s);
  const int n = d.dim();
  Mat K(2 * n, 2 * n);
  K << f.jm, f.jp;
  Eigen::FullPivLU<Mat> lu(K);
  if (!lu.isInvertible())
    throw RegularityError("stacked boundary Jacobian is singular");
  Mat rhs = Mat::Zero(2 * n, 2 * n);
  rhs.topLeftCorner(n, n) = Mat::Identity(n, n);
  rhs.bottomRightCorner(n, n) = Mat::Identity(n, n);
  const Mat lifts = lu.solve(rhs);
  f.lm = lifts.leftCols(n);
  f.lp = lifts.rightCols(n);
  return f;
}

/// Quadrature of dL pulled through the segment sensitivities. With an
/// analytic gradient this is precisely the chain rule for d(L_d).
Vec quadrature_sigma(const DiscreteSystem& d, const State& s) {
  const int n = d.dim();
  const double h = d.h();
  const double a_minus = d.scheme->alpha_minus();
  Vec out = Vec::Zero(2 * n);
  for (std::size_t i = 0; i < d.quadrature.nodes.size(); ++i) {
    const double t = a_minus + d.quadrature.nodes[i] * h;
    const SegmentPoint pt = d.scheme->eval(s.q, s.v, t);
    const SegmentSensitivity sens = d.scheme->sensitivity(s.q, s.v, t);
    auto [lq, lv] = eval_gradient(d.system, pt.c, pt.c_dot);
    out += h * d.quadrature.weights[i] *
           (sens.dc.transpose() * lq + sens.dc_dot.transpose() * lv);
  }
  return out;
}

double fd_step_for_sigma(const DiscreteSystem& d) {
  return sigma_is_fd(d) ? fd::step_stacked : fd::step_first;
}

}  // namespace

double discrete_lagrangian(const DiscreteSystem& d, const State& s) {
  const double h = d.h();
  const double a_minus = d.scheme->alpha_minus();
  double acc = 0.0;
  for (std::size_t i = 0; i < d.quadrature.nodes.size(); ++i) {
    const double t = a_minus + d.quadrature.nodes[i] * h;
    const SegmentPoint pt = d.scheme->eval(s.q, s.v, t);
    acc += d.quadrature.weights[i] * eval_lagrangian(d.system, pt.c, pt.c_dot);
  }
  return h * acc;
}

bool sigma_is_fd(const DiscreteSystem& d) {
  return !static_cast<bool>(d.system.gradient);
}

Vec sigma_d(const DiscreteSystem& d, const State& s) {
  if (d.one_form_mode == OneFormMode::pulled_back || d.system.gradient)
    return quadrature_sigma(d, s);
  // exact_differential without an analytic gradient: differentiate the
  // scalar L_d directly.
  const int n = d.dim();
  return fd::gradient4(
      [&](const Vec& x) {
        return discrete_lagrangian(d, State{x.head(n), x.tail(n)});
      },
      stack(s.q, s.v), fd::step_stacked);
}

Vec theta_plus(const DiscreteSystem& d, const State& s) {
  const Frame f = frame(d, s);
  return (f.lp * f.jp).transpose() * sigma_d(d, s);
}

Vec theta_minus(const DiscreteSystem& d, const State& s) {
  const Frame f = frame(d, s);
  return -(f.lm * f.jm).transpose() * sigma_d(d, s);
}

Vec legendre_plus(const DiscreteSystem& d, const State& s) {
  return frame(d, s).lp.transpose() * sigma_d(d, s);
}

Vec legendre_minus(const DiscreteSystem& d, const State& s) {
  return -frame(d, s).lm.transpose() * sigma_d(d, s);
}

Vec delta_sigma(const DiscreteSystem& d, const State& v, const State& w) {
  if (!adjacent(*d.scheme, v, w))
    throw AdjacencyError("delta_sigma requires adjacent states");
  return legendre_plus(d, v) - legendre_minus(d, w);
}

double momentum(const DiscreteSystem& d, const State& s,
                const AffineGenerator& gen, Side side) {
  if (side == Side::plus)
    return legendre_plus(d, s).dot(gen.base(boundary_plus(*d.scheme, s)));
  return legendre_minus(d, s).dot(gen.base(boundary_minus(*d.scheme, s)));
}

double omega(const DiscreteSystem& d, const State& s, const Vec& dv,
             const Vec& dw, Side side) {
  const int n = d.dim();
  const Vec x0 = stack(s.q, s.v);
  auto theta = [&](const Vec& x) {
    const State t{x.head(n), x.tail(n)};
    return side == Side::plus ? theta_plus(d, t) : theta_minus(d, t);
  };
  const double rel = fd_step_for_sigma(d);
  const double a = fd::directional_scalar(
      [&](const Vec& x) { return theta(x).dot(dw); }, x0, dv, rel);
  const double b = fd::directional_scalar(
      [&](const Vec& x) { return theta(x).dot(dv); }, x0, dw, rel);
  return a - b;
}

double dpm_bilinear(const DiscreteSystem& d, const State& s, const Vec& dq,
                    const Vec& dq_tilde) {
  const int n = d.dim();
  const Vec x0 = stack(s.q, s.v);
  const Vec dir = lift_plus(*d.scheme, s, dq_tilde);
  return fd::directional_scalar(
      [&](const Vec& x) {
        const State t{x.head(n), x.tail(n)};
        return -legendre_minus(d, t).dot(dq);
      },
      x0, dir, fd_step_for_sigma(d));
}

double dmp_bilinear(const DiscreteSystem& d, const State& s, const Vec& dq,
                    const Vec& dq_tilde) {
  const int n = d.dim();
  const Vec x0 = stack(s.q, s.v);
  const Vec dir = lift_minus(*d.scheme, s, dq);
  return fd::directional_scalar(
      [&](const Vec& x) {
        const State t{x.head(n), x.tail(n)};
        return legendre_plus(d, t).dot(dq_tilde);
      },
      x0, dir, fd_step_for_sigma(d));
}

// ---------------------------------------------------------------------------
// Discrete constraint
// ---------------------------------------------------------------------------

Vec discrete_constraint(const DiscreteSystem& d, const State& s) {
  if (d.constraint_anchor == ConstraintAnchor::anchor_point)
    return eval_constraint(d.system, s.q, s.v);
  const double a_minus = d.scheme->alpha_minus();
  Vec out = Vec::Zero(d.dim_constraint());
  for (std::size_t i = 0; i < d.quadrature.nodes.size(); ++i) {
    const double t = a_minus + d.quadrature.nodes[i] * d.h();
    const SegmentPoint pt = d.scheme->eval(s.q, s.v, t);
    out += d.quadrature.weights[i] * eval_constraint(d.system, pt.c, pt.c_dot);
  }
  return out;
}

Mat discrete_constraint_jacobian(const DiscreteSystem& d, const State& s) {
  const int n = d.dim();
  if (d.constraint_anchor == ConstraintAnchor::anchor_point) {
    auto [gq, gv] = eval_constraint_jacobian(d.system, s.q, s.v);
    Mat J(d.dim_constraint(), 2 * n);
    J << gq, gv;
    return J;
  }
  const double a_minus = d.scheme->alpha_minus();
  Mat J = Mat::Zero(d.dim_constraint(), 2 * n);
  for (std::size_t i = 0; i < d.quadrature.nodes.size(); ++i) {
    const double t = a_minus + d.quadrature.nodes[i] * d.h();
    const SegmentPoint pt = d.scheme->eval(s.q, s.v, t);
    const SegmentSensitivity sens = d.scheme->sensitivity(s.q, s.v, t);
    auto [gq, gv] = eval_constraint_jacobian(d.system, pt.c, pt.c_dot);
    J += d.quadrature.weights[i] * (gq * sens.dc + gv * sens.dc_dot);
  }
  return J;
}

Mat annihilator_at(const DiscreteSystem& d, const State& s) {
  return variation_annihilator(d.system, boundary_plus(*d.scheme, s), s.v);
}

bool feasible(const DiscreteSystem& d, const State& s, double tol) {
  if (!d.system.constrained()) return true;
  if (tol < 0.0) tol = d.feasibility_tol;
  return discrete_constraint(d, s).cwiseAbs().maxCoeff() <= tol;
}

void check_dimension_balance(const DiscreteSystem& d, const State& s) {
  if (!d.system.constrained()) return;
  const int m = d.dim_constraint();
  const Mat Jg = discrete_constraint_jacobian(d, s);
  const auto sv = singular_value_summary(Jg, 1e-8);
  if (!sv.nonsingular)
    throw RegularityError(
        "discrete constraint Jacobian loses rank: constrained fiber "
        "dimension is not " +
        std::to_string(d.dim() - m));
  variation_annihilator(d.system, boundary_plus(*d.scheme, s), s.v);
}

}  // namespace dmech
