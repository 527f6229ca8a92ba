#include "dmech/segments.hpp"

#include <cmath>

#include "dmech/errors.hpp"
#include "dmech/fd.hpp"

namespace dmech {

SegmentScheme::SegmentScheme(Bias bias, double h) : bias_(bias), h_(h) {
  if (!(h > 0.0)) throw DomainError("segment step h must be positive");
  if (!(bias.gamma >= 0.0 && bias.gamma <= 1.0))
    throw DomainError("bias gamma must lie in [0, 1]");
}

// ---------------------------------------------------------------------------
// Linear segments
// ---------------------------------------------------------------------------

SegmentPoint LinearSegment::eval(const Vec& q, const Vec& v, double t) const {
  return {q + t * v, v};
}

SegmentSensitivity LinearSegment::sensitivity(const Vec& q, const Vec&,
                                              double t) const {
  const int n = static_cast<int>(q.size());
  SegmentSensitivity s;
  s.dc.resize(n, 2 * n);
  s.dc << Mat::Identity(n, n), t * Mat::Identity(n, n);
  s.dc_dot.resize(n, 2 * n);
  s.dc_dot << Mat::Zero(n, n), Mat::Identity(n, n);
  return s;
}

std::unique_ptr<SegmentScheme> LinearSegment::with_step(double h) const {
  return std::make_unique<LinearSegment>(bias_, h);
}

// ---------------------------------------------------------------------------
// Flow segments
// ---------------------------------------------------------------------------

FlowSegment::FlowSegment(Bias bias, double h, Accel accel, Method method,
                         int substeps, AccelJacobian accel_jacobian)
    : SegmentScheme(bias, h),
      accel_(std::move(accel)),
      method_(method),
      substeps_(substeps),
      accel_jacobian_(std::move(accel_jacobian)) {
  if (substeps_ < 1) throw DomainError("flow substeps must be >= 1");
  if (!accel_) throw DomainError("flow segment needs a second-order field");
}

namespace {

/// Field of the first-order system y = (q, v): f(y) = (v, a(q, v)).
struct FirstOrderField {
  const FlowSegment::Accel& accel;
  const FlowSegment::AccelJacobian& accel_jacobian;

  Vec operator()(const Vec& y) const {
    const int n = static_cast<int>(y.size()) / 2;
    Vec f(2 * n);
    f.head(n) = y.tail(n);
    f.tail(n) = accel(y.head(n), y.tail(n));
    if (!f.allFinite()) throw DomainError("flow field is not finite");
    return f;
  }

  /// Jacobian [[0, I], [da/dq, da/dv]] — analytic when registered,
  /// central FD otherwise.
  Mat jacobian(const Vec& y) const {
    const int n = static_cast<int>(y.size()) / 2;
    Mat J = Mat::Zero(2 * n, 2 * n);
    J.topRightCorner(n, n) = Mat::Identity(n, n);
    if (accel_jacobian) {
      auto [aq, av] = accel_jacobian(y.head(n), y.tail(n));
      J.bottomLeftCorner(n, n) = aq;
      J.bottomRightCorner(n, n) = av;
    } else {
      const Mat D = fd::jacobian(
          [&](const Vec& z) { return accel(z.head(n), z.tail(n)); }, y,
          fd::step_stacked);
      J.bottomLeftCorner(n, n) = D.leftCols(n);
      J.bottomRightCorner(n, n) = D.rightCols(n);
    }
    return J;
  }
};

}  // namespace

void FlowSegment::flow(const Vec& q, const Vec& v, double t, Vec& q_out,
                       Vec& v_out, Mat* tangent) const {
  const int n = static_cast<int>(q.size());
  Vec y = stack(q, v);
  Mat M;
  if (tangent) M = Mat::Identity(2 * n, 2 * n);

  if (t != 0.0) {
    const FirstOrderField f{accel_, accel_jacobian_};
    // Enough substeps to keep the local step at most h/substeps in size;
    // signed steps integrate backward for t < 0.
    const int steps =
        std::max(1, static_cast<int>(std::ceil(substeps_ * std::abs(t) / h_ -
                                               1e-12)));
    const double s = t / steps;
    for (int k = 0; k < steps; ++k) {
      if (method_ == Method::rk4) {
        const Vec k1 = f(y);
        const Vec k2 = f(Vec(y + 0.5 * s * k1));
        const Vec k3 = f(Vec(y + 0.5 * s * k2));
        const Vec k4 = f(Vec(y + s * k3));
        if (tangent) {
          const Mat m1 = f.jacobian(y) * M;
          const Mat m2 = f.jacobian(Vec(y + 0.5 * s * k1)) *
                         (M + 0.5 * s * m1);
          const Mat m3 = f.jacobian(Vec(y + 0.5 * s * k2)) *
                         (M + 0.5 * s * m2);
          const Mat m4 = f.jacobian(Vec(y + s * k3)) * (M + s * m3);
          M += (s / 6.0) * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
        }
        y += (s / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      } else {  // explicit midpoint
        const Vec k1 = f(y);
        const Vec ymid = y + 0.5 * s * k1;
        const Vec k2 = f(ymid);
        if (tangent) {
          const Mat m1 = f.jacobian(y) * M;
          const Mat m2 = f.jacobian(ymid) * (M + 0.5 * s * m1);
          M += s * m2;
        }
        y += s * k2;
      }
    }
  }
  q_out = y.head(n);
  v_out = y.tail(n);
  if (tangent) *tangent = M;
}

SegmentPoint FlowSegment::eval(const Vec& q, const Vec& v, double t) const {
  Vec qt, vt;
  flow(q, v, t, qt, vt, nullptr);
  return {qt, vt};
}

SegmentSensitivity FlowSegment::sensitivity(const Vec& q, const Vec& v,
                                            double t) const {
  const int n = static_cast<int>(q.size());
  Vec qt, vt;
  Mat M;
  flow(q, v, t, qt, vt, &M);
  SegmentSensitivity s;
  s.dc = M.topRows(n);
  s.dc_dot = M.bottomRows(n);
  return s;
}

std::unique_ptr<SegmentScheme> FlowSegment::with_step(double h) const {
  return std::make_unique<FlowSegment>(bias_, h, accel_, method_, substeps_,
                                       accel_jacobian_);
}

// ---------------------------------------------------------------------------
// Boundary structure
// ---------------------------------------------------------------------------

Vec boundary_minus(const SegmentScheme& d, const State& s) {
  return d.eval(s.q, s.v, d.alpha_minus()).c;
}

Vec boundary_plus(const SegmentScheme& d, const State& s) {
  return d.eval(s.q, s.v, d.alpha_plus()).c;
}

std::pair<Mat, Mat> boundary_jacobians(const SegmentScheme& d,
                                       const State& s) {
  return {d.sensitivity(s.q, s.v, d.alpha_minus()).dc,
          d.sensitivity(s.q, s.v, d.alpha_plus()).dc};
}

Mat stacked_boundary_jacobian(const SegmentScheme& d, const State& s) {
  auto [jm, jp] = boundary_jacobians(d, s);
  Mat K(jm.rows() + jp.rows(), jm.cols());
  K << jm, jp;
  return K;
}

namespace {

/// Shared factorization of the stacked boundary Jacobian.
struct BoundaryFactor {
  Mat jm, jp;
  Eigen::FullPivLU<Mat> lu;
};

BoundaryFactor boundary_factor(const SegmentScheme& d, const State& s) {
  BoundaryFactor f;
  std::tie(f.jm, f.jp) = boundary_jacobians(d, s);
  Mat K(f.jm.rows() * 2, f.jm.cols());
  K << f.jm, f.jp;
  f.lu.compute(K);
  if (!f.lu.isInvertible())
    throw RegularityError(
        "stacked boundary Jacobian is singular at this state");
  return f;
}

Mat lift_from_factor(const BoundaryFactor& f, bool plus) {
  const int n = static_cast<int>(f.jm.rows());
  Mat rhs = Mat::Zero(2 * n, n);
  if (plus)
    rhs.bottomRows(n) = Mat::Identity(n, n);
  else
    rhs.topRows(n) = Mat::Identity(n, n);
  return f.lu.solve(rhs);
}

}  // namespace

State invert_boundaries(const SegmentScheme& d, const Vec& m_minus,
                        const Vec& m_plus, double tol) {
  if (m_minus.size() != m_plus.size())
    throw DomainError("boundary points have mismatched dimensions");
  const double scale =
      std::max({1.0, m_minus.cwiseAbs().maxCoeff(),
                m_plus.cwiseAbs().maxCoeff()});

  // Linear-segment closed form doubles as the Newton guess for flows.
  State s;
  s.v = (m_plus - m_minus) / d.h();
  s.q = m_minus - d.alpha_minus() * s.v;
  if (d.family() == "linear") return s;

  double res_norm = std::numeric_limits<double>::infinity();
  bool polished = false;
  for (int it = 0; it < 50; ++it) {
    Vec r(2 * s.q.size());
    r << boundary_minus(d, s) - m_minus, boundary_plus(d, s) - m_plus;
    res_norm = r.cwiseAbs().maxCoeff();
    if (res_norm <= tol * scale) {
      if (polished) break;
      polished = true;  // one extra iteration at the solution
    }
    const auto f = boundary_factor(d, s);
    const Vec delta = f.lu.solve(r);
    s.q -= delta.head(s.q.size());
    s.v -= delta.tail(s.v.size());
  }
  {
    Vec r(2 * s.q.size());
    r << boundary_minus(d, s) - m_minus, boundary_plus(d, s) - m_plus;
    res_norm = r.cwiseAbs().maxCoeff();
  }
  if (res_norm > tol * scale)
    throw InversionError("boundary inversion stalled at residual " +
                             std::to_string(res_norm),
                         res_norm);
  return s;
}

State zero_section(const SegmentScheme& d, const Vec& m) {
  return invert_boundaries(d, m, m);
}

State discrete_derivative(const SegmentScheme& d, const Vec& m0,
                          const Vec& m1) {
  return invert_boundaries(d, m0, m1);
}

Decomposition decompose(const SegmentScheme& d, const State& s,
                        const Vec& dv) {
  if (dv.size() != 2 * s.q.size())
    throw DomainError("tangent vector has wrong dimension");
  const auto f = boundary_factor(d, s);
  const Mat lm = lift_from_factor(f, false);
  const Mat lp = lift_from_factor(f, true);
  Decomposition out;
  // J_minus annihilates the plus-lift columns and is a left inverse of the
  // minus-lift, so the coefficients of the split come straight from the
  // boundary Jacobians.
  out.minus_part = lm * (f.jm * dv);
  out.plus_part = lp * (f.jp * dv);
  return out;
}

Mat lift_plus_matrix(const SegmentScheme& d, const State& s) {
  return lift_from_factor(boundary_factor(d, s), true);
}

Mat lift_minus_matrix(const SegmentScheme& d, const State& s) {
  return lift_from_factor(boundary_factor(d, s), false);
}

Vec lift_plus(const SegmentScheme& d, const State& s, const Vec& dq) {
  return lift_plus_matrix(d, s) * dq;
}

Vec lift_minus(const SegmentScheme& d, const State& s, const Vec& dq) {
  return lift_minus_matrix(d, s) * dq;
}

bool adjacent(const SegmentScheme& d, const State& a, const State& b,
              double tol) {
  const Vec ja = boundary_plus(d, a);
  const Vec jb = boundary_minus(d, b);
  const double scale = std::max(1.0, ja.cwiseAbs().maxCoeff());
  return (ja - jb).cwiseAbs().maxCoeff() <= tol * scale;
}

Vec transport(const SegmentScheme& d, const State& s, const State& w,
              const Vec& dv) {
  if (!adjacent(d, s, w))
    throw AdjacencyError("transport requires adjacent states");
  const auto f = boundary_factor(d, s);
  return lift_minus(d, w, f.jp * dv);
}

std::vector<Vec> reconstruct_configurations(const SegmentScheme& d,
                                            const std::vector<State>& states) {
  std::vector<Vec> ms;
  ms.reserve(states.size() + 1);
  for (std::size_t k = 0; k < states.size(); ++k) {
    if (k + 1 < states.size() && !adjacent(d, states[k], states[k + 1]))
      throw AdjacencyError("states " + std::to_string(k) + " and " +
                           std::to_string(k + 1) + " are not adjacent");
    ms.push_back(boundary_minus(d, states[k]));
  }
  if (!states.empty()) ms.push_back(boundary_plus(d, states.back()));
  return ms;
}

}  // namespace dmech
