#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dmech/linalg.hpp"

namespace dmech {

/// Split of the step h around the anchor time t = 0:
/// the segment runs over [alpha_minus, alpha_plus] with
/// alpha_plus = gamma h, alpha_minus = -(1 - gamma) h.
struct Bias {
  double gamma = 0.5;
  double alpha_plus(double h) const { return gamma * h; }
  double alpha_minus(double h) const { return -(1.0 - gamma) * h; }
};

/// A point of the discretized velocity phase space: the anchor pair (q, v)
/// generating a curve segment.
struct State {
  Vec q;
  Vec v;
};

/// Configuration and velocity of the segment curve at parameter t.
struct SegmentPoint {
  Vec c;
  Vec c_dot;
};

/// Derivatives of (c(t), c_dot(t)) with respect to the generating state:
/// each matrix is n x 2n with columns ordered (q-block, v-block).
struct SegmentSensitivity {
  Mat dc;
  Mat dc_dot;
};

/// A family of curve segments c_{(q,v)} : [alpha_minus, alpha_plus] -> Q,
/// one through every state, tangent to (q, v) at t = 0. The step h is fixed
/// per instance; with_step() re-instantiates the same family at another h.
class SegmentScheme {
 public:
  SegmentScheme(Bias bias, double h);
  virtual ~SegmentScheme() = default;

  double h() const { return h_; }
  const Bias& bias() const { return bias_; }
  double alpha_plus() const { return bias_.alpha_plus(h_); }
  double alpha_minus() const { return bias_.alpha_minus(h_); }

  virtual std::string family() const = 0;
  virtual SegmentPoint eval(const Vec& q, const Vec& v, double t) const = 0;
  virtual SegmentSensitivity sensitivity(const Vec& q, const Vec& v,
                                         double t) const = 0;
  virtual std::unique_ptr<SegmentScheme> with_step(double h) const = 0;

 protected:
  Bias bias_;
  double h_;
};

/// Straight-line segments c(t) = q + t v.
class LinearSegment final : public SegmentScheme {
 public:
  LinearSegment(Bias bias, double h) : SegmentScheme(bias, h) {}
  std::string family() const override { return "linear"; }
  SegmentPoint eval(const Vec& q, const Vec& v, double t) const override;
  SegmentSensitivity sensitivity(const Vec& q, const Vec& v,
                                 double t) const override;
  std::unique_ptr<SegmentScheme> with_step(double h) const override;
};

/// Segments traced by numerically flowing a second-order field
/// q'' = a(q, q') from the anchor state, by a classical one-step method
/// (negated steps integrate backward to reach t < 0). Sensitivities are
/// propagated variationally through the same stages, using the analytic
/// field Jacobian when given and central differences otherwise.
class FlowSegment final : public SegmentScheme {
 public:
  enum class Method { rk4, midpoint };
  using Accel = std::function<Vec(const Vec&, const Vec&)>;
  /// Optional analytic Jacobian of the field: (da/dq, da/dv).
  using AccelJacobian =
      std::function<std::pair<Mat, Mat>(const Vec&, const Vec&)>;

  FlowSegment(Bias bias, double h, Accel accel, Method method = Method::rk4,
              int substeps = 1, AccelJacobian accel_jacobian = nullptr);

  std::string family() const override { return "flow"; }
  Method method() const { return method_; }
  int substeps() const { return substeps_; }
  SegmentPoint eval(const Vec& q, const Vec& v, double t) const override;
  SegmentSensitivity sensitivity(const Vec& q, const Vec& v,
                                 double t) const override;
  std::unique_ptr<SegmentScheme> with_step(double h) const override;

 private:
  Accel accel_;
  Method method_;
  int substeps_;
  AccelJacobian accel_jacobian_;

  /// Flow (q, v) to parameter t; optionally accumulate the 2n x 2n tangent
  /// matrix of the flow map alongside.
  void flow(const Vec& q, const Vec& v, double t, Vec& q_out, Vec& v_out,
            Mat* tangent) const;
};

// ---------------------------------------------------------------------------
// Boundary structure
// ---------------------------------------------------------------------------

/// Backward endpoint of the segment through s.
Vec boundary_minus(const SegmentScheme& d, const State& s);
/// Forward endpoint of the segment through s.
Vec boundary_plus(const SegmentScheme& d, const State& s);

/// Derivatives (J_minus, J_plus) of the endpoints with respect to the
/// anchor coordinates; each is n x 2n.
std::pair<Mat, Mat> boundary_jacobians(const SegmentScheme& d, const State& s);

/// [J_minus; J_plus] stacked into 2n x 2n; its invertibility is the
/// defining nondegeneracy of the discretization at s.
Mat stacked_boundary_jacobian(const SegmentScheme& d, const State& s);

/// The unique state whose segment runs from m_minus to m_plus
/// (Newton for flow segments). Throws InversionError on failure.
State invert_boundaries(const SegmentScheme& d, const Vec& m_minus,
                        const Vec& m_plus, double tol = 1e-12);

/// The discrete zero vector over m: the state with both endpoints at m.
State zero_section(const SegmentScheme& d, const Vec& m);

/// Finite-difference state of a configuration pair (alias of
/// invert_boundaries, named for its role in trajectory reconstruction).
State discrete_derivative(const SegmentScheme& d, const Vec& m0, const Vec& m1);

/// Splitting of a tangent vector at s into the two vertical distributions:
/// minus_part ∈ ker J_plus, plus_part ∈ ker J_minus, summing to the input.
struct Decomposition {
  Vec minus_part;
  Vec plus_part;
};
Decomposition decompose(const SegmentScheme& d, const State& s, const Vec& dv);

/// Lift matrices: columns of lift_plus_matrix span ker J_minus with
/// J_plus * lift_plus_matrix = I (and symmetrically for minus). These are
/// the unique vertical preimages of configuration variations.
Mat lift_plus_matrix(const SegmentScheme& d, const State& s);
Mat lift_minus_matrix(const SegmentScheme& d, const State& s);
Vec lift_plus(const SegmentScheme& d, const State& s, const Vec& dq);
Vec lift_minus(const SegmentScheme& d, const State& s, const Vec& dq);

/// True iff boundary_plus(a) == boundary_minus(b) within tol (relative to
/// the junction magnitude).
bool adjacent(const SegmentScheme& d, const State& a, const State& b,
              double tol = 1e-8);

/// Push the plus-part of dv at s to the adjacent successor state w:
/// the minus-lift at w of the forward boundary image of dv.
/// Throws AdjacencyError when the states do not share a junction.
Vec transport(const SegmentScheme& d, const State& s, const State& w,
              const Vec& dv);

/// Configuration sequence m_0 .. m_{N+1} traced by a chain of states
/// (endpoints of each segment; consecutive states must be adjacent).
std::vector<Vec> reconstruct_configurations(const SegmentScheme& d,
                                            const std::vector<State>& states);

}  // namespace dmech
