#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "dmech/segments.hpp"
#include "dmech/system.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace dmech;
using namespace dmech::testing;

namespace {

FlowSegment::Accel zero_field() {
  return [](const Vec& q, const Vec&) { return Vec(Vec::Zero(q.size())); };
}

FlowSegment::Accel pendulum_field() {
  return [](const Vec& q, const Vec&) {
    Vec a(1);
    a(0) = -std::sin(q(0));
    return a;
  };
}

FlowSegment::Accel spring_field() {
  return [](const Vec& q, const Vec&) { return Vec(-q); };
}

/// Schemes exercised by the property loops, with the state dimension each
/// expects.
std::vector<std::pair<std::shared_ptr<SegmentScheme>, int>> property_schemes() {
  std::vector<std::pair<std::shared_ptr<SegmentScheme>, int>> out;
  out.push_back({std::make_shared<LinearSegment>(Bias{0.5}, 0.1), 1});
  out.push_back({std::make_shared<LinearSegment>(Bias{0.0}, 0.1), 3});
  out.push_back({std::make_shared<LinearSegment>(Bias{1.0}, 0.2), 2});
  out.push_back({std::make_shared<FlowSegment>(Bias{0.5}, 0.1, pendulum_field(),
                                               FlowSegment::Method::rk4, 1),
                 1});
  out.push_back({std::make_shared<FlowSegment>(Bias{0.3}, 0.1, pendulum_field(),
                                               FlowSegment::Method::midpoint, 2),
                 1});
  out.push_back({std::make_shared<FlowSegment>(Bias{0.5}, 0.05, spring_field(),
                                               FlowSegment::Method::rk4, 1),
                 2});
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

TEST_CASE("bias splits the step around the anchor") {
  const Bias b{0.3};
  CHECK(b.alpha_plus(0.1) == doctest::Approx(0.03));
  CHECK(b.alpha_minus(0.1) == doctest::Approx(-0.07));
  CHECK(b.alpha_plus(0.1) - b.alpha_minus(0.1) ==
        doctest::Approx(0.1).epsilon(1e-15));
  CHECK(Bias{0.5}.alpha_plus(0.0) == 0.0);
  CHECK(Bias{0.5}.alpha_minus(0.0) == 0.0);
  CHECK(Bias{1.0}.alpha_minus(0.1) == 0.0);

  CHECK_THROWS_AS(LinearSegment(Bias{0.5}, 0.0), DomainError);
  CHECK_THROWS_AS(LinearSegment(Bias{0.5}, -0.1), DomainError);
  CHECK_THROWS_AS(LinearSegment(Bias{1.5}, 0.1), DomainError);
  CHECK_THROWS_AS(FlowSegment(Bias{0.5}, 0.1, zero_field(),
                              FlowSegment::Method::rk4, 0),
                  DomainError);
  CHECK_THROWS_AS(FlowSegment(Bias{0.5}, 0.1, nullptr), DomainError);
}

TEST_CASE("segments are tangent to their state at the anchor") {
  const LinearSegment lin(Bias{0.5}, 0.1);
  const FlowSegment flow(Bias{0.5}, 0.1, pendulum_field());
  const Vec q = vec1(0.7), v = vec1(-0.4);
  for (const SegmentScheme* s :
       {static_cast<const SegmentScheme*>(&lin),
        static_cast<const SegmentScheme*>(&flow)}) {
    const SegmentPoint p = s->eval(q, v, 0.0);
    CHECK((p.c - q).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((p.c_dot - v).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("with_step reinstantiates the family") {
  const LinearSegment lin(Bias{0.25}, 0.1);
  const auto finer = lin.with_step(0.05);
  CHECK(finer->h() == doctest::Approx(0.05));
  CHECK(finer->family() == "linear");
  CHECK(finer->bias().gamma == doctest::Approx(0.25));

  const FlowSegment flow(Bias{0.5}, 0.1, pendulum_field(),
                         FlowSegment::Method::midpoint, 3);
  const auto refined = flow.with_step(0.025);
  CHECK(refined->family() == "flow");
  CHECK(refined->h() == doctest::Approx(0.025));
}

// ---------------------------------------------------------------------------
// Boundary maps
// ---------------------------------------------------------------------------

TEST_CASE("segment endpoints") {
  const LinearSegment centered(Bias{0.5}, 0.1);
  const State s{vec2(1, 0), vec2(0, 2)};
  CHECK((boundary_minus(centered, s) - vec2(1, -0.1)).cwiseAbs().maxCoeff() <=
        1e-15);
  CHECK((boundary_plus(centered, s) - vec2(1, 0.1)).cwiseAbs().maxCoeff() <=
        1e-15);

  const LinearSegment forward(Bias{1.0}, 0.1);
  const State s2{vec2(0, 0), vec2(1, 2)};
  CHECK(boundary_minus(forward, s2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((boundary_plus(forward, s2) - vec2(0.1, 0.2)).cwiseAbs().maxCoeff() <=
        1e-15);

  const FlowSegment coasting(Bias{0.5}, 0.1, zero_field());
  CHECK((boundary_minus(coasting, s) - vec2(1, -0.1)).cwiseAbs().maxCoeff() <=
        1e-13);
  CHECK((boundary_plus(coasting, s) - vec2(1, 0.1)).cwiseAbs().maxCoeff() <=
        1e-13);
}

TEST_CASE("boundary derivatives") {
  const LinearSegment centered(Bias{0.5}, 0.1);
  const State s{vec1(0.3), vec1(-1.0)};
  const auto [jm, jp] = boundary_jacobians(centered, s);
  CHECK(jm(0, 0) == doctest::Approx(1.0));
  CHECK(jm(0, 1) == doctest::Approx(-0.05));
  CHECK(jp(0, 0) == doctest::Approx(1.0));
  CHECK(jp(0, 1) == doctest::Approx(0.05));

  // Zero-field flow reproduces the straight-line derivatives.
  const FlowSegment coasting(Bias{0.5}, 0.1, zero_field());
  const auto [fm, fp] = boundary_jacobians(coasting, s);
  CHECK((fm - jm).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((fp - jp).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("stacked boundary determinant grows like h^n for straight lines") {
  std::mt19937_64 rng(3);
  const double h = 0.2;
  for (int n = 1; n <= 3; ++n) {
    const LinearSegment seg(Bias{0.3}, h);
    const State s = random_state(rng, n, 2.0);
    const double det = stacked_boundary_jacobian(seg, s).determinant();
    CHECK(std::abs(det) == doctest::Approx(std::pow(h, n)).epsilon(1e-12));
  }
}

TEST_CASE("boundary inversion") {
  const LinearSegment forward(Bias{1.0}, 0.1);
  const State a = invert_boundaries(forward, vec2(0, 0), vec2(0.1, 0.2));
  CHECK((a.q - vec2(0, 0)).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((a.v - vec2(1, 2)).cwiseAbs().maxCoeff() <= 1e-13);

  const LinearSegment centered(Bias{0.5}, 0.1);
  const State b = invert_boundaries(centered, vec2(1, -0.1), vec2(1, 0.1));
  CHECK((b.q - vec2(1, 0)).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((b.v - vec2(0, 2)).cwiseAbs().maxCoeff() <= 1e-13);

  CHECK_THROWS_AS(invert_boundaries(centered, vec2(0, 0), vec1(1)),
                  DomainError);
}

TEST_CASE("coincident endpoints produce the zero section") {
  const Vec p = vec1(0.8);

  // Straight lines: the zero vector over p is literally (p, 0).
  const LinearSegment lin(Bias{0.5}, 0.1);
  const State z = zero_section(lin, p);
  CHECK((z.q - p).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(z.v.cwiseAbs().maxCoeff() <= 1e-12);

  // Flow segments: the zero vector is defined by its endpoints, not by a
  // vanishing velocity coordinate. Away from an equilibrium the arc that
  // starts and ends at p is a small excursion whose anchor sits at the
  // apex, offset from p by a(p) (h/2)^2 / 2 to leading order; a symmetric
  // bias makes the apex velocity vanish by time reversibility.
  const double h = 0.1;
  const FlowSegment flow(Bias{0.5}, h, pendulum_field());
  const State apex = zero_section(flow, p);
  CHECK((boundary_minus(flow, apex) - p).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((boundary_plus(flow, apex) - p).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(apex.v.cwiseAbs().maxCoeff() <= 1e-10);
  const double predicted = std::sin(0.8) * (h / 2) * (h / 2) / 2.0;
  CHECK(apex.q(0) - p(0) == doctest::Approx(predicted).epsilon(5e-3));

  // At an equilibrium of the field the excursion degenerates to rest.
  const State rest = zero_section(flow, Vec(Vec::Zero(1)));
  CHECK(rest.q.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(rest.v.cwiseAbs().maxCoeff() <= 1e-12);
}

// ---------------------------------------------------------------------------
// Vertical decomposition, lifts and transport
// ---------------------------------------------------------------------------

TEST_CASE("vertical decomposition of a tangent vector") {
  const LinearSegment seg(Bias{0.5}, 0.1);
  const State s{vec1(0.2), vec1(1.5)};
  const Decomposition dec = decompose(seg, s, vec2(1, 0));
  CHECK(dec.minus_part(0) == doctest::Approx(0.5));
  CHECK(dec.minus_part(1) == doctest::Approx(-10.0));
  CHECK(dec.plus_part(0) == doctest::Approx(0.5));
  CHECK(dec.plus_part(1) == doctest::Approx(10.0));

  // A vector already in ker J_minus is its own plus-part.
  const Vec dv = lift_plus(seg, s, vec1(0.7));
  const Decomposition idem = decompose(seg, s, dv);
  CHECK(idem.minus_part.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((idem.plus_part - dv).cwiseAbs().maxCoeff() <= 1e-12);

  const Decomposition zero = decompose(seg, s, Vec::Zero(2));
  CHECK(zero.minus_part.cwiseAbs().maxCoeff() == 0.0);
  CHECK(zero.plus_part.cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(decompose(seg, s, Vec::Zero(3)), DomainError);
}

TEST_CASE("lifts of configuration variations") {
  const LinearSegment seg(Bias{0.5}, 0.1);
  const State s{vec2(0.1, -0.2), vec2(1.0, 0.5)};
  const Vec dq = vec2(1, 0);

  const Vec up = lift_plus(seg, s, dq);
  CHECK((up.head(2) - 0.5 * dq).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((up.tail(2) - 10.0 * dq).cwiseAbs().maxCoeff() <= 1e-12);

  const Vec down = lift_minus(seg, s, dq);
  CHECK((down.head(2) - 0.5 * dq).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((down.tail(2) + 10.0 * dq).cwiseAbs().maxCoeff() <= 1e-12);

  const auto [jm, jp] = boundary_jacobians(seg, s);
  CHECK((jp * up - dq).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((jm * up).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((jm * down - dq).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((jp * down).cwiseAbs().maxCoeff() <= 1e-12);

  CHECK(lift_plus(seg, s, Vec::Zero(2)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(lift_minus(seg, s, Vec::Zero(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("transport carries plus-vertical vectors across a junction") {
  const LinearSegment seg(Bias{0.5}, 0.1);
  const State v{vec2(0.1, -0.2), vec2(1.0, 0.5)};
  // Successor sharing the junction configuration.
  const Vec junction = boundary_plus(seg, v);
  const Vec w_vel = vec2(0.9, 0.6);
  const State w{Vec(junction - seg.alpha_minus() * w_vel), w_vel};
  REQUIRE(adjacent(seg, v, w));

  CHECK(transport(seg, v, w, Vec::Zero(4)).cwiseAbs().maxCoeff() == 0.0);

  const Vec dq = vec2(0.3, -0.7);
  const Vec pushed = transport(seg, v, w, lift_plus(seg, v, dq));
  CHECK((pushed - lift_minus(seg, w, dq)).cwiseAbs().maxCoeff() <= 1e-12);

  // Defining property: the backward projection at w equals the forward
  // projection at v.
  const Vec dv = lift_plus(seg, v, vec2(1.0, 2.0));
  const auto [jm_w, jp_w] = boundary_jacobians(seg, w);
  const auto [jm_v, jp_v] = boundary_jacobians(seg, v);
  const Vec out = transport(seg, v, w, dv);
  CHECK((jm_w * out - jp_v * dv).cwiseAbs().maxCoeff() <= 1e-10);

  const State far{vec2(5, 5), vec2(0, 0)};
  CHECK_THROWS_AS(transport(seg, v, far, dv), AdjacencyError);
}

// ---------------------------------------------------------------------------
// Discrete derivatives of configuration sequences
// ---------------------------------------------------------------------------

TEST_CASE("difference quotients of a configuration sequence") {
  const LinearSegment forward(Bias{1.0}, 0.1);
  const State v0 = discrete_derivative(forward, vec1(0.0), vec1(0.1));
  CHECK(v0.q(0) == doctest::Approx(0.0));
  CHECK(v0.v(0) == doctest::Approx(1.0));
  const State v1 = discrete_derivative(forward, vec1(0.1), vec1(0.3));
  CHECK(v1.q(0) == doctest::Approx(0.1));
  CHECK(v1.v(0) == doctest::Approx(2.0));

  const State still = discrete_derivative(forward, vec1(0.4), vec1(0.4));
  CHECK(still.q(0) == doctest::Approx(0.4));
  CHECK(still.v(0) == doctest::Approx(0.0));
}

TEST_CASE("configuration reconstruction round-trips") {
  const LinearSegment forward(Bias{1.0}, 0.1);
  const std::vector<Vec> m = {vec1(0.0), vec1(0.1), vec1(0.3)};
  std::vector<State> states;
  for (std::size_t k = 0; k + 1 < m.size(); ++k)
    states.push_back(discrete_derivative(forward, m[k], m[k + 1]));

  const std::vector<Vec> back = reconstruct_configurations(forward, states);
  REQUIRE(back.size() == m.size());
  for (std::size_t k = 0; k < m.size(); ++k)
    CHECK((back[k] - m[k]).cwiseAbs().maxCoeff() <= 1e-12);

  const std::vector<Vec> single =
      reconstruct_configurations(forward, {states[0]});
  REQUIRE(single.size() == 2);
  CHECK((single[0] - boundary_minus(forward, states[0])).norm() == 0.0);
  CHECK((single[1] - boundary_plus(forward, states[0])).norm() == 0.0);

  const std::vector<State> torn = {states[0],
                                   State{vec1(7.0), vec1(0.0)}};
  CHECK_THROWS_AS(reconstruct_configurations(forward, torn), AdjacencyError);
}

// ---------------------------------------------------------------------------
// Structural properties over random states
// ---------------------------------------------------------------------------

TEST_CASE("decomposition, lifts and inversion hold at random states") {
  std::mt19937_64 rng(2024);
  for (const auto& [scheme, n] : property_schemes()) {
    double worst_sum = 0.0, worst_lift = 0.0, worst_sv = 1.0,
           worst_invert = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const State s = random_state(rng, n, 1.5);
      const Vec dv = random_vec(rng, 2 * n, 2.0);

      const Decomposition dec = decompose(*scheme, s, dv);
      const double scale = std::max(1.0, dv.cwiseAbs().maxCoeff());
      worst_sum = std::max(
          worst_sum,
          (dec.minus_part + dec.plus_part - dv).cwiseAbs().maxCoeff() / scale);

      const auto [jm, jp] = boundary_jacobians(*scheme, s);
      const Vec dq = random_vec(rng, n, 1.0);
      const Vec up = lift_plus(*scheme, s, dq);
      const Vec down = lift_minus(*scheme, s, dq);
      worst_lift = std::max({worst_lift,
                             (jp * up - dq).cwiseAbs().maxCoeff(),
                             (jm * up).cwiseAbs().maxCoeff(),
                             (jm * down - dq).cwiseAbs().maxCoeff(),
                             (jp * down).cwiseAbs().maxCoeff()});

      const Mat K = stacked_boundary_jacobian(*scheme, s);
      const auto sv = singular_value_summary(K);
      worst_sv = std::min(worst_sv, sv.sigma_min / sv.sigma_max);

      const State round = invert_boundaries(*scheme, boundary_minus(*scheme, s),
                                            boundary_plus(*scheme, s));
      worst_invert = std::max(
          {worst_invert, (round.q - s.q).cwiseAbs().maxCoeff(),
           (round.v - s.v).cwiseAbs().maxCoeff()});
    }
    INFO("family ", scheme->family(), " n=", n, " gamma=",
         scheme->bias().gamma);
    CHECK(worst_sum <= 1e-10);
    CHECK(worst_lift <= 1e-10);
    CHECK(worst_sv > 1e-8);
    CHECK(worst_invert <= 1e-10);
  }
}

TEST_CASE("endpoints contract to the anchor as the step shrinks") {
  std::mt19937_64 rng(5);
  for (const double h : {0.2, 0.1, 0.05}) {
    const LinearSegment lin(Bias{0.4}, h);
    const FlowSegment flow(Bias{0.4}, h, pendulum_field());
    for (int trial = 0; trial < 20; ++trial) {
      const State s = random_state(rng, 1, 2.0);
      const double speed = s.v.norm();
      CHECK((boundary_plus(lin, s) - s.q).norm() <= h * speed + 1e-15);
      CHECK((boundary_minus(lin, s) - s.q).norm() <= h * speed + 1e-15);
      // The flow adds at most the acceleration's quadratic correction
      // (|a| <= 1 for the pendulum field).
      CHECK((boundary_plus(flow, s) - s.q).norm() <= h * speed + 2.0 * h * h);
      CHECK((boundary_minus(flow, s) - s.q).norm() <= h * speed + 2.0 * h * h);
    }
  }
}

TEST_CASE("straight-line endpoints commute with affine isometries") {
  const LinearSegment seg(Bias{0.5}, 0.1);
  std::mt19937_64 rng(8);
  Mat R(2, 2);
  const double th = 0.6;
  R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  const Vec c = vec2(0.3, -1.1);
  for (int trial = 0; trial < 20; ++trial) {
    const State s = random_state(rng, 2, 2.0);

    const State shifted{Vec(s.q + c), s.v};
    CHECK((boundary_plus(seg, shifted) - (boundary_plus(seg, s) + c))
              .cwiseAbs()
              .maxCoeff() <= 1e-14);
    CHECK((boundary_minus(seg, shifted) - (boundary_minus(seg, s) + c))
              .cwiseAbs()
              .maxCoeff() <= 1e-14);

    const State rotated{Vec(R * s.q), Vec(R * s.v)};
    CHECK((boundary_plus(seg, rotated) - R * boundary_plus(seg, s))
              .cwiseAbs()
              .maxCoeff() <= 1e-14);
    CHECK((boundary_minus(seg, rotated) - R * boundary_minus(seg, s))
              .cwiseAbs()
              .maxCoeff() <= 1e-14);
  }
}

TEST_CASE("flow sensitivities match finite differences") {
  const FlowSegment flow(Bias{0.4}, 0.1, pendulum_field(),
                         FlowSegment::Method::rk4, 2);
  std::mt19937_64 rng(13);
  const State s = random_state(rng, 1, 1.0);
  for (const double t : {flow.alpha_minus(), 0.03, flow.alpha_plus()}) {
    const SegmentSensitivity sens = flow.sensitivity(s.q, s.v, t);
    for (int j = 0; j < 2; ++j) {
      Vec e = Vec::Zero(2);
      e(j) = 1.0;
      const double fd_step = 1e-6;
      const State sp{vec1(s.q(0) + fd_step * e(0)), vec1(s.v(0) + fd_step * e(1))};
      const State sm{vec1(s.q(0) - fd_step * e(0)), vec1(s.v(0) - fd_step * e(1))};
      const SegmentPoint pp = flow.eval(sp.q, sp.v, t);
      const SegmentPoint pm = flow.eval(sm.q, sm.v, t);
      const Vec dc = (pp.c - pm.c) / (2.0 * fd_step);
      const Vec dc_dot = (pp.c_dot - pm.c_dot) / (2.0 * fd_step);
      CHECK((sens.dc.col(j) - dc).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK((sens.dc_dot.col(j) - dc_dot).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}
