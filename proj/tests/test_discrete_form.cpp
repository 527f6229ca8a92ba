#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dmech/discrete_form.hpp"
#include "dmech/errors.hpp"
#include "dmech/fd.hpp"
#include "helpers.hpp"

using namespace dmech;
using namespace dmech::testing;

namespace {

/// Quartic oscillator without an analytic gradient, to exercise the
/// finite-difference one-form path.
ContinuousSystem quartic_system() {
  ContinuousSystem sys;
  sys.name = "quartic";
  sys.dim_q = 1;
  sys.lagrangian = [](const Vec& q, const Vec& v) {
    return 0.5 * v.squaredNorm() - 0.25 * std::pow(q(0), 4);
  };
  return sys;
}

/// Kinetic Lagrangian holding the first coordinate: the constraint has no
/// velocity dependence, so admissible variations cannot be formed.
ContinuousSystem held_coordinate_system() {
  ContinuousSystem sys;
  sys.name = "held_x";
  sys.dim_q = 3;
  sys.lagrangian = [](const Vec&, const Vec& v) { return 0.5 * v.squaredNorm(); };
  sys.dim_constraint = 1;
  sys.constraint = [](const Vec& q, const Vec&) {
    Vec g(1);
    g(0) = q(0);
    return g;
  };
  return sys;
}

}  // namespace

// ---------------------------------------------------------------------------
// Discrete Lagrangian
// ---------------------------------------------------------------------------

TEST_CASE("discrete Lagrangian of the free particle is h*|v|^2/2") {
  // The integrand is constant along a straight segment, so every quadrature
  // rule reproduces the same value exactly.
  for (const char* rule : {"midpoint", "trapezoid", "gauss2"}) {
    CAPTURE(rule);
    const DiscreteSystem d = make_linear("free_particle", 0.5, 0.1, rule);
    CHECK(discrete_lagrangian(d, State{vec1(2.0), vec1(3.0)}) ==
          doctest::Approx(0.45).epsilon(1e-14));
  }
}

TEST_CASE("discrete Lagrangian of the harmonic oscillator at the anchor") {
  // gamma = 1/2 with the midpoint rule samples the anchor itself:
  // L_d(q, v) = h (v^2 - q^2) / 2.
  const DiscreteSystem d = make_linear("harmonic", 0.5, 0.1);
  CHECK(discrete_lagrangian(d, State{vec1(1.0), vec1(0.0)}) ==
        doctest::Approx(-0.05).epsilon(1e-14));
  CHECK(discrete_lagrangian(d, State{vec1(1.0), vec1(2.0)}) ==
        doctest::Approx(0.1 * (4.0 - 1.0) / 2.0).epsilon(1e-14));
}

TEST_CASE("discrete Lagrangian converges to h times the Lagrangian") {
  const ContinuousSystem pend = builtin_system("pendulum");
  const State s{vec1(0.8), vec1(0.3)};
  const double l_exact = eval_lagrangian(pend, s.q, s.v);
  double prev = 0.0;
  for (const double h : {1e-2, 1e-3}) {
    const DiscreteSystem d = make_linear("pendulum", 0.5, h);
    const double err = std::abs(discrete_lagrangian(d, s) / h - l_exact);
    if (prev > 0.0) CHECK(err <= prev / 50.0);  // midpoint is second order
    CHECK(err <= 1e-4);
    prev = err;
  }
}

// ---------------------------------------------------------------------------
// One-form
// ---------------------------------------------------------------------------

TEST_CASE("one-form of the free particle") {
  const DiscreteSystem d = make_linear("free_particle", 0.5, 0.1);
  const Vec sig = sigma_d(d, State{vec1(2.0), vec1(3.0)});
  REQUIRE(sig.size() == 2);
  CHECK(sig(0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(sig(1) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("one-form of the harmonic oscillator") {
  // L_d = h (v^2 - q^2)/2 at gamma = 1/2 with midpoint, so
  // sigma = (-h q, h v).
  const DiscreteSystem d = make_linear("harmonic", 0.5, 0.1);
  const Vec sig = sigma_d(d, State{vec1(1.0), vec1(0.0)});
  CHECK(sig(0) == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(sig(1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("exact and pulled-back one-forms agree") {
  // With an analytic gradient both modes evaluate the same chain rule; for a
  // finite-difference system they approximate the same differential.
  std::mt19937_64 rng(11);

  DiscreteSystem exact = make_linear("harmonic", 0.4, 0.1, "trapezoid", {2});
  DiscreteSystem pulled = exact;
  pulled.one_form_mode = OneFormMode::pulled_back;
  for (int i = 0; i < 20; ++i) {
    const State s = random_state(rng, 2);
    CHECK((sigma_d(exact, s) - sigma_d(pulled, s)).cwiseAbs().maxCoeff() <=
          1e-12);
  }

  DiscreteSystem fd_exact = make_linear("harmonic", 0.5, 0.1);
  fd_exact.system = quartic_system();
  DiscreteSystem fd_pulled = fd_exact;
  fd_pulled.one_form_mode = OneFormMode::pulled_back;
  CHECK(sigma_is_fd(fd_exact));
  CHECK_FALSE(sigma_is_fd(exact));
  for (int i = 0; i < 20; ++i) {
    const State s = random_state(rng, 1);
    CHECK((sigma_d(fd_exact, s) - sigma_d(fd_pulled, s)).cwiseAbs().maxCoeff() <=
          1e-6);
  }
}

TEST_CASE("boundary one-forms of the free particle") {
  const DiscreteSystem d = make_linear("free_particle", 0.5, 0.1);
  const State s{vec1(2.0), vec1(3.0)};
  const Vec tp = theta_plus(d, s);
  REQUIRE(tp.size() == 2);
  CHECK(tp(0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(tp(1) == doctest::Approx(0.15).epsilon(1e-12));

  // At v = 0 the one-form vanishes, hence so do both boundary forms.
  const State rest{vec1(2.0), vec1(0.0)};
  CHECK(theta_plus(d, rest).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(theta_minus(d, rest).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("boundary one-forms split the one-form") {
  std::mt19937_64 rng(12);
  const DiscreteSystem d = make_linear("harmonic", 0.3, 0.2, "gauss2", {2});
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const State s = random_state(rng, 2);
    const Vec gap = theta_plus(d, s) - theta_minus(d, s) - sigma_d(d, s);
    worst = std::max(worst, gap.cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-12);
}

// ---------------------------------------------------------------------------
// Discrete Legendre transforms
// ---------------------------------------------------------------------------

TEST_CASE("Legendre transforms of the free particle return the velocity") {
  const DiscreteSystem d = make_linear("free_particle", 0.5, 0.1, "midpoint", {2});
  const State s{vec2(0.4, -1.1), vec2(3.0, 2.0)};
  CHECK((legendre_plus(d, s) - s.v).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((legendre_minus(d, s) - s.v).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("Legendre transforms of the harmonic oscillator") {
  // F+L = v - (h/2) q and F-L = v + (h/2) q at gamma = 1/2 with midpoint.
  const DiscreteSystem d = make_linear("harmonic", 0.5, 0.1);
  std::mt19937_64 rng(13);
  for (int i = 0; i < 20; ++i) {
    const State s = random_state(rng, 1);
    CHECK(legendre_plus(d, s)(0) ==
          doctest::Approx(s.v(0) - 0.05 * s.q(0)).epsilon(1e-12));
    CHECK(legendre_minus(d, s)(0) ==
          doctest::Approx(s.v(0) + 0.05 * s.q(0)).epsilon(1e-12));
  }
}

TEST_CASE("one-form difference across a junction") {
  const DiscreteSystem d = make_linear("free_particle", 0.5, 0.1);
  const State v{vec1(2.0), vec1(3.0)};
  // Adjacent successor: anchor chosen so the segments share the junction.
  const State w{vec1(2.15 + 0.05 * 2.0), vec1(2.0)};
  REQUIRE(adjacent(*d.scheme, v, w));
  const Vec ds = delta_sigma(d, v, w);
  CHECK(ds(0) == doctest::Approx(3.0 - 2.0).epsilon(1e-12));

  const Vec direct = legendre_plus(d, v) - legendre_minus(d, w);
  CHECK((ds - direct).cwiseAbs().maxCoeff() <= 1e-14);

  const State far{vec1(5.0), vec1(2.0)};
  CHECK_THROWS_AS(delta_sigma(d, v, far), AdjacencyError);
}

// ---------------------------------------------------------------------------
// Momentum maps
// ---------------------------------------------------------------------------

TEST_CASE("translation momentum of the free particle") {
  const DiscreteSystem d = make_linear("free_particle", 0.5, 0.1, "midpoint", {2});
  const State s{vec2(0.7, -0.2), vec2(1.5, -2.5)};
  const AffineGenerator& gx = d.system.generators[0];
  CHECK(momentum(d, s, gx, Side::plus) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(momentum(d, s, gx, Side::minus) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("rotation momentum of the planar harmonic oscillator") {
  const double h = 0.1;
  const DiscreteSystem d = make_linear("harmonic", 0.5, h, "midpoint", {2});
  REQUIRE(d.system.generators.size() == 1);
  const AffineGenerator& rot = d.system.generators[0];
  REQUIRE(rot.label == "rotation_01");

  std::mt19937_64 rng(14);
  for (int i = 0; i < 20; ++i) {
    const State s = random_state(rng, 2);
    const double ell = s.q(0) * s.v(1) - s.q(1) * s.v(0);
    const double jp = momentum(d, s, rot, Side::plus);
    const double jm = momentum(d, s, rot, Side::minus);
    CHECK(jp == doctest::Approx((1.0 + h * h / 4.0) * ell).epsilon(1e-10));
    CHECK(std::abs(jp - jm) <= 1e-12 * std::max(1.0, std::abs(jp)));
  }

  AffineGenerator zero;
  zero.A = Mat::Zero(2, 2);
  zero.b = Vec::Zero(2);
  CHECK(momentum(d, State{vec2(1, 0), vec2(0, 1)}, zero, Side::plus) == 0.0);
}

TEST_CASE("one-form annihilates symmetry generator lifts") {
  struct Case {
    const char* name;
    std::vector<double> params;
  };
  std::mt19937_64 rng(15);
  for (const Case& c : {Case{"free_particle", {3}}, Case{"harmonic", {2}},
                        Case{"nonholonomic_particle", {}}}) {
    CAPTURE(c.name);
    const DiscreteSystem d = make_linear(c.name, 0.4, 0.15, "gauss2", c.params);
    const int n = d.dim();
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const State s = random_state(rng, n);
      for (std::size_t g = 0; g < d.system.generators.size(); ++g) {
        auto [xi_q, xi_v] = generator_lift(d.system, static_cast<int>(g), s.q,
                                           s.v);
        worst = std::max(worst,
                         std::abs(sigma_d(d, s).dot(stack(xi_q, xi_v))));
      }
    }
    CHECK(worst <= 1e-10);
  }
}

// ---------------------------------------------------------------------------
// Two-forms
// ---------------------------------------------------------------------------

TEST_CASE("two-form of the free particle on coordinate directions") {
  // theta_plus = (v, alpha_plus v), so d(theta_plus) applied to the pair
  // ((1,0), (0,1)) equals -1 for every step and weight.
  const DiscreteSystem d = make_linear("free_particle", 0.5, 0.1);
  const State s{vec1(2.0), vec1(3.0)};
  const Vec da = vec2(1.0, 0.0);
  const Vec db = vec2(0.0, 1.0);
  CHECK(omega(d, s, da, db, Side::plus) == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(omega(d, s, db, da, Side::plus) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("two-form is antisymmetric") {
  const DiscreteSystem d = make_linear("harmonic", 0.5, 0.1, "midpoint", {2});
  std::mt19937_64 rng(16);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const State s = random_state(rng, 2);
    const Vec da = random_vec(rng, 4);
    const Vec db = random_vec(rng, 4);
    const double ab = omega(d, s, da, db, Side::plus);
    const double ba = omega(d, s, db, da, Side::plus);
    worst = std::max(worst, std::abs(ab + ba));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("forward and backward two-forms coincide") {
  // d(theta_plus) - d(theta_minus) = d(sigma_d) = 0 when the one-form is an
  // exact differential.
  const DiscreteSystem d = make_linear("harmonic", 0.5, 0.1, "midpoint", {2});
  std::mt19937_64 rng(17);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const State s = random_state(rng, 2);
    const Vec da = random_vec(rng, 4);
    const Vec db = random_vec(rng, 4);
    const double wp = omega(d, s, da, db, Side::plus);
    const double wm = omega(d, s, da, db, Side::minus);
    worst = std::max(worst, std::abs(wp - wm));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("one-form is closed in exact-differential mode") {
  std::mt19937_64 rng(18);
  for (const char* name : {"harmonic", "pendulum"}) {
    CAPTURE(name);
    const DiscreteSystem d = make_linear(name, 0.5, 0.1);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const State s = random_state(rng, 1);
      const Vec x0 = stack(s.q, s.v);
      const Vec da = random_vec(rng, 2);
      const Vec db = random_vec(rng, 2);
      auto along = [&](const Vec& x, const Vec& dir) {
        return sigma_d(d, State{x.head(1), x.tail(1)}).dot(dir);
      };
      const double a = fd::directional_scalar(
          [&](const Vec& x) { return along(x, db); }, x0, da, fd::step_first);
      const double b = fd::directional_scalar(
          [&](const Vec& x) { return along(x, da); }, x0, db, fd::step_first);
      worst = std::max(worst, std::abs(a - b));
    }
    CHECK(worst <= 1e-6);
  }
}

// ---------------------------------------------------------------------------
// Mixed second derivative of the junction pairing
// ---------------------------------------------------------------------------

TEST_CASE("junction pairing of the free particle") {
  const DiscreteSystem d = make_linear("free_particle", 0.5, 0.1);
  const State s{vec1(2.0), vec1(3.0)};
  const Vec one = vec1(1.0);
  CHECK(dpm_bilinear(d, s, one, one) == doctest::Approx(-10.0).epsilon(1e-6));
}

TEST_CASE("junction pairing of the harmonic oscillator") {
  // -F-L paired against the forward lift gives -(1/h)(1 + h^2/4) dq dq~.
  std::mt19937_64 rng(19);
  for (const double h : {0.5, 0.1, 0.01}) {
    CAPTURE(h);
    const DiscreteSystem d = make_linear("harmonic", 0.5, h);
    const State s = random_state(rng, 1);
    const double expected = -(1.0 / h) * (1.0 + h * h / 4.0);
    CHECK(dpm_bilinear(d, s, vec1(1.0), vec1(1.0)) ==
          doctest::Approx(expected).epsilon(1e-6));
    // Nondegenerate for every step size.
    CHECK(std::abs(dpm_bilinear(d, s, vec1(1.0), vec1(1.0))) >= 0.5 / h);
  }
}

TEST_CASE("junction pairing is symmetric in its two factorizations") {
  const DiscreteSystem d = make_linear("harmonic", 0.5, 0.1, "midpoint", {2});
  std::mt19937_64 rng(20);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const State s = random_state(rng, 2);
    const Vec dq = random_vec(rng, 2);
    const Vec dqt = random_vec(rng, 2);
    worst = std::max(worst, std::abs(dpm_bilinear(d, s, dq, dqt) -
                                     dmp_bilinear(d, s, dq, dqt)));
  }
  CHECK(worst <= 1e-6);
}

// ---------------------------------------------------------------------------
// Discrete constraint
// ---------------------------------------------------------------------------

TEST_CASE("discrete constraint at the anchor point") {
  const DiscreteSystem d = make_linear("nonholonomic_particle", 0.5, 0.1);
  const State s{vec3(0, 1, 0), vec3(1, 2, 3)};
  const Vec g = discrete_constraint(d, s);
  REQUIRE(g.size() == 1);
  CHECK(g(0) == doctest::Approx(2.0).epsilon(1e-14));  // v_z - q_y v_x
}

TEST_CASE("discrete constraint as a quadrature average") {
  // gamma = 1 with the trapezoid rule averages g over both endpoints:
  // g_d = g(q, v) - (h/2) v_x v_y for the nonholonomic particle.
  DiscreteSystem d = make_linear("nonholonomic_particle", 1.0, 0.1, "trapezoid");
  d.constraint_anchor = ConstraintAnchor::quadrature_average;
  const State s{vec3(0, 1, 0), vec3(1, 2, 3)};
  CHECK(discrete_constraint(d, s)(0) == doctest::Approx(1.9).epsilon(1e-13));
}

TEST_CASE("discrete constraint Jacobian matches finite differences") {
  std::mt19937_64 rng(21);
  for (const char* name : {"nonholonomic_particle", "chaplygin_sleigh"}) {
    CAPTURE(name);
    for (const auto anchor : {ConstraintAnchor::anchor_point,
                              ConstraintAnchor::quadrature_average}) {
      DiscreteSystem d = make_linear(name, 0.4, 0.1, "gauss2");
      d.constraint_anchor = anchor;
      const int n = d.dim();
      double worst = 0.0;
      for (int i = 0; i < 10; ++i) {
        const State s = random_state(rng, n);
        const Mat fd_jac = fd::jacobian(
            [&](const Vec& x) {
              return discrete_constraint(d, State{x.head(n), x.tail(n)});
            },
            stack(s.q, s.v), fd::step_stacked);
        const Mat gap = discrete_constraint_jacobian(d, s) - fd_jac;
        worst = std::max(worst, gap.cwiseAbs().maxCoeff());
      }
      CHECK(worst <= 1e-6);
    }
  }
}

TEST_CASE("variation annihilator is evaluated at the forward endpoint") {
  const DiscreteSystem d = make_linear("nonholonomic_particle", 0.5, 0.1);
  const State s{vec3(0, 1, 0), vec3(1, 2, 3)};
  const Mat mu = annihilator_at(d, s);
  REQUIRE(mu.rows() == 1);
  // dg/dv at q_plus = q + alpha_plus v: (-q_y - alpha_plus v_y, 0, 1).
  CHECK(mu(0, 0) == doctest::Approx(-1.1).epsilon(1e-12));
  CHECK(mu(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mu(0, 2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("feasibility of discrete states") {
  const DiscreteSystem d = make_linear("nonholonomic_particle", 0.5, 0.1);
  CHECK(feasible(d, State{vec3(0, 1, 0), vec3(1, 2, 1)}));
  CHECK_FALSE(feasible(d, State{vec3(0, 1, 0), vec3(1, 2, 3)}));
  CHECK(feasible(d, State{vec3(0, 1, 0), vec3(1, 2, 3)}, 10.0));

  const DiscreteSystem free3 = make_linear("free_particle", 0.5, 0.1, "midpoint", {3});
  CHECK(feasible(free3, State{vec3(1, 2, 3), vec3(4, 5, 6)}));
}

TEST_CASE("dimension balance accepts regular constraints and rejects degenerate ones") {
  const DiscreteSystem nh = make_linear("nonholonomic_particle", 0.5, 0.1);
  CHECK_NOTHROW(check_dimension_balance(nh, State{vec3(0, 1, 0), vec3(1, 2, 1)}));

  DiscreteSystem held = nh;
  held.system = held_coordinate_system();
  CHECK_THROWS_AS(check_dimension_balance(held, State{vec3(0, 1, 0), vec3(1, 2, 1)}),
                  RegularityError);
}
