#pragma once

// Shared fixtures for the test suites: canonical discretizations of the
// built-in systems and seeded random-state utilities.

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dmech/discrete_form.hpp"
#include "dmech/system.hpp"

namespace dmech::testing {

/// Built-in system discretized by straight-line segments.
inline DiscreteSystem make_linear(const std::string& name, double gamma,
                                  double h,
                                  const std::string& quadrature = "midpoint",
                                  const std::vector<double>& params = {}) {
  DiscreteSystem d;
  d.system = builtin_system(name, params);
  d.scheme = std::make_shared<LinearSegment>(Bias{gamma}, h);
  d.quadrature = quadrature_rule(quadrature);
  return d;
}

/// Built-in system discretized by flowing its own Euler-Lagrange field.
inline DiscreteSystem make_flow(const std::string& name, double gamma,
                                double h,
                                FlowSegment::Method method = FlowSegment::Method::rk4,
                                int substeps = 1,
                                const std::string& quadrature = "midpoint",
                                const std::vector<double>& params = {}) {
  DiscreteSystem d;
  d.system = builtin_system(name, params);
  const ContinuousSystem sys = d.system;
  d.scheme = std::make_shared<FlowSegment>(
      Bias{gamma}, h,
      [sys](const Vec& q, const Vec& v) { return el_acceleration(sys, q, v); },
      method, substeps);
  d.quadrature = quadrature_rule(quadrature);
  return d;
}

inline Vec random_vec(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vec x(n);
  for (int i = 0; i < n; ++i) x(i) = u(rng);
  return x;
}

inline State random_state(std::mt19937_64& rng, int n, double scale = 1.0) {
  return State{random_vec(rng, n, scale), random_vec(rng, n, scale)};
}

/// Random state with the velocity projected onto the constraint manifold.
inline State random_feasible_state(std::mt19937_64& rng,
                                   const ContinuousSystem& sys,
                                   double scale = 1.0) {
  State s = random_state(rng, sys.dim_q, scale);
  s.v = project_feasible(sys, s.q, s.v);
  return s;
}

inline Vec vec1(double a) {
  Vec x(1);
  x << a;
  return x;
}

inline Vec vec2(double a, double b) {
  Vec x(2);
  x << a, b;
  return x;
}

inline Vec vec3(double a, double b, double c) {
  Vec x(3);
  x << a, b, c;
  return x;
}

}  // namespace dmech::testing
