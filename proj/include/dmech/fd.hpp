#pragma once

#include <cmath>
#include <limits>
#include <utility>

#include "dmech/linalg.hpp"

namespace dmech::fd {

inline constexpr double machine_eps = std::numeric_limits<double>::epsilon();

/// Step for first derivatives of quantities evaluated at machine accuracy
/// (analytic formulas, converged solves): eps^{1/2}.
inline const double step_first = std::sqrt(machine_eps);

/// Step for first derivatives of quantities that are themselves
/// finite-difference results (noise ~ eps^{2/3}), and for gradients taken
/// with the 4th-order stencil: eps^{1/3}.
inline const double step_stacked = std::cbrt(machine_eps);

/// Step for tangent maps of the one-step evolution (each evaluation
/// re-solves Newton, so noise is set by the inner solve tolerance).
inline constexpr double step_flow = 1e-6;

/// Central directional derivative of f : R^k -> R^l at x along dir
/// (not normalized: returns d/dt f(x + t dir) at t = 0).
template <class F>
Vec directional(F&& f, const Vec& x, const Vec& dir, double rel_step) {
  const double scale =
      std::max(1.0, x.size() > 0 ? x.cwiseAbs().maxCoeff() : 1.0);
  const double mag = std::max(1.0, dir.cwiseAbs().maxCoeff());
  const double s = rel_step * scale / mag;
  return (f(Vec(x + s * dir)) - f(Vec(x - s * dir))) / (2.0 * s);
}

/// Scalar version of directional().
template <class F>
double directional_scalar(F&& f, const Vec& x, const Vec& dir,
                          double rel_step) {
  const double scale =
      std::max(1.0, x.size() > 0 ? x.cwiseAbs().maxCoeff() : 1.0);
  const double mag = std::max(1.0, dir.cwiseAbs().maxCoeff());
  const double s = rel_step * scale / mag;
  return (f(Vec(x + s * dir)) - f(Vec(x - s * dir))) / (2.0 * s);
}

/// Central-difference Jacobian of f : R^k -> R^l, column j stepped by
/// rel_step * max(1, |x_j|).
template <class F>
Mat jacobian(F&& f, const Vec& x, double rel_step) {
  Vec xp = x, xm = x;
  Mat J;
  for (int j = 0; j < x.size(); ++j) {
    const double s = rel_step * std::max(1.0, std::abs(x(j)));
    xp(j) = x(j) + s;
    xm(j) = x(j) - s;
    const Vec col = (f(xp) - f(xm)) / (2.0 * s);
    if (J.size() == 0) J.resize(col.size(), x.size());
    J.col(j) = col;
    xp(j) = x(j);
    xm(j) = x(j);
  }
  return J;
}

/// 4th-order central gradient of a scalar function, coordinate j stepped by
/// rel_step * max(1, |x_j|).
template <class F>
Vec gradient4(F&& f, const Vec& x, double rel_step) {
  Vec g(x.size());
  Vec y = x;
  for (int j = 0; j < x.size(); ++j) {
    const double s = rel_step * std::max(1.0, std::abs(x(j)));
    y(j) = x(j) + 2.0 * s;
    const double fp2 = f(y);
    y(j) = x(j) + s;
    const double fp1 = f(y);
    y(j) = x(j) - s;
    const double fm1 = f(y);
    y(j) = x(j) - 2.0 * s;
    const double fm2 = f(y);
    y(j) = x(j);
    g(j) = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * s);
  }
  return g;
}

}  // namespace dmech::fd
