#include "dmech/system.hpp"

#include <cmath>

#include "dmech/errors.hpp"
#include "dmech/fd.hpp"

namespace dmech {

namespace {

void check_sizes(const ContinuousSystem& sys, const Vec& q, const Vec& v) {
  if (q.size() != sys.dim_q || v.size() != sys.dim_q)
    throw DomainError("state dimension mismatch for system \"" + sys.name +
                      "\": expected " + std::to_string(sys.dim_q) + ", got q=" +
                      std::to_string(q.size()) + ", v=" +
                      std::to_string(v.size()));
}

void check_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw DomainError(std::string(what) + " is not finite");
}

void check_finite(const Vec& x, const char* what) {
  if (!x.allFinite()) throw DomainError(std::string(what) + " is not finite");
}

}  // namespace

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

double eval_lagrangian(const ContinuousSystem& sys, const Vec& q,
                       const Vec& v) {
  check_sizes(sys, q, v);
  const double L = sys.lagrangian(q, v);
  check_finite(L, "lagrangian");
  return L;
}

std::pair<Vec, Vec> eval_gradient(const ContinuousSystem& sys, const Vec& q,
                                  const Vec& v) {
  check_sizes(sys, q, v);
  if (sys.gradient) {
    auto [lq, lv] = sys.gradient(q, v);
    check_finite(lq, "dL/dq");
    check_finite(lv, "dL/dv");
    return {lq, lv};
  }
  const int n = sys.dim_q;
  const Vec x = stack(q, v);
  const Vec g = fd::gradient4(
      [&](const Vec& y) {
        return eval_lagrangian(sys, y.head(n), y.tail(n));
      },
      x, fd::step_stacked);
  return {g.head(n), g.tail(n)};
}

Vec eval_constraint(const ContinuousSystem& sys, const Vec& q, const Vec& v) {
  check_sizes(sys, q, v);
  if (!sys.constrained())
    throw UnsupportedError("system \"" + sys.name + "\" has no constraint");
  const Vec g = sys.constraint(q, v);
  if (g.size() != sys.dim_constraint)
    throw DomainError("constraint returned " + std::to_string(g.size()) +
                      " rows, expected " + std::to_string(sys.dim_constraint));
  check_finite(g, "constraint");
  return g;
}

std::pair<Mat, Mat> eval_constraint_jacobian(const ContinuousSystem& sys,
                                             const Vec& q, const Vec& v) {
  check_sizes(sys, q, v);
  if (!sys.constrained())
    throw UnsupportedError("system \"" + sys.name + "\" has no constraint");
  if (sys.constraint_jacobian) {
    auto [gq, gv] = sys.constraint_jacobian(q, v);
    return {gq, gv};
  }
  const int n = sys.dim_q;
  const Mat J = fd::jacobian(
      [&](const Vec& y) {
        return eval_constraint(sys, y.head(n), y.tail(n));
      },
      stack(q, v), fd::step_stacked);
  return {J.leftCols(n), J.rightCols(n)};
}

Mat variation_annihilator(const ContinuousSystem& sys, const Vec& q,
                          const Vec& v) {
  if (!sys.constrained())
    throw UnsupportedError("variation annihilator of unconstrained system \"" +
                           sys.name + "\"");
  Mat rows;
  if (sys.variation_rule == VariationRule::explicit_annihilator) {
    if (!sys.annihilator_rows)
      throw UnsupportedError(
          "explicit annihilator selected but no rows registered");
    rows = sys.annihilator_rows(q, v);
  } else {
    rows = eval_constraint_jacobian(sys, q, v).second;
  }
  if (rows.rows() != sys.dim_constraint || rows.cols() != sys.dim_q)
    throw DomainError("annihilator shape mismatch");
  const auto sv = singular_value_summary(rows, 1e-10);
  if (!sv.nonsingular)
    throw RegularityError("annihilator rows are rank deficient (sigma_min=" +
                          std::to_string(sv.sigma_min) + ")");
  return rows;
}

std::pair<Vec, Vec> generator_lift(const ContinuousSystem& sys, int index,
                                   const Vec& q, const Vec& v) {
  check_sizes(sys, q, v);
  if (index < 0 || index >= static_cast<int>(sys.generators.size()))
    throw UnsupportedError("generator index " + std::to_string(index) +
                           " out of range (have " +
                           std::to_string(sys.generators.size()) + ")");
  const auto& gen = sys.generators[index];
  return {gen.base(q), gen.fiber(v)};
}

bool is_feasible(const ContinuousSystem& sys, const Vec& q, const Vec& v,
                 double tol) {
  if (!sys.constrained()) return true;
  return eval_constraint(sys, q, v).cwiseAbs().maxCoeff() <= tol;
}

Vec project_feasible(const ContinuousSystem& sys, const Vec& q, const Vec& v,
                     double tol) {
  if (!sys.constrained()) return v;
  Vec w = v;
  for (int it = 0; it < 50; ++it) {
    const Vec g = eval_constraint(sys, q, w);
    if (g.cwiseAbs().maxCoeff() <= tol) return w;
    const Mat gv = eval_constraint_jacobian(sys, q, w).second;
    // minimum-norm correction: dv = -gv^T (gv gv^T)^{-1} g
    Eigen::FullPivLU<Mat> lu(gv * gv.transpose());
    if (!lu.isInvertible())
      throw RegularityError("constraint velocity Jacobian rank deficient");
    w -= gv.transpose() * lu.solve(g);
  }
  throw InversionError("feasibility projection did not converge",
                       eval_constraint(sys, q, w).cwiseAbs().maxCoeff());
}

Vec el_acceleration(const ContinuousSystem& sys, const Vec& q, const Vec& v) {
  check_sizes(sys, q, v);
  const int n = sys.dim_q;
  auto grad_v = [&](const Vec& x) {
    return eval_gradient(sys, x.head(n), x.tail(n)).second;
  };
  const Mat D = fd::jacobian(grad_v, stack(q, v), fd::step_stacked);
  const Mat l_vq = D.leftCols(n);
  Mat l_vv = D.rightCols(n);
  l_vv = 0.5 * (l_vv + l_vv.transpose()).eval();
  const Vec l_q = eval_gradient(sys, q, v).first;
  Eigen::FullPivLU<Mat> lu(l_vv);
  if (!lu.isInvertible())
    throw RegularityError("velocity Hessian of \"" + sys.name +
                          "\" is singular; no second-order field");
  return lu.solve(l_q - l_vq * v);
}

// ---------------------------------------------------------------------------
// Built-in catalogue
// ---------------------------------------------------------------------------

namespace {

Mat planar_rotation_generator(int n, int i, int j) {
  Mat A = Mat::Zero(n, n);
  A(i, j) = -1.0;
  A(j, i) = 1.0;
  return A;
}

AffineGenerator translation(int n, int axis, const std::string& label) {
  Vec b = Vec::Zero(n);
  b(axis) = 1.0;
  return {Mat::Zero(n, n), b, label};
}

int dim_param(const std::vector<double>& params, const std::string& name) {
  if (params.empty()) return 1;
  if (params.size() > 1)
    throw ConfigError("system \"" + name + "\" takes at most one parameter");
  const double d = params[0];
  const int n = static_cast<int>(d);
  if (n < 1 || static_cast<double>(n) != d)
    throw ConfigError("system \"" + name +
                      "\" dimension parameter must be a positive integer");
  return n;
}

ContinuousSystem make_free_particle(const std::vector<double>& params) {
  ContinuousSystem sys;
  sys.name = "free_particle";
  sys.dim_q = dim_param(params, sys.name);
  sys.lagrangian = [](const Vec&, const Vec& v) { return 0.5 * v.squaredNorm(); };
  sys.gradient = [n = sys.dim_q](const Vec&, const Vec& v) {
    return std::pair<Vec, Vec>{Vec::Zero(n), v};
  };
  for (int i = 0; i < sys.dim_q; ++i)
    sys.generators.push_back(
        translation(sys.dim_q, i, "translation_" + std::to_string(i)));
  return sys;
}

ContinuousSystem make_harmonic(const std::vector<double>& params) {
  ContinuousSystem sys;
  sys.name = "harmonic";
  sys.dim_q = dim_param(params, sys.name);
  sys.lagrangian = [](const Vec& q, const Vec& v) {
    return 0.5 * v.squaredNorm() - 0.5 * q.squaredNorm();
  };
  sys.gradient = [](const Vec& q, const Vec& v) {
    return std::pair<Vec, Vec>{-q, v};
  };
  // The isotropic potential is rotation invariant: one generator per
  // coordinate plane.
  const int n = sys.dim_q;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      sys.generators.push_back({planar_rotation_generator(n, i, j),
                                Vec::Zero(n),
                                "rotation_" + std::to_string(i) +
                                    std::to_string(j)});
  return sys;
}

ContinuousSystem make_pendulum(const std::vector<double>& params) {
  if (!params.empty())
    throw ConfigError("system \"pendulum\" takes no parameters");
  ContinuousSystem sys;
  sys.name = "pendulum";
  sys.dim_q = 1;
  sys.lagrangian = [](const Vec& q, const Vec& v) {
    return 0.5 * v(0) * v(0) + std::cos(q(0));
  };
  sys.gradient = [](const Vec& q, const Vec& v) {
    Vec lq(1), lv(1);
    lq(0) = -std::sin(q(0));
    lv(0) = v(0);
    return std::pair<Vec, Vec>{lq, lv};
  };
  return sys;
}

ContinuousSystem make_nonholonomic_particle(const std::vector<double>& params) {
  if (!params.empty())
    throw ConfigError("system \"nonholonomic_particle\" takes no parameters");
  ContinuousSystem sys;
  sys.name = "nonholonomic_particle";
  sys.dim_q = 3;
  sys.lagrangian = [](const Vec&, const Vec& v) { return 0.5 * v.squaredNorm(); };
  sys.gradient = [](const Vec&, const Vec& v) {
    return std::pair<Vec, Vec>{Vec::Zero(3), v};
  };
  sys.dim_constraint = 1;
  sys.constraint = [](const Vec& q, const Vec& v) {
    Vec g(1);
    g(0) = v(2) - q(1) * v(0);
    return g;
  };
  sys.constraint_jacobian = [](const Vec& q, const Vec& v) {
    Mat gq = Mat::Zero(1, 3), gv = Mat::Zero(1, 3);
    gq(0, 1) = -v(0);
    gv(0, 0) = -q(1);
    gv(0, 2) = 1.0;
    return std::pair<Mat, Mat>{gq, gv};
  };
  for (int i = 0; i < 3; ++i)
    sys.generators.push_back(
        translation(3, i, "translation_" + std::to_string(i)));
  // Smooth basis of ker dg/dv = span{(1, 0, q_y), (0, 1, 0)}.
  sys.distribution_fields = {
      [](const Vec& q) {
        Vec x(3);
        x << 1.0, 0.0, q(1);
        return x;
      },
      [](const Vec&) {
        Vec x(3);
        x << 0.0, 1.0, 0.0;
        return x;
      }};
  return sys;
}

ContinuousSystem make_chaplygin_sleigh(const std::vector<double>& params) {
  if (params.size() > 3)
    throw ConfigError(
        "system \"chaplygin_sleigh\" takes at most [mass, inertia, offset]");
  const double mass = params.size() > 0 ? params[0] : 1.0;
  const double inertia = params.size() > 1 ? params[1] : 1.0;
  const double offset = params.size() > 2 ? params[2] : 0.5;
  if (mass <= 0.0 || inertia <= 0.0)
    throw ConfigError("chaplygin_sleigh needs positive mass and inertia");

  ContinuousSystem sys;
  sys.name = "chaplygin_sleigh";
  sys.dim_q = 3;  // (x, y, theta): contact point position and heading
  sys.lagrangian = [mass, inertia, offset](const Vec& q, const Vec& v) {
    const double th = q(2), vx = v(0), vy = v(1), w = v(2);
    const double lateral = -vx * std::sin(th) + vy * std::cos(th);
    return 0.5 * mass * (vx * vx + vy * vy) +
           0.5 * (inertia + mass * offset * offset) * w * w +
           mass * offset * w * lateral;
  };
  sys.gradient = [mass, inertia, offset](const Vec& q, const Vec& v) {
    const double th = q(2), vx = v(0), vy = v(1), w = v(2);
    const double s = std::sin(th), c = std::cos(th);
    Vec lq = Vec::Zero(3), lv(3);
    lq(2) = mass * offset * w * (-vx * c - vy * s);
    lv(0) = mass * vx - mass * offset * w * s;
    lv(1) = mass * vy + mass * offset * w * c;
    lv(2) = (inertia + mass * offset * offset) * w +
            mass * offset * (-vx * s + vy * c);
    return std::pair<Vec, Vec>{lq, lv};
  };
  sys.dim_constraint = 1;
  sys.constraint = [](const Vec& q, const Vec& v) {
    Vec g(1);
    g(0) = -v(0) * std::sin(q(2)) + v(1) * std::cos(q(2));
    return g;
  };
  sys.constraint_jacobian = [](const Vec& q, const Vec& v) {
    const double s = std::sin(q(2)), c = std::cos(q(2));
    Mat gq = Mat::Zero(1, 3), gv = Mat::Zero(1, 3);
    gq(0, 2) = -v(0) * c - v(1) * s;
    gv(0, 0) = -s;
    gv(0, 1) = c;
    return std::pair<Mat, Mat>{gq, gv};
  };
  sys.generators.push_back(translation(3, 0, "translation_x"));
  sys.generators.push_back(translation(3, 1, "translation_y"));
  {
    // Planar rotation acting on (x, y) plus the matching heading shift.
    Mat A = Mat::Zero(3, 3);
    A(0, 1) = -1.0;
    A(1, 0) = 1.0;
    Vec b = Vec::Zero(3);
    b(2) = 1.0;
    sys.generators.push_back({A, b, "rotation"});
  }
  // Smooth basis of ker dg/dv: heading direction and spin.
  sys.distribution_fields = {
      [](const Vec& q) {
        Vec x(3);
        x << std::cos(q(2)), std::sin(q(2)), 0.0;
        return x;
      },
      [](const Vec&) {
        Vec x(3);
        x << 0.0, 0.0, 1.0;
        return x;
      }};
  return sys;
}

ContinuousSystem make_degenerate(const std::vector<double>& params) {
  if (!params.empty())
    throw ConfigError("system \"degenerate\" takes no parameters");
  ContinuousSystem sys;
  sys.name = "degenerate";
  sys.dim_q = 1;
  sys.lagrangian = [](const Vec&, const Vec& v) { return v(0); };
  sys.gradient = [](const Vec&, const Vec&) {
    Vec lq = Vec::Zero(1), lv = Vec::Ones(1);
    return std::pair<Vec, Vec>{lq, lv};
  };
  return sys;
}

}  // namespace

ContinuousSystem builtin_system(const std::string& name,
                                const std::vector<double>& params) {
  if (name == "free_particle") return make_free_particle(params);
  if (name == "harmonic") return make_harmonic(params);
  if (name == "pendulum") return make_pendulum(params);
  if (name == "nonholonomic_particle")
    return make_nonholonomic_particle(params);
  if (name == "chaplygin_sleigh") return make_chaplygin_sleigh(params);
  if (name == "degenerate") return make_degenerate(params);
  throw ConfigError(
      "unknown system \"" + name +
      "\" (expected free_particle, harmonic, pendulum, "
      "nonholonomic_particle, chaplygin_sleigh or degenerate)");
}

}  // namespace dmech
