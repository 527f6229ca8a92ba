#include "dmech/diagnostics.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <utility>

#include "dmech/errors.hpp"
#include "dmech/fd.hpp"

namespace dmech {

double energy(const ContinuousSystem& sys, const Vec& q, const Vec& v) {
  return eval_gradient(sys, q, v).second.dot(v) - eval_lagrangian(sys, q, v);
}

// ---------------------------------------------------------------------------
// Momentum
// ---------------------------------------------------------------------------

MomentumCheck momentum_theorem_check(const DiscreteSystem& d,
                                     const SolutionPair& pair,
                                     const AffineGenerator& gen,
                                     double admissibility_tol) {
  MomentumCheck out;
  out.j_before = momentum(d, pair.v, gen, Side::minus);
  out.j_after = momentum(d, pair.w, gen, Side::minus);
  out.residual = std::abs(out.j_after - out.j_before);
  if (d.dim_constraint() == 0) {
    out.applicable = true;
    return out;
  }
  // Admissibility of the generator at the junction, tested against the same
  // annihilator rows the stationarity equations use (unit rows, so the
  // defect is a geometric distance rather than a scale-dependent number).
  const Vec junction = boundary_plus(*d.scheme, pair.v);
  Mat mu = annihilator_at(d, pair.v);
  for (int i = 0; i < mu.rows(); ++i) {
    const double nrm = mu.row(i).norm();
    if (nrm > 0.0) mu.row(i) /= nrm;
  }
  out.admissibility_defect = (mu * gen.base(junction)).cwiseAbs().maxCoeff();
  out.applicable = out.admissibility_defect <= admissibility_tol;
  return out;
}

GeneratorField projected_generator_field(const DiscreteSystem& d,
                                         const Vec& coeffs0) {
  const int g = static_cast<int>(d.system.generators.size());
  if (g == 0)
    throw UnsupportedError(
        "projected generator field needs registered generators");
  if (!d.system.constrained())
    throw UnsupportedError(
        "projected generator field needs a constraint; fixed generators "
        "already suffice for unconstrained systems");
  if (coeffs0.size() != g)
    throw DomainError("coefficient vector has " +
                      std::to_string(coeffs0.size()) + " entries, expected " +
                      std::to_string(g));
  return [d, coeffs0, g](const State& s) -> Vec {
    // Anchor at the backward endpoint: the combination is then annihilated
    // exactly at the junction this state enters through.
    const SegmentPoint p = d.scheme->eval(s.q, s.v, d.scheme->alpha_minus());
    const Mat mu = variation_annihilator(d.system, p.c, p.c_dot);
    Mat G(d.dim(), g);
    for (int i = 0; i < g; ++i) G.col(i) = d.system.generators[i].base(p.c);
    const Mat A = mu * G;
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(A);
    return coeffs0 - cod.solve(Vec(A * coeffs0));
  };
}

double nonholonomic_momentum_residual(const DiscreteSystem& d,
                                      const SolutionPair& pair,
                                      const GeneratorField& xi_field) {
  const int g = static_cast<int>(d.system.generators.size());
  if (g == 0)
    throw UnsupportedError("momentum balance needs registered generators");
  auto mom = [&](const State& s, const Vec& c) {
    if (c.size() != g)
      throw DomainError("generator field returned " +
                        std::to_string(c.size()) + " coefficients, expected " +
                        std::to_string(g));
    const Vec z = boundary_minus(*d.scheme, s);
    Vec xi = Vec::Zero(d.dim());
    for (int i = 0; i < g; ++i) xi += c(i) * d.system.generators[i].base(z);
    return legendre_minus(d, s).dot(xi);
  };
  const Vec cv = xi_field(pair.v);
  const Vec cw = xi_field(pair.w);
  return std::abs(mom(pair.w, cw) - mom(pair.v, cv) -
                  mom(pair.v, Vec(cw - cv)));
}

// ---------------------------------------------------------------------------
// Symplecticity and constraint geometry
// ---------------------------------------------------------------------------

KBasis k_bases(const DiscreteSystem& d, const State& s) {
  const int n = d.dim();
  const int m = d.dim_constraint();
  KBasis out;
  out.expected_dim = 2 * (n - m);

  Mat tg(0, 2 * n), row_minus(0, 2 * n), row_plus(0, 2 * n);
  if (m > 0) {
    const auto [jm, jp] = boundary_jacobians(*d.scheme, s);
    tg = discrete_constraint_jacobian(d, s);
    const SegmentPoint pm = d.scheme->eval(s.q, s.v, d.scheme->alpha_minus());
    const SegmentPoint pp = d.scheme->eval(s.q, s.v, d.scheme->alpha_plus());
    row_minus = variation_annihilator(d.system, pm.c, pm.c_dot) * jm;
    row_plus = variation_annihilator(d.system, pp.c, pp.c_dot) * jp;
  }
  auto stacked = [n](const Mat& a, const Mat& b) {
    Mat S(a.rows() + b.rows(), 2 * n);
    S.topRows(a.rows()) = a;
    S.bottomRows(b.rows()) = b;
    return S;
  };
  out.k_minus = null_space_basis(stacked(tg, row_minus), out.expected_dim);
  out.k_plus = null_space_basis(stacked(tg, row_plus), out.expected_dim);
  out.k_zero = null_space_basis(stacked(row_minus, row_plus),
                                out.expected_dim);
  return out;
}

SymplecticCheck symplectic_check(const DiscreteSystem& d, const State& s,
                                 const Mat& directions, int num_pairs,
                                 std::uint64_t seed,
                                 const SolveOptions& opts) {
  SymplecticCheck out;
  if (directions.cols() == 0 || num_pairs <= 0) return out;

  const SolutionPair p = step(d, s, opts);
  const Mat tf = tangent_step(d, s, opts);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw = [&]() {
    Vec a(directions.cols());
    for (int i = 0; i < a.size(); ++i) a(i) = gauss(rng);
    Vec dir = directions * a;
    const double nrm = dir.norm();
    return nrm > 0.0 ? Vec(dir / nrm) : dir;
  };

  std::vector<double> before(num_pairs), after(num_pairs);
  for (int k = 0; k < num_pairs; ++k) {
    const Vec dv = draw();
    const Vec dw = draw();
    before[k] = omega(d, s, dv, dw, Side::plus);
    after[k] = omega(d, p.w, Vec(tf * dv), Vec(tf * dw), Side::plus);
  }
  for (double b : before) out.scale = std::max(out.scale, std::abs(b));
  for (int k = 0; k < num_pairs; ++k)
    out.max_defect =
        std::max(out.max_defect, std::abs(after[k] - before[k]) / out.scale);
  out.pairs = num_pairs;
  return out;
}

std::vector<Vec> fd_lie_brackets(const std::vector<VectorField>& fields,
                                 const Vec& q) {
  const int k = static_cast<int>(fields.size());
  std::vector<Vec> values(k);
  std::vector<Mat> jacs(k);
  for (int i = 0; i < k; ++i) {
    values[i] = fields[i](q);
    jacs[i] = fd::jacobian(fields[i], q, fd::step_stacked);
  }
  std::vector<Vec> out;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j)
      out.push_back(jacs[j] * values[i] - jacs[i] * values[j]);
  return out;
}

InvolutivityReport involutivity_check(const std::vector<VectorField>& fields,
                                      const Vec& q, double tol) {
  InvolutivityReport out;
  if (fields.size() < 2) {
    out.involutive = true;  // nothing to bracket
    return out;
  }
  Mat span(q.size(), fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i)
    span.col(static_cast<int>(i)) = fields[i](q);
  for (const Vec& b : fd_lie_brackets(fields, q)) {
    out.bracket_scale = std::max(out.bracket_scale, b.norm());
    out.max_defect = std::max(out.max_defect, span_defect(span, b));
  }
  out.involutive = out.max_defect <= tol;
  return out;
}

// ---------------------------------------------------------------------------
// Series diagnostics over trajectories
// ---------------------------------------------------------------------------

ConservationSeries conservation_series(const DiscreteSystem& d,
                                       const Trajectory& traj) {
  ConservationSeries out;
  const auto& gens = d.system.generators;
  out.momenta.resize(gens.size());
  out.constraint.resize(d.dim_constraint());
  for (const State& s : traj.states) {
    out.energy.push_back(energy(d.system, s.q, s.v));
    for (std::size_t g = 0; g < gens.size(); ++g)
      out.momenta[g].push_back(momentum(d, s, gens[g], Side::minus));
    if (d.dim_constraint() > 0) {
      const Vec gd = discrete_constraint(d, s);
      for (int c = 0; c < gd.size(); ++c) out.constraint[c].push_back(gd(c));
    }
  }
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    Vec miss = legendre_plus(d, traj.states[k]) -
               legendre_minus(d, traj.states[k + 1]);
    if (d.dim_constraint() > 0)
      miss -= annihilator_at(d, traj.states[k]).transpose() *
              traj.lambdas[k + 1];
    out.legendre_mismatch.push_back(miss.cwiseAbs().maxCoeff());
  }
  return out;
}

double legendre_match_series(const DiscreteSystem& d, const Trajectory& traj) {
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    Vec miss = legendre_plus(d, traj.states[k]) -
               legendre_minus(d, traj.states[k + 1]);
    if (d.dim_constraint() > 0)
      miss -= annihilator_at(d, traj.states[k]).transpose() *
              traj.lambdas[k + 1];
    worst = std::max(worst, miss.cwiseAbs().maxCoeff());
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Reference solutions and convergence order
// ---------------------------------------------------------------------------

namespace {

/// Right-hand side of the first-order reference dynamics y' = f(y) with
/// y = (q, v): dq/dt = v and the acceleration from the index-reduced
/// stationarity system (multiplier rows only when constrained).
Vec reference_rhs(const ContinuousSystem& sys, const Vec& y) {
  const int n = sys.dim_q;
  const Vec q = y.head(n);
  const Vec v = y.tail(n);
  if (!sys.constrained()) return stack(v, el_acceleration(sys, q, v));

  // Hessian blocks of L by central differences of the gradient.
  Mat lvv(n, n), lvq(n, n);
  Vec qp = q, qm = q, vp = v, vm = v;
  for (int j = 0; j < n; ++j) {
    const double sv = fd::step_stacked * std::max(1.0, std::abs(v(j)));
    vp(j) = v(j) + sv;
    vm(j) = v(j) - sv;
    lvv.col(j) = (eval_gradient(sys, q, vp).second -
                  eval_gradient(sys, q, vm).second) /
                 (2.0 * sv);
    vp(j) = v(j);
    vm(j) = v(j);

    const double sq = fd::step_stacked * std::max(1.0, std::abs(q(j)));
    qp(j) = q(j) + sq;
    qm(j) = q(j) - sq;
    lvq.col(j) = (eval_gradient(sys, qp, v).second -
                  eval_gradient(sys, qm, v).second) /
                 (2.0 * sq);
    qp(j) = q(j);
    qm(j) = q(j);
  }
  lvv = ((lvv + lvv.transpose()) / 2.0).eval();

  const int m = sys.dim_constraint;
  const auto [gq, gv] = eval_constraint_jacobian(sys, q, v);
  Mat K = Mat::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = lvv;
  K.topRightCorner(n, m) = gv.transpose();
  K.bottomLeftCorner(m, n) = gv;
  Vec rhs(n + m);
  rhs.head(n) = eval_gradient(sys, q, v).first - lvq * v;
  rhs.tail(m) = -gq * v;
  Eigen::FullPivLU<Mat> lu(K);
  if (!lu.isInvertible())
    throw RegularityError(
        "index-reduced system matrix is singular in the reference dynamics "
        "(system \"" + sys.name + "\")");
  const Vec sol = lu.solve(rhs);
  return stack(v, Vec(sol.head(n)));
}

}  // namespace

ReferencePoint reference_solution(const ContinuousSystem& sys, const Vec& q0,
                                  const Vec& v0, double T, double tol) {
  if (!(T >= 0.0)) throw DomainError("reference_solution needs T >= 0");
  if (!(tol > 0.0)) throw DomainError("reference_solution needs tol > 0");
  const int n = sys.dim_q;
  Vec y = stack(q0, v0);
  if (T == 0.0) return ReferencePoint{y.head(n), y.tail(n)};

  // Dormand-Prince 5(4) embedded pair, FSAL, standard error-per-step
  // control with atol = rtol = tol.
  static const double a[7][6] = {
      {0, 0, 0, 0, 0, 0},
      {1.0 / 5, 0, 0, 0, 0, 0},
      {3.0 / 40, 9.0 / 40, 0, 0, 0, 0},
      {44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176,
       -5103.0 / 18656, 0},
      {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
  };
  static const double b5[7] = {35.0 / 384,      0, 500.0 / 1113, 125.0 / 192,
                               -2187.0 / 6784,  11.0 / 84,       0};
  static const double b4[7] = {5179.0 / 57600,    0,           7571.0 / 16695,
                               393.0 / 640,       -92097.0 / 339200,
                               187.0 / 2100,      1.0 / 40};

  double t = 0.0;
  double h = T / 100.0;
  const double h_min = 1e-14 * std::max(1.0, T);
  Vec k[7];
  k[0] = reference_rhs(sys, y);

  long evaluations_guard = 0;
  while (t < T) {
    if (++evaluations_guard > 2'000'000)
      throw SolveError("reference integrator exceeded its step budget", {});
    if (t + h > T) h = T - t;

    for (int i = 1; i < 7; ++i) {
      Vec yi = y;
      for (int j = 0; j < i; ++j)
        if (a[i][j] != 0.0) yi += (h * a[i][j]) * k[j];
      k[i] = reference_rhs(sys, yi);
    }
    Vec y5 = y;
    for (int i = 0; i < 7; ++i)
      if (b5[i] != 0.0) y5 += (h * b5[i]) * k[i];

    double err_sq = 0.0;
    for (int i = 0; i < y.size(); ++i) {
      double e = 0.0;
      for (int j = 0; j < 7; ++j)
        if (b5[j] != b4[j]) e += h * (b5[j] - b4[j]) * k[j](i);
      const double sc =
          tol + tol * std::max(std::abs(y(i)), std::abs(y5(i)));
      err_sq += (e / sc) * (e / sc);
    }
    const double err = std::sqrt(err_sq / y.size());

    if (err <= 1.0) {
      t += h;
      y = y5;
      k[0] = k[6];  // first-same-as-last
    }
    const double factor =
        err > 0.0 ? 0.9 * std::pow(err, -0.2)
                  : 5.0;
    h *= std::clamp(factor, 0.2, 5.0);
    if (h < h_min)
      throw SolveError("reference integrator step size underflow", {});
  }
  return ReferencePoint{y.head(n), y.tail(n)};
}

ConvergenceReport convergence_order(const DiscreteSystem& proto, const Vec& q0,
                                    const Vec& v0, double T,
                                    const std::vector<double>& hs,
                                    const SolveOptions& opts) {
  if (hs.empty())
    throw DomainError("convergence study needs at least one step size");
  if (!(T > 0.0)) throw DomainError("convergence study needs T > 0");
  const ReferencePoint ref = reference_solution(proto.system, q0, v0, T);

  ConvergenceReport out;
  for (double h : hs) {
    if (!(h > 0.0)) throw DomainError("step sizes must be positive");
    const double steps_real = T / h;
    const long long steps = std::llround(steps_real);
    if (steps < 1 ||
        std::abs(steps_real - static_cast<double>(steps)) >
            1e-9 * std::max(1.0, steps_real))
      throw DomainError("T/h = " + std::to_string(steps_real) +
                        " is not a whole number of steps for h = " +
                        std::to_string(h));
    const DiscreteSystem dh = proto.with_step(h);
    const Trajectory traj =
        evolve(dh, State{q0, v0}, static_cast<int>(steps), opts);
    if (traj.failed)
      throw SolveError("evolution failed in the convergence study at h = " +
                           std::to_string(h) + ": " + traj.failure_message,
                       {}, traj.failure_index);
    out.hs.push_back(h);
    out.errors.push_back((traj.states.back().q - ref.q).norm());
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.ratios.assign(out.errors.size(), nan);
  for (std::size_t i = 1; i < out.errors.size(); ++i)
    out.ratios[i] = out.errors[i - 1] / out.errors[i];

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  for (std::size_t i = 0; i < out.errors.size(); ++i) {
    if (out.errors[i] <= 1e-12) continue;  // at rounding level: exact
    const double x = std::log(out.hs[i]);
    const double y = std::log(out.errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++used;
  }
  out.exact = used == 0;
  out.slope = used >= 2
                  ? (used * sxy - sx * sy) / (used * sxx - sx * sx)
                  : nan;
  return out;
}

}  // namespace dmech
