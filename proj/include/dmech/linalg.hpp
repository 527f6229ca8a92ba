#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "dmech/errors.hpp"

namespace dmech {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Stack q on top of v into a single coordinate vector (q-block first).
inline Vec stack(const Vec& q, const Vec& v) {
  Vec x(q.size() + v.size());
  x << q, v;
  return x;
}

/// Singular-value summary of a square or rectangular matrix.
struct SingularValueSummary {
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  double condition = 0.0;  ///< sigma_max / sigma_min (inf if singular)
  bool nonsingular = false;
};

/// Summarize the spectrum of M; "nonsingular" means
/// sigma_min > rel_tol * max(sigma_max, 1).
inline SingularValueSummary singular_value_summary(const Mat& M,
                                                   double rel_tol = 1e-8) {
  Eigen::JacobiSVD<Mat> svd(M);
  const auto& s = svd.singularValues();
  SingularValueSummary out;
  out.sigma_max = s.size() > 0 ? s(0) : 0.0;
  out.sigma_min = s.size() > 0 ? s(s.size() - 1) : 0.0;
  out.condition = out.sigma_min > 0.0
                      ? out.sigma_max / out.sigma_min
                      : std::numeric_limits<double>::infinity();
  out.nonsingular = out.sigma_min > rel_tol * std::max(out.sigma_max, 1.0);
  return out;
}

/// Orthonormal basis (columns) of the null space of A.
///
/// The null-space dimension is read off the singular-value spectrum with a
/// relative cutoff; when expected_dim >= 0 the detected dimension must match
/// or a RegularityError is thrown. A matrix with zero rows annihilates
/// nothing, so its null space is all of R^cols.
inline Mat null_space_basis(const Mat& A, int expected_dim = -1,
                            double rel_tol = 1e-8) {
  const int cols = static_cast<int>(A.cols());
  if (A.rows() == 0) {
    if (expected_dim >= 0 && expected_dim != cols)
      throw RegularityError("null space of empty matrix has full dimension " +
                            std::to_string(cols) + ", expected " +
                            std::to_string(expected_dim));
    return Mat::Identity(cols, cols);
  }
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double cutoff = rel_tol * std::max(s.size() > 0 ? s(0) : 0.0, 1.0);
  int rank = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > cutoff) ++rank;
  const int dim = cols - rank;
  if (expected_dim >= 0 && dim != expected_dim)
    throw RegularityError("null-space dimension " + std::to_string(dim) +
                          ", expected " + std::to_string(expected_dim));
  return svd.matrixV().rightCols(dim);
}

/// Orthonormalize the columns of A (thin QR); throws on rank deficiency.
inline Mat orthonormalize_columns(const Mat& A, double rel_tol = 1e-10) {
  Eigen::ColPivHouseholderQR<Mat> qr(A);
  qr.setThreshold(rel_tol);
  if (qr.rank() < A.cols())
    throw RegularityError("column set is rank deficient: rank " +
                          std::to_string(qr.rank()) + " of " +
                          std::to_string(A.cols()));
  Mat Q = qr.householderQ() * Mat::Identity(A.rows(), A.cols());
  return Q;
}

/// Largest principal angle (radians) between the column spans of A and B.
/// Subspaces of different dimension are maximally apart (pi/2). Small
/// angles come from the sine formulation — acos of a cosine near one
/// amplifies roundoff to sqrt(eps) and would mask genuine coincidence.
inline double max_principal_angle(const Mat& A, const Mat& B) {
  if (A.cols() != B.cols()) return std::acos(0.0);
  if (A.cols() == 0) return 0.0;
  const Mat Qa = orthonormalize_columns(A);
  const Mat Qb = orthonormalize_columns(B);
  Eigen::JacobiSVD<Mat> svd(Qa.transpose() * Qb);
  const double c = std::clamp(svd.singularValues().minCoeff(), -1.0, 1.0);
  if (c * c <= 0.5) return std::acos(c);
  Eigen::JacobiSVD<Mat> res(Qb - Qa * (Qa.transpose() * Qb));
  const double s = std::clamp(res.singularValues().maxCoeff(), 0.0, 1.0);
  return std::asin(s);
}

/// Relative least-squares defect of b against span(columns of A):
/// ||b - A x*|| / max(1, ||b||).
inline double span_defect(const Mat& A, const Vec& b) {
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(A);
  const Vec r = b - A * cod.solve(b);
  return r.norm() / std::max(1.0, b.norm());
}

}  // namespace dmech
