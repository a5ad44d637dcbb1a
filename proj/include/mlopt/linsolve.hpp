#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

#include "mlopt/errors.hpp"

// Dense symmetric positive definite solves: Cholesky, or a fixed number of
// unpreconditioned conjugate-gradient iterations per right-hand side column.

namespace mlopt {

enum class SolveKind { direct, cg };

struct SolveMode {
  SolveKind kind = SolveKind::direct;
  int cg_iters = 3;
  double cg_tol = 1e-10;
  // Opt-in Tikhonov shift: solves (A + shift I) X = B.
  double shift = 0.0;

  static SolveMode Direct() { return {}; }
  static SolveMode Cg(int iters = 3, double tol = 1e-10) { return {SolveKind::cg, iters, tol, 0.0}; }
};

template <typename Scalar>
struct SpdSolution {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> x;
  // max over columns of ||A x - b||_2 at exit
  Scalar residual = Scalar(0);
  // max over columns of CG iterations taken (0 for direct solves)
  int iterations = 0;
};

namespace detail {

// Index of the first non-positive pivot of an in-place Cholesky sweep, or -1.
template <typename Derived>
int failing_pivot(const Eigen::MatrixBase<Derived>& a_in) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> a = a_in;
  const Eigen::Index n = a.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    Scalar pivot = a(k, k) - a.row(k).head(k).squaredNorm();
    if (!(pivot > Scalar(0))) return static_cast<int>(k);
    const Scalar l = std::sqrt(pivot);
    a(k, k) = l;
    for (Eigen::Index i = k + 1; i < n; ++i) {
      a(i, k) = (a(i, k) - a.row(i).head(k).dot(a.row(k).head(k))) / l;
    }
    for (Eigen::Index i = k + 1; i < n; ++i) a(k, i) = Scalar(0);
  }
  return -1;
}

template <typename Scalar, typename MatA, typename VecB>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> conjugate_gradient(const MatA& a, const VecB& b, int max_iters,
                                                            Scalar tol, Scalar* residual, int* iters) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vec x = Vec::Zero(b.size());
  Vec r = b;
  Vec p = r;
  Scalar rs = r.squaredNorm();
  int k = 0;
  while (k < max_iters && std::sqrt(rs) > tol) {
    const Vec ap = a * p;
    const Scalar curvature = p.dot(ap);
    if (!(curvature > Scalar(0))) break;
    const Scalar alpha = rs / curvature;
    x += alpha * p;
    r -= alpha * ap;
    const Scalar rs_next = r.squaredNorm();
    p = r + (rs_next / rs) * p;
    rs = rs_next;
    ++k;
  }
  *residual = std::sqrt(rs);
  *iters = k;
  return x;
}

}  // namespace detail

// Solves A X = B for symmetric A.
//
// direct: Cholesky; throws SingularHessian with the failing pivot when A is
// not positive definite.
// cg: per column, min(cg_iters, dim) CG iterations from zero, exiting early
// once the residual norm drops below cg_tol.
template <typename DerivedA, typename DerivedB>
SpdSolution<typename DerivedA::Scalar> solve_spd_detailed(const Eigen::MatrixBase<DerivedA>& a_in,
                                                          const Eigen::MatrixBase<DerivedB>& b,
                                                          const SolveMode& mode,
                                                          const std::string& context = "solve_spd") {
  using Scalar = typename DerivedA::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (a_in.rows() != a_in.cols() || a_in.rows() != b.rows()) {
    throw StructuralError(context + ": incompatible shapes (" + std::to_string(a_in.rows()) + "x" +
                          std::to_string(a_in.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()) + ")");
  }
  Mat a = a_in;
  if (mode.shift != 0.0) a.diagonal().array() += Scalar(mode.shift);

  SpdSolution<Scalar> out;
  if (mode.kind == SolveKind::direct) {
    Eigen::LLT<Mat> llt(a);
    if (llt.info() != Eigen::Success) {
      const int pivot = detail::failing_pivot(a);
      throw SingularHessian(context + ": matrix is not positive definite (pivot " + std::to_string(pivot) + ")",
                            pivot);
    }
    out.x = llt.solve(b);
    out.residual = b.cols() == 0 ? Scalar(0) : (a * out.x - b).colwise().norm().maxCoeff();
    return out;
  }

  if (mode.cg_iters < 1) throw StructuralError(context + ": cg_iters must be >= 1");
  const int iters = static_cast<int>(std::min<Eigen::Index>(mode.cg_iters, a.rows()));
  out.x.resize(b.rows(), b.cols());
  for (Eigen::Index c = 0; c < b.cols(); ++c) {
    Scalar res;
    int taken;
    out.x.col(c) = detail::conjugate_gradient<Scalar>(a, b.col(c), iters, Scalar(mode.cg_tol), &res, &taken);
    out.residual = std::max(out.residual, res);
    out.iterations = std::max(out.iterations, taken);
  }
  return out;
}

template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic> solve_spd(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b, const SolveMode& mode = {}) {
  return solve_spd_detailed(a, b, mode).x;
}

// Symmetric within tol (relative to the largest entry) and Cholesky succeeds.
template <typename Derived>
bool is_spd(const Eigen::MatrixBase<Derived>& a, double tol = 1e-10) {
  using Scalar = typename Derived::Scalar;
  if (a.rows() != a.cols() || a.rows() == 0) return false;
  const Scalar scale = a.cwiseAbs().maxCoeff();
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > Scalar(tol) * (Scalar(1) + scale)) return false;
  Eigen::LLT<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> llt(a);
  return llt.info() == Eigen::Success;
}

}  // namespace mlopt
