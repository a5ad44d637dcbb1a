#pragma once

#include "mlopt/core.hpp"
#include "mlopt/linsolve.hpp"
#include "mlopt/newton.hpp"
#include "mlopt/numderiv.hpp"

// Closed-form hypergradient of a trilevel problem
//
//   min_x f1(x, y, z)  s.t.  y = h(x) = argmin_y f2(x, y, g(x, y)),
//                            z = g(x, y) = argmin_z f3(x, y, z).
//
// Levels are x = 0, y = 1, z = 2 of a three-level PointStack.

namespace mlopt {

enum class CurvatureMode {
  // analytic when f3 has third-order slices, fd otherwise
  automatic,
  analytic,
  fd,
};

enum class Wrt { x, y };

struct TrilevelOptions {
  SolveMode mode;
  CurvatureMode curvature = CurvatureMode::automatic;
  // Maximum stationarity residual accepted at levels 2 and 3.
  double stationarity_tol = kInf;
  FdConfig fd;
  // z re-solve used by the fd curvature path.
  NewtonOptions resolve;
};

struct TrilevelJacobians {
  Matrix dg_dx;  // d3 x d1
  Matrix dg_dy;  // d3 x d2
  Matrix dh_dx;  // d2 x d1
  CurvatureMode curvature_mode = CurvatureMode::analytic;
  // Largest linear-solve residual among the solves involved.
  double solve_residual = 0.0;
};

struct TrilevelGradient {
  Vector grad;
  TrilevelJacobians jacs;
};

// dg/dx = -H_zz^{-1} H_zx and dg/dy = -H_zz^{-1} H_zy for the blocks of f3.
std::pair<Matrix, Matrix> jac_g(const DerivativeOracle& f3, const PointStack& point,
                                const TrilevelOptions& opts = {}, double* solve_residual = nullptr);

// d/dw of dg/dy, as a d3 x d2 x d_w array (w = x or y).
Tensor3d solution_curvature(const DerivativeOracle& f3, const PointStack& point, const Matrix& dg_dy,
                            const Matrix& dg_dw, Wrt wrt, const TrilevelOptions& opts = {});

// D = d^2/dy^2 f2(x, y, g(x, y)), symmetrized.
Matrix reduced_hessian_y(const DerivativeOracle& f2, const DerivativeOracle& f3, const PointStack& point,
                         const Matrix& dg_dy, const TrilevelOptions& opts = {});

// dh/dx = -D^{-1} R from the reduced second-level stationarity condition.
Matrix jac_h(const DerivativeOracle& f2, const DerivativeOracle& f3, const PointStack& point,
             const Matrix& dg_dx, const Matrix& dg_dy, const TrilevelOptions& opts = {},
             double* solve_residual = nullptr);

TrilevelGradient grad_trilevel_detailed(const DerivativeOracle& f1, const DerivativeOracle& f2,
                                        const DerivativeOracle& f3, const PointStack& point,
                                        const TrilevelOptions& opts = {});

Vector grad_trilevel(const DerivativeOracle& f1, const DerivativeOracle& f2, const DerivativeOracle& f3,
                     const PointStack& point, const TrilevelOptions& opts = {});

// Same, taking the three objectives from a three-level problem.
Vector grad_trilevel(const MultilevelProblem& problem, const PointStack& point, const TrilevelOptions& opts = {});

// ||df2/dy + dg_dy^T df2/dz||, the second-level reduced stationarity residual.
double reduced_residual_y(const DerivativeOracle& f2, const PointStack& point, const Matrix& dg_dy);

}  // namespace mlopt
