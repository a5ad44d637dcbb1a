#pragma once

#include <optional>

#include "mlopt/core.hpp"
#include "mlopt/linsolve.hpp"
#include "mlopt/numderiv.hpp"

// Jacobian table of an n-level problem.
//
// total(i, j)   = dx_i/dx_j through every dependency path, levels < j fixed.
// partial(i, j) = direct dependence of x_i's response on x_j, with every
//                 other level shallower than i held fixed.
//
// They are tied by total(i, k) = sum_{j=k+1..i} total(i, j) partial(j, k)
// with total(i, i) = I. The reduced gradient of level m is
//   G_m = sum_{i>=m} total(i, m)^T df_m/dx_i,
// and the partials of an intermediate level m come from differentiating
// G_m = 0:  partial(m, k) = -(f_m'')^{-1} A_mk.

namespace mlopt {

enum class ReducedDerivative {
  // dG_m/dx_i = sum_l total(l, m)^T hess_block(f_m; l, i); Jacobian factors
  // are frozen, exact when every deeper solution map is affine.
  gauss_newton,
  // Central differences of G_m along x_i, Jacobian factors recomputed at the
  // perturbed point.
  exact_fd,
};

struct NlevelOptions {
  SolveMode mode;
  ReducedDerivative derivative = ReducedDerivative::gauss_newton;
  double stationarity_tol = kInf;
  FdConfig fd;
};

class JacobianTable {
 public:
  JacobianTable() = default;
  // Table over the window of levels first..levels-1 with x_first as leader.
  JacobianTable(Index levels, Index first);

  Index levels() const { return levels_; }
  Index first_level() const { return first_; }
  Index levels_resolved() const { return levels_resolved_; }

  bool has_total(Index i, Index j) const;
  bool has_partial(Index i, Index j) const;
  // Throw StructuralError for pairs not in the table.
  const Matrix& total(Index i, Index j) const;
  const Matrix& partial(Index i, Index j) const;
  void set_total(Index i, Index j, Matrix m);
  void set_partial(Index i, Index j, Matrix m);
  std::size_t total_count() const;
  std::size_t partial_count() const;

  // f_m'' for levels first+1..n-1 (empty matrix elsewhere).
  std::vector<Matrix> reduced_hessians;
  // ||G_m|| for levels first+1..n-1 (NaN elsewhere).
  std::vector<double> residuals;
  // Largest linear-solve residual encountered.
  double solve_residual = 0.0;

 private:
  friend class TableBuilder;
  std::size_t slot(Index i, Index j, const char* what) const;

  Index levels_ = 0;
  Index first_ = 0;
  Index levels_resolved_ = 0;
  std::vector<std::optional<Matrix>> total_;
  std::vector<std::optional<Matrix>> partial_;
};

JacobianTable build_table(const MultilevelProblem& problem, const PointStack& point, const NlevelOptions& opts = {});

// Table of the sub-problem made of levels first..n-1, shallower levels frozen.
JacobianTable build_window_table(const MultilevelProblem& problem, const PointStack& point, Index first,
                                 const NlevelOptions& opts = {});

// G_m from a table whose window starts at or before m.
Vector reduced_gradient(const MultilevelProblem& problem, const PointStack& point, const JacobianTable& table,
                        Index level);

// df_1/dx_1 = df_1/dx_1 (partial) + sum_{j>=2} total(j, 1)^T df_1/dx_j.
Vector grad_full(const MultilevelProblem& problem, const PointStack& point, const JacobianTable& table);

// ||grad_full - grad_trilevel||_inf for a three-level problem. The trilevel
// side uses analytic curvature when f3 provides third-order slices.
double trilevel_consistency(const MultilevelProblem& problem, const PointStack& point,
                            const NlevelOptions& opts = {});

}  // namespace mlopt
