#include "mlopt/trilevel.hpp"

#include <fmt/format.h>

namespace mlopt {

namespace {

constexpr Index kX = 0;
constexpr Index kY = 1;
constexpr Index kZ = 2;

void require_trilevel(const PointStack& point, const char* what) {
  if (point.levels() != 3) {
    throw StructuralError(fmt::format("{}: expected a 3-level point, got {} levels", what, point.levels()));
  }
}

CurvatureMode resolve_curvature(CurvatureMode mode, const DerivativeOracle& f3) {
  if (mode != CurvatureMode::automatic) return mode;
  return f3.has_third_order() ? CurvatureMode::analytic : CurvatureMode::fd;
}

Matrix solve_tracked(const Matrix& a, const Matrix& b, const SolveMode& mode, const std::string& what,
                     double* residual) {
  auto sol = solve_spd_detailed(a, b, mode, what);
  if (residual) *residual = std::max(*residual, sol.residual);
  return std::move(sol.x);
}

}  // namespace

std::pair<Matrix, Matrix> jac_g(const DerivativeOracle& f3, const PointStack& point, const TrilevelOptions& opts,
                                double* solve_residual) {
  require_trilevel(point, "jac_g");
  if (std::isfinite(opts.stationarity_tol)) {
    const double r = f3.grad_block(point, kZ).norm();
    if (r > opts.stationarity_tol) {
      throw StalePoint(fmt::format("jac_g: level 3 stationarity residual {:.3e} exceeds {:.3e}", r,
                                   opts.stationarity_tol),
                       3, r, opts.stationarity_tol);
    }
  }
  const Index d1 = point[kX].size();
  const Index d2 = point[kY].size();
  const Index d3 = point[kZ].size();
  const Matrix hzz = f3.hess_block(point, kZ, kZ);
  Matrix rhs(d3, d1 + d2);
  rhs << f3.hess_block(point, kZ, kX), f3.hess_block(point, kZ, kY);
  const Matrix sol = -solve_tracked(hzz, rhs, opts.mode, "jac_g: level 3 Hessian", solve_residual);
  Matrix dg_dx = sol.leftCols(d1);
  Matrix dg_dy = sol.rightCols(d2);
  require_shape(dg_dx, d3, d1, "dg_dx");
  require_shape(dg_dy, d3, d2, "dg_dy");
  return {std::move(dg_dx), std::move(dg_dy)};
}

Tensor3d solution_curvature(const DerivativeOracle& f3, const PointStack& point, const Matrix& dg_dy,
                            const Matrix& dg_dw, Wrt wrt, const TrilevelOptions& opts) {
  require_trilevel(point, "solution_curvature");
  const Index w = (wrt == Wrt::x) ? kX : kY;
  const Index d2 = point[kY].size();
  const Index d3 = point[kZ].size();
  const Index dw = point[w].size();
  require_shape(dg_dy, d3, d2, "solution_curvature dg_dy");
  require_shape(dg_dw, d3, dw, "solution_curvature dg_dw");

  Tensor3d out(d3, d2, dw);
  const CurvatureMode mode = resolve_curvature(opts.curvature, f3);
  if (mode == CurvatureMode::analytic) {
    if (!f3.has_third_order()) {
      throw CapabilityError("solution_curvature: analytic mode needs third-order slices of f3");
    }
    const Matrix hzz = f3.hess_block(point, kZ, kZ);
    const Tensor3d t_zzw = f3.third_slice(point, kZ, kZ, w);
    const Tensor3d t_zzz = f3.third_slice(point, kZ, kZ, kZ);
    const Tensor3d t_zyw = f3.third_slice(point, kZ, kY, w);
    const Tensor3d t_zyz = f3.third_slice(point, kZ, kY, kZ);
    Matrix rhs(d3, d2 * dw);
    for (Index b = 0; b < dw; ++b) {
      const Matrix d_hzz = t_zzw.slice(b) + t_zzz.contract_last(dg_dw.col(b));
      const Matrix d_hzy = t_zyw.slice(b) + t_zyz.contract_last(dg_dw.col(b));
      rhs.middleCols(b * d2, d2) = d_hzz * dg_dy + d_hzy;
    }
    const Matrix sol = -solve_spd(hzz, rhs, opts.mode);
    for (Index b = 0; b < dw; ++b) out.slice(b) = sol.middleCols(b * d2, d2);
    return out;
  }

  TrilevelOptions inner = opts;
  inner.stationarity_tol = kInf;
  const VectorMap m = [&](const PointStack& p) -> Vector {
    PointStack q = p;
    const double r = newton_minimize_block(f3, q, kZ, opts.resolve);
    if (!(r <= std::max(1e3 * opts.resolve.tol, 1e-7))) {
      throw ConvergenceBudget(fmt::format("solution_curvature: level 3 re-solve stalled at residual {:.3e}", r),
                              {r});
    }
    const Matrix g = jac_g(f3, q, inner).second;
    return Eigen::Map<const Vector>(g.data(), g.size());
  };
  const Matrix jac = fd_jacobian_of_map(m, point, w, opts.fd);
  for (Index b = 0; b < dw; ++b) out.slice(b) = Eigen::Map<const Matrix>(jac.col(b).data(), d3, d2);
  return out;
}

double reduced_residual_y(const DerivativeOracle& f2, const PointStack& point, const Matrix& dg_dy) {
  return (f2.grad_block(point, kY) + dg_dy.transpose() * f2.grad_block(point, kZ)).norm();
}

Matrix reduced_hessian_y(const DerivativeOracle& f2, const DerivativeOracle& f3, const PointStack& point,
                         const Matrix& dg_dy, const TrilevelOptions& opts) {
  require_trilevel(point, "reduced_hessian_y");
  const Matrix hyy = f2.hess_block(point, kY, kY);
  const Matrix hyz = f2.hess_block(point, kY, kZ);
  const Matrix hzz = f2.hess_block(point, kZ, kZ);
  const Tensor3d c_y = solution_curvature(f3, point, dg_dy, dg_dy, Wrt::y, opts);
  Matrix d = hyy + dg_dy.transpose() * hyz.transpose() + hyz * dg_dy + dg_dy.transpose() * hzz * dg_dy +
             c_y.contract_first(f2.grad_block(point, kZ));
  return 0.5 * (d + d.transpose());
}

Matrix jac_h(const DerivativeOracle& f2, const DerivativeOracle& f3, const PointStack& point, const Matrix& dg_dx,
             const Matrix& dg_dy, const TrilevelOptions& opts, double* solve_residual) {
  require_trilevel(point, "jac_h");
  const Index d1 = point[kX].size();
  const Index d2 = point[kY].size();
  if (std::isfinite(opts.stationarity_tol)) {
    const double r = reduced_residual_y(f2, point, dg_dy);
    if (r > opts.stationarity_tol) {
      throw StalePoint(fmt::format("jac_h: level 2 reduced stationarity residual {:.3e} exceeds {:.3e}", r,
                                   opts.stationarity_tol),
                       2, r, opts.stationarity_tol);
    }
  }
  const Matrix hyz = f2.hess_block(point, kY, kZ);
  const Matrix hzz = f2.hess_block(point, kZ, kZ);
  const Matrix hyx = f2.hess_block(point, kY, kX);
  const Matrix hzx = f2.hess_block(point, kZ, kX);
  const Vector fz = f2.grad_block(point, kZ);

  const Tensor3d c_x = solution_curvature(f3, point, dg_dy, dg_dx, Wrt::x, opts);
  const Matrix d = reduced_hessian_y(f2, f3, point, dg_dy, opts);
  const Matrix r = hyx + hyz * dg_dx + dg_dy.transpose() * hzx + dg_dy.transpose() * hzz * dg_dx +
                   c_x.contract_first(fz);
  Matrix dh_dx = -solve_tracked(d, r, opts.mode, "jac_h: level 2 reduced Hessian", solve_residual);
  require_shape(dh_dx, d2, d1, "dh_dx");
  return dh_dx;
}

TrilevelGradient grad_trilevel_detailed(const DerivativeOracle& f1, const DerivativeOracle& f2,
                                        const DerivativeOracle& f3, const PointStack& point,
                                        const TrilevelOptions& opts) {
  require_trilevel(point, "grad_trilevel");
  TrilevelGradient out;
  auto& j = out.jacs;
  j.curvature_mode = resolve_curvature(opts.curvature, f3);
  std::tie(j.dg_dx, j.dg_dy) = jac_g(f3, point, opts, &j.solve_residual);
  j.dh_dx = jac_h(f2, f3, point, j.dg_dx, j.dg_dy, opts, &j.solve_residual);
  const Matrix dz_dx = j.dg_dx + j.dg_dy * j.dh_dx;
  out.grad = f1.grad_block(point, kX) + j.dh_dx.transpose() * f1.grad_block(point, kY) +
             dz_dx.transpose() * f1.grad_block(point, kZ);
  if (out.grad.size() != point[kX].size()) throw StructuralError("grad_trilevel: gradient has wrong length");
  return out;
}

Vector grad_trilevel(const DerivativeOracle& f1, const DerivativeOracle& f2, const DerivativeOracle& f3,
                     const PointStack& point, const TrilevelOptions& opts) {
  return grad_trilevel_detailed(f1, f2, f3, point, opts).grad;
}

Vector grad_trilevel(const MultilevelProblem& problem, const PointStack& point, const TrilevelOptions& opts) {
  if (problem.levels() != 3) {
    throw StructuralError(fmt::format("grad_trilevel: problem '{}' has {} levels", problem.name(), problem.levels()));
  }
  problem.check_point(point);
  return grad_trilevel(problem.objective(0), problem.objective(1), problem.objective(2), point, opts);
}

}  // namespace mlopt
