#pragma once

#include <cmath>
#include <functional>

#include "mlopt/core.hpp"

// Central finite differences over PointStack blocks. These serve as the
// independent oracle in tests and as the fallback when an oracle has no
// analytic third-order slices.

namespace mlopt {

struct FdConfig {
  double step_abs = 1e-5;
  double step_rel = 1e-5;

  double step_for(double coordinate) const { return step_abs + step_rel * std::abs(coordinate); }
  FdConfig scaled(double factor) const { return {step_abs * factor, step_rel * factor}; }
};

using ScalarMap = std::function<double(const PointStack&)>;
using VectorMap = std::function<Vector(const PointStack&)>;

// d f / d x_j by central differences.
Vector fd_grad_block(const ScalarMap& f, const PointStack& point, Index j, const FdConfig& cfg = {});

// d^2 f / d x_r d x_c as central differences of fd_grad_block along x_c.
// When r == c the result is symmetrized.
Matrix fd_hess_block(const ScalarMap& f, const PointStack& point, Index r, Index c, const FdConfig& cfg = {});

// Jacobian of m with respect to x_j; column k is the central difference of m
// along coordinate k. Exceptions thrown by m (e.g. a failed inner re-solve)
// are rethrown as the same category with the coordinate index appended.
Matrix fd_jacobian_of_map(const VectorMap& m, const PointStack& point, Index j, const FdConfig& cfg = {});

// Same, for a plain vector map R^k -> R^m.
Matrix fd_jacobian(const std::function<Vector(const Vector&)>& m, const Vector& x, const FdConfig& cfg = {});

// Third-order slice d^3 f / dx_r dx_c dx_s from central differences of the
// oracle's analytic hess_block(r, c) along x_s.
Tensor3d fd_third_slice(const DerivativeOracle& oracle, const PointStack& point, Index r, Index c, Index s,
                        const FdConfig& cfg = {});

// Wraps an oracle's value() as a ScalarMap.
inline ScalarMap value_of(const DerivativeOracle& oracle) {
  return [&oracle](const PointStack& p) { return oracle.value(p); };
}

}  // namespace mlopt
