#include "mlopt/numderiv.hpp"

#include <fmt/format.h>

#include <cmath>

namespace mlopt {

namespace {

void check_level(const PointStack& point, Index j, const char* what) {
  if (j < 0 || j >= point.levels()) {
    throw StructuralError(fmt::format("{}: level {} outside [1, {}]", what, j + 1, point.levels()));
  }
}

double probe(const ScalarMap& f, const PointStack& p, Index j, Index k) {
  const double v = f(p);
  if (!std::isfinite(v)) {
    throw NumericError(fmt::format("finite difference: non-finite value when perturbing level {} coordinate {}",
                                   level_label(j), k));
  }
  return v;
}

template <typename Fn>
auto rethrow_with_coordinate(Fn&& fn, Index j, Index k) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error&) {
    rethrow_with_suffix(fmt::format(" (perturbing level {} coordinate {})", level_label(j), k));
  }
}

}  // namespace

Vector fd_grad_block(const ScalarMap& f, const PointStack& point, Index j, const FdConfig& cfg) {
  check_level(point, j, "fd_grad_block");
  PointStack p = point;
  const Index d = point[j].size();
  Vector g(d);
  for (Index k = 0; k < d; ++k) {
    const double x0 = point[j](k);
    const double h = cfg.step_for(x0);
    p[j](k) = x0 + h;
    const double fp = probe(f, p, j, k);
    p[j](k) = x0 - h;
    const double fm = probe(f, p, j, k);
    p[j](k) = x0;
    g(k) = (fp - fm) / (2.0 * h);
  }
  return g;
}

Matrix fd_hess_block(const ScalarMap& f, const PointStack& point, Index r, Index c, const FdConfig& cfg) {
  check_level(point, r, "fd_hess_block");
  check_level(point, c, "fd_hess_block");
  PointStack p = point;
  Matrix h(point[r].size(), point[c].size());
  for (Index k = 0; k < point[c].size(); ++k) {
    const double x0 = point[c](k);
    const double step = cfg.step_for(x0);
    p[c](k) = x0 + step;
    const Vector gp = fd_grad_block(f, p, r, cfg);
    p[c](k) = x0 - step;
    const Vector gm = fd_grad_block(f, p, r, cfg);
    p[c](k) = x0;
    h.col(k) = (gp - gm) / (2.0 * step);
  }
  if (r == c) h = 0.5 * (h + h.transpose()).eval();
  return h;
}

Matrix fd_jacobian_of_map(const VectorMap& m, const PointStack& point, Index j, const FdConfig& cfg) {
  check_level(point, j, "fd_jacobian_of_map");
  PointStack p = point;
  Matrix jac;
  for (Index k = 0; k < point[j].size(); ++k) {
    const double x0 = point[j](k);
    const double h = cfg.step_for(x0);
    p[j](k) = x0 + h;
    const Vector mp = rethrow_with_coordinate([&] { return m(p); }, j, k);
    p[j](k) = x0 - h;
    const Vector mm = rethrow_with_coordinate([&] { return m(p); }, j, k);
    p[j](k) = x0;
    if (k == 0) jac.resize(mp.size(), point[j].size());
    if (mp.size() != jac.rows() || mm.size() != jac.rows()) {
      throw StructuralError("fd_jacobian_of_map: map output length changed between probes");
    }
    jac.col(k) = (mp - mm) / (2.0 * h);
    if (!jac.col(k).allFinite()) {
      throw NumericError(fmt::format("fd_jacobian_of_map: non-finite column (level {} coordinate {})",
                                     level_label(j), k));
    }
  }
  return jac;
}

Matrix fd_jacobian(const std::function<Vector(const Vector&)>& m, const Vector& x, const FdConfig& cfg) {
  PointStack p({x});
  return fd_jacobian_of_map([&m](const PointStack& s) { return m(s[0]); }, p, 0, cfg);
}

Tensor3d fd_third_slice(const DerivativeOracle& oracle, const PointStack& point, Index r, Index c, Index s,
                        const FdConfig& cfg) {
  check_level(point, s, "fd_third_slice");
  PointStack p = point;
  Tensor3d t(point[r].size(), point[c].size(), point[s].size());
  for (Index k = 0; k < point[s].size(); ++k) {
    const double x0 = point[s](k);
    const double h = cfg.step_for(x0);
    p[s](k) = x0 + h;
    const Matrix hp = oracle.hess_block(p, r, c);
    p[s](k) = x0 - h;
    const Matrix hm = oracle.hess_block(p, r, c);
    p[s](k) = x0;
    t.slice(k) = (hp - hm) / (2.0 * h);
  }
  return t;
}

}  // namespace mlopt
