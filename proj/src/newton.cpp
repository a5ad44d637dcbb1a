#include "mlopt/newton.hpp"

#include "mlopt/linsolve.hpp"

namespace mlopt {

double newton_minimize_block(const DerivativeOracle& f, PointStack& p, Index level, const NewtonOptions& opts) {
  Vector g = f.grad_block(p, level);
  double gnorm = g.norm();
  for (int it = 0; it < opts.max_iters && gnorm > opts.tol; ++it) {
    const Matrix h = f.hess_block(p, level, level);
    Vector step;
    try {
      step = -solve_spd(h, g, SolveMode::Direct()).col(0);
    } catch (const SingularHessian&) {
      step = -g;
    }
    const double slope = g.dot(step);
    if (!(slope < 0.0)) step = -g;
    const Vector x0 = p[level];
    const double f0 = f.value(p);
    double alpha = 1.0;
    bool moved = false;
    for (int k = 0; k < 60; ++k) {
      p[level] = x0 + alpha * step;
      const double f1 = f.value(p);
      if (std::isfinite(f1) && f1 <= f0 + 1e-4 * alpha * g.dot(step)) {
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) {
      // Value comparisons are at roundoff; accept a full step only if it
      // shrinks the gradient.
      p[level] = x0 + step;
      const Vector g1 = f.grad_block(p, level);
      if (!(g1.norm() < gnorm)) {
        p[level] = x0;
        break;
      }
    }
    g = f.grad_block(p, level);
    gnorm = g.norm();
  }
  return gnorm;
}

}  // namespace mlopt
