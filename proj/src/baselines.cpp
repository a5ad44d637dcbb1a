#include "mlopt/baselines.hpp"

#include <fmt/format.h>

#include <cmath>

namespace mlopt {

Vector vgd_gradient(const DerivativeOracle& f1, const PointStack& point) { return f1.grad_block(point, 0); }

Vector fd_hypergradient(const DerivativeOracle& f1, const Vector& x1, const PointStack& warm,
                        const LowerSolver& lower_solve, const FdHyperConfig& cfg) {
  if (!(cfg.step > 0.0)) throw StructuralError("fd_hypergradient: step must be > 0");
  Vector g(x1.size());
  for (Index k = 0; k < x1.size(); ++k) {
    const double h = cfg.step * (1.0 + std::abs(x1(k)));
    auto reduced = [&](double shift) {
      Vector x = x1;
      x(k) += shift;
      try {
        return f1.value(lower_solve(x, warm));
      } catch (const Error&) {
        rethrow_with_suffix(fmt::format(" (fd hypergradient, coordinate {})", k));
      }
    };
    g(k) = (reduced(h) - reduced(-h)) / (2.0 * h);
  }
  if (!g.allFinite()) throw NumericError("fd_hypergradient: non-finite gradient");
  return g;
}

}  // namespace mlopt
