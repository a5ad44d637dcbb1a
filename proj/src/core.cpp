#include "mlopt/core.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>

namespace mlopt {

PointStack::PointStack(std::vector<Vector> vals)
    : values(std::move(vals)), residuals(values.size(), std::nan("")) {}

PointStack PointStack::Zero(const std::vector<Index>& dims) {
  std::vector<Vector> vals;
  vals.reserve(dims.size());
  for (Index d : dims) vals.push_back(Vector::Zero(d));
  return PointStack(std::move(vals));
}

std::vector<Index> PointStack::dims() const {
  std::vector<Index> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(v.size());
  return out;
}

bool PointStack::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](const Vector& v) { return v.allFinite(); });
}

void PointStack::require_finite(const std::string& context) const {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].allFinite()) {
      throw NumericError(fmt::format("{}: non-finite entry at level {}", context, i + 1));
    }
  }
}

Tensor3d DerivativeOracle::third_slice(const PointStack&, Index, Index, Index) const {
  throw CapabilityError("oracle provides no third-order slices");
}

MultilevelProblem::MultilevelProblem(std::string name, std::vector<Index> dims,
                                     std::vector<OraclePtr> objectives)
    : name_(std::move(name)), dims_(std::move(dims)), objectives_(std::move(objectives)) {
  if (dims_.size() < 2) {
    throw StructuralError(fmt::format("problem '{}': need at least 2 levels, got {}", name_, dims_.size()));
  }
  if (objectives_.size() != dims_.size()) {
    throw StructuralError(fmt::format("problem '{}': {} levels but {} objectives", name_, dims_.size(),
                                      objectives_.size()));
  }
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (dims_[i] < 1) {
      throw StructuralError(fmt::format("problem '{}': level {} has dimension {}", name_, i + 1, dims_[i]));
    }
    if (!objectives_[i]) {
      throw StructuralError(fmt::format("problem '{}': level {} has no objective", name_, i + 1));
    }
  }
}

Index MultilevelProblem::max_dim() const { return *std::max_element(dims_.begin(), dims_.end()); }

void MultilevelProblem::check_point(const PointStack& p) const {
  if (p.levels() != levels()) {
    throw StructuralError(
        fmt::format("problem '{}': point has {} levels, expected {}", name_, p.levels(), levels()));
  }
  for (Index i = 0; i < levels(); ++i) {
    if (p[i].size() != dim(i)) {
      throw StructuralError(fmt::format("problem '{}': level {} has length {}, expected {}", name_,
                                        level_label(i), p[i].size(), dim(i)));
    }
  }
  if (p.residuals.size() != p.values.size()) {
    throw StructuralError(fmt::format("problem '{}': residual record has wrong length", name_));
  }
}

void require_shape(const Matrix& m, Index rows, Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw StructuralError(
        fmt::format("{}: shape {}x{}, expected {}x{}", what, m.rows(), m.cols(), rows, cols));
  }
}

bool ValidationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const ValidationCheck& c) { return c.passed(); });
}

double ValidationReport::max_deviation() const {
  double m = 0.0;
  for (const auto& c : checks) {
    if (!c.skipped) m = std::max(m, c.max_deviation);
  }
  return m;
}

namespace {

double inf_norm(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace

ValidationReport validate(const MultilevelProblem& problem, const PointStack& probe,
                          const ValidationOptions& opts) {
  problem.check_point(probe);
  ValidationReport report;
  const Index n = problem.levels();
  for (Index f = 0; f < n; ++f) {
    const auto& oracle = problem.objective(f);
    ValidationCheck sym{fmt::format("f{} hessian transpose symmetry", level_label(f))};
    double scale = 0.0;
    for (Index r = 0; r < n; ++r) {
      for (Index c = r; c < n; ++c) {
        const Matrix hrc = oracle.hess_block(probe, r, c);
        const Matrix hcr = oracle.hess_block(probe, c, r);
        require_shape(hrc, problem.dim(r), problem.dim(c),
                      fmt::format("f{} hess_block({}, {})", level_label(f), level_label(r), level_label(c)));
        require_shape(hcr, problem.dim(c), problem.dim(r),
                      fmt::format("f{} hess_block({}, {})", level_label(f), level_label(c), level_label(r)));
        sym.max_deviation = std::max(sym.max_deviation, inf_norm(hrc - hcr.transpose()));
        scale = std::max(scale, inf_norm(hrc));
      }
    }
    sym.threshold = opts.rel_tol * (1.0 + scale);
    report.checks.push_back(sym);

    if (!oracle.has_third_order()) continue;
    for (Index r = 0; r < n; ++r) {
      const Index d = problem.dim(r);
      ValidationCheck third{fmt::format("f{0} third slice ({1},{1},{1}) permutation symmetry", level_label(f),
                                        level_label(r))};
      if (d * d * d > opts.max_third_entries) {
        third.skipped = true;
        report.checks.push_back(third);
        continue;
      }
      const Tensor3d t = oracle.third_slice(probe, r, r, r);
      if (t.rows() != d || t.cols() != d || t.depth() != d) {
        throw StructuralError(fmt::format("f{0} third_slice({1},{1},{1}): wrong shape", level_label(f),
                                          level_label(r)));
      }
      double dev = 0.0;
      for (Index a = 0; a < d; ++a) {
        for (Index b = 0; b < d; ++b) {
          for (Index e = 0; e < d; ++e) {
            const double v = t(a, b, e);
            dev = std::max({dev, std::abs(v - t(b, a, e)), std::abs(v - t(a, e, b)), std::abs(v - t(e, b, a))});
          }
        }
      }
      third.max_deviation = dev;
      third.threshold = opts.rel_tol * (1.0 + t.max_abs());
      report.checks.push_back(third);
    }
  }
  return report;
}

void rethrow_with_suffix(const std::string& suffix) {
  try {
    throw;
  } catch (const StalePoint& e) {
    throw StalePoint(e.what() + suffix, e.level(), e.residual(), e.tolerance());
  } catch (const DivergedLowerLevel& e) {
    throw DivergedLowerLevel(e.what() + suffix, e.level());
  } catch (const ConvergenceBudget& e) {
    throw ConvergenceBudget(e.what() + suffix, e.residuals());
  } catch (const SingularHessian& e) {
    throw SingularHessian(e.what() + suffix, e.pivot());
  } catch (const NumericError& e) {
    throw NumericError(e.what() + suffix);
  } catch (const DataError& e) {
    throw DataError(e.what() + suffix);
  } catch (const CapabilityError& e) {
    throw CapabilityError(e.what() + suffix);
  } catch (const StructuralError& e) {
    throw StructuralError(e.what() + suffix);
  }
}

double evaluate(const MultilevelProblem& problem, int level, const PointStack& point) {
  if (level < 1 || level > problem.levels()) {
    throw StructuralError(fmt::format("evaluate: level {} outside [1, {}]", level, problem.levels()));
  }
  problem.check_point(point);
  const double v = problem.objective(level - 1).value(point);
  if (!std::isfinite(v)) {
    std::string where;
    for (Index i = 0; i < point.levels(); ++i) {
      const Index shown = std::min<Index>(point[i].size(), 4);
      where += fmt::format("{}x{}=[{}{}]", i == 0 ? "" : ", ", i + 1,
                           fmt::join(point[i].data(), point[i].data() + shown, " "),
                           shown < point[i].size() ? " ..." : "");
    }
    throw NumericError(fmt::format("evaluate: f{} (level {}) is non-finite at ({})", level, level, where));
  }
  return v;
}

}  // namespace mlopt
