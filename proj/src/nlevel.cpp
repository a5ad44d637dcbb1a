#include "mlopt/nlevel.hpp"

#include <fmt/format.h>

#include <map>

#include "mlopt/trilevel.hpp"

namespace mlopt {

JacobianTable::JacobianTable(Index levels, Index first)
    : reduced_hessians(static_cast<std::size_t>(levels)),
      residuals(static_cast<std::size_t>(levels), std::nan("")),
      levels_(levels),
      first_(first),
      total_(static_cast<std::size_t>(levels * levels)),
      partial_(static_cast<std::size_t>(levels * levels)) {
  if (levels < 2 || first < 0 || first >= levels - 1) {
    throw StructuralError(fmt::format("JacobianTable: window starting at level {} of {} is empty",
                                      level_label(first), levels));
  }
}

std::size_t JacobianTable::slot(Index i, Index j, const char* what) const {
  if (j < first_ || j >= i || i >= levels_) {
    throw StructuralError(fmt::format("JacobianTable::{}({}, {}) outside the table (levels {}..{})", what,
                                      level_label(i), level_label(j), level_label(first_), levels_));
  }
  return static_cast<std::size_t>(i * levels_ + j);
}

bool JacobianTable::has_total(Index i, Index j) const {
  return j >= first_ && j < i && i < levels_ && total_[static_cast<std::size_t>(i * levels_ + j)].has_value();
}

bool JacobianTable::has_partial(Index i, Index j) const {
  return j >= first_ && j < i && i < levels_ && partial_[static_cast<std::size_t>(i * levels_ + j)].has_value();
}

const Matrix& JacobianTable::total(Index i, Index j) const {
  const auto& e = total_[slot(i, j, "total")];
  if (!e) throw StructuralError(fmt::format("JacobianTable: total({}, {}) not resolved", level_label(i), level_label(j)));
  return *e;
}

const Matrix& JacobianTable::partial(Index i, Index j) const {
  const auto& e = partial_[slot(i, j, "partial")];
  if (!e) {
    throw StructuralError(fmt::format("JacobianTable: partial({}, {}) not resolved", level_label(i), level_label(j)));
  }
  return *e;
}

void JacobianTable::set_total(Index i, Index j, Matrix m) { total_[slot(i, j, "total")] = std::move(m); }
void JacobianTable::set_partial(Index i, Index j, Matrix m) { partial_[slot(i, j, "partial")] = std::move(m); }

std::size_t JacobianTable::total_count() const {
  return static_cast<std::size_t>(std::count_if(total_.begin(), total_.end(), [](const auto& e) { return e.has_value(); }));
}

std::size_t JacobianTable::partial_count() const {
  return static_cast<std::size_t>(
      std::count_if(partial_.begin(), partial_.end(), [](const auto& e) { return e.has_value(); }));
}

// Resolves the table over a window by the recursion of the level-window
// algorithm:
//   window(m):      every pair inside levels m..n-1
//   partial(m, k):  window(m) (line 1), then the chain {k} u [m+1..n-1]
//                   (line 2, reusing the partials already held), then the
//                   reduced stationarity solve for x_m.
class TableBuilder {
 public:
  TableBuilder(const MultilevelProblem& problem, const PointStack& point, Index first, const NlevelOptions& opts)
      : problem_(problem),
        point_(point),
        opts_(opts),
        n_(problem.levels()),
        table_(problem.levels(), first),
        window_done_(static_cast<std::size_t>(n_), false) {
    problem.check_point(point);
  }

  JacobianTable build() {
    const Index first = table_.first_level();
    ensure_window(first);
    for (Index m = first + 1; m < n_; ++m) {
      const double r = reduced_gradient(problem_, point_, table_, m).norm();
      table_.residuals[static_cast<std::size_t>(m)] = r;
      if (std::isfinite(opts_.stationarity_tol) && !(r <= opts_.stationarity_tol)) {
        throw StalePoint(fmt::format("build_table: level {} reduced stationarity residual {:.3e} exceeds {:.3e}",
                                     level_label(m), r, opts_.stationarity_tol),
                         level_label(m), r, opts_.stationarity_tol);
      }
    }
    table_.levels_resolved_ = n_ - first;
    return std::move(table_);
  }

 private:
  const Matrix& total_or_identity(Index i, Index j) {
    if (i == j) {
      auto it = identities_.find(i);
      if (it == identities_.end()) it = identities_.emplace(i, Matrix::Identity(problem_.dim(i), problem_.dim(i))).first;
      return it->second;
    }
    return table_.total(i, j);
  }

  void ensure_window(Index m) {
    if (window_done_[static_cast<std::size_t>(m)] || m == n_ - 1) return;
    ensure_window(m + 1);
    for (Index i = m + 1; i < n_; ++i) ensure_partial(i, m);
    for (Index i = m + 1; i < n_; ++i) {
      Matrix t = Matrix::Zero(problem_.dim(i), problem_.dim(m));
      for (Index j = m + 1; j <= i; ++j) t.noalias() += total_or_identity(i, j) * table_.partial(j, m);
      table_.set_total(i, m, std::move(t));
    }
    window_done_[static_cast<std::size_t>(m)] = true;
  }

  void ensure_partial(Index m, Index k) {
    if (table_.has_partial(m, k)) return;
    const DerivativeOracle& fm = problem_.objective(m);
    if (m == n_ - 1) {
      table_.set_partial(m, k, -solve(fm.hess_block(point_, m, m), fm.hess_block(point_, m, k), m));
      return;
    }
    ensure_window(m);
    for (Index i = m + 1; i < n_; ++i) ensure_partial(i, k);

    Matrix a = d_reduced_gradient(m, k);
    for (Index i = m + 1; i < n_; ++i) {
      // dx_i/dx_k with x_m frozen.
      Matrix path = Matrix::Zero(problem_.dim(i), problem_.dim(k));
      for (Index j = m + 1; j <= i; ++j) path.noalias() += total_or_identity(i, j) * table_.partial(j, k);
      a.noalias() += d_reduced_gradient(m, i) * path;
    }
    table_.set_partial(m, k, -solve(reduced_hessian(m), a, m));
  }

  const Matrix& reduced_hessian(Index m) {
    Matrix& h = table_.reduced_hessians[static_cast<std::size_t>(m)];
    if (h.size() == 0) {
      h = Matrix::Zero(problem_.dim(m), problem_.dim(m));
      for (Index i = m; i < n_; ++i) h.noalias() += d_reduced_gradient(m, i) * total_or_identity(i, m);
      h = (0.5 * (h + h.transpose())).eval();
    }
    return h;
  }

  // dG_m/dx_i with every other level held fixed.
  const Matrix& d_reduced_gradient(Index m, Index i) {
    const auto key = std::make_pair(m, i);
    auto it = dg_.find(key);
    if (it != dg_.end()) return it->second;
    const DerivativeOracle& fm = problem_.objective(m);
    Matrix out;
    if (m == n_ - 1) {
      out = fm.hess_block(point_, m, i);
    } else if (opts_.derivative == ReducedDerivative::gauss_newton) {
      out = Matrix::Zero(problem_.dim(m), problem_.dim(i));
      for (Index l = m; l < n_; ++l) out.noalias() += total_or_identity(l, m).transpose() * fm.hess_block(point_, l, i);
    } else {
      NlevelOptions inner = opts_;
      inner.stationarity_tol = kInf;
      const MultilevelProblem& problem = problem_;
      const VectorMap g = [&problem, &inner, m](const PointStack& q) -> Vector {
        const JacobianTable t = TableBuilder(problem, q, m, inner).build_without_residuals();
        return reduced_gradient(problem, q, t, m);
      };
      out = fd_jacobian_of_map(g, point_, i, opts_.fd);
    }
    return dg_.emplace(key, std::move(out)).first->second;
  }

  Matrix solve(const Matrix& a, const Matrix& b, Index level) {
    auto sol = solve_spd_detailed(a, b, opts_.mode, fmt::format("build_table: reduced Hessian of level {}", level_label(level)));
    table_.solve_residual = std::max(table_.solve_residual, sol.residual);
    return std::move(sol.x);
  }

 public:
  JacobianTable build_without_residuals() {
    ensure_window(table_.first_level());
    table_.levels_resolved_ = n_ - table_.first_level();
    return std::move(table_);
  }

 private:
  const MultilevelProblem& problem_;
  const PointStack& point_;
  NlevelOptions opts_;
  Index n_;
  JacobianTable table_;
  std::vector<bool> window_done_;
  std::map<Index, Matrix> identities_;
  std::map<std::pair<Index, Index>, Matrix> dg_;
};

JacobianTable build_table(const MultilevelProblem& problem, const PointStack& point, const NlevelOptions& opts) {
  return TableBuilder(problem, point, 0, opts).build();
}

JacobianTable build_window_table(const MultilevelProblem& problem, const PointStack& point, Index first,
                                 const NlevelOptions& opts) {
  return TableBuilder(problem, point, first, opts).build();
}

Vector reduced_gradient(const MultilevelProblem& problem, const PointStack& point, const JacobianTable& table,
                        Index level) {
  const DerivativeOracle& f = problem.objective(level);
  Vector g = f.grad_block(point, level);
  for (Index i = level + 1; i < problem.levels(); ++i) g.noalias() += table.total(i, level).transpose() * f.grad_block(point, i);
  return g;
}

Vector grad_full(const MultilevelProblem& problem, const PointStack& point, const JacobianTable& table) {
  if (table.levels() != problem.levels() || table.first_level() != 0) {
    throw StructuralError("grad_full: table does not cover the whole problem");
  }
  for (Index i = 1; i < problem.levels(); ++i) {
    if (!table.has_total(i, 0)) {
      throw StructuralError(fmt::format("grad_full: table is missing total({}, 1)", level_label(i)));
    }
  }
  return reduced_gradient(problem, point, table, 0);
}

double trilevel_consistency(const MultilevelProblem& problem, const PointStack& point, const NlevelOptions& opts) {
  if (problem.levels() != 3) {
    throw StructuralError(fmt::format("trilevel_consistency: problem '{}' has {} levels", problem.name(),
                                      problem.levels()));
  }
  const Vector full = grad_full(problem, point, build_table(problem, point, opts));
  TrilevelOptions topts;
  topts.mode = opts.mode;
  topts.stationarity_tol = opts.stationarity_tol;
  topts.fd = opts.fd;
  const Vector tri = grad_trilevel(problem, point, topts);
  return (full - tri).cwiseAbs().maxCoeff();
}

}  // namespace mlopt
