#pragma once

#include <Eigen/Core>

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "mlopt/errors.hpp"
#include "mlopt/tensor3.hpp"

// Multilevel problem model.
//
// Levels are 0-based internally; level 0 is the leader x_1 and level n-1 the
// innermost follower. Messages and logs use 1-based labels ("level 3" is the
// innermost level of a trilevel problem).
//
// Block layout: hess_block(r, c)(a, b) = d^2 f / d(x_r)_a d(x_c)_b, which has
// shape d_r x d_c. With this convention the bilevel implicit Jacobian reads
// dx_c/dx_r = -hess_block(c, c)^{-1} hess_block(c, r).

namespace mlopt {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-based label of a 0-based level index, as used in messages.
inline int level_label(Index level) { return static_cast<int>(level) + 1; }

// Current iterate (x_1, ..., x_n) plus the stationarity residual each lower
// level had at its last solve (NaN when unknown; entry 0 is unused).
struct PointStack {
  std::vector<Vector> values;
  std::vector<double> residuals;

  PointStack() = default;
  explicit PointStack(std::vector<Vector> vals);

  static PointStack Zero(const std::vector<Index>& dims);

  Index levels() const { return static_cast<Index>(values.size()); }
  const Vector& operator[](Index i) const { return values[static_cast<std::size_t>(i)]; }
  Vector& operator[](Index i) { return values[static_cast<std::size_t>(i)]; }

  std::vector<Index> dims() const;
  bool all_finite() const;
  // Throws NumericError naming the first level with a NaN/Inf entry.
  void require_finite(const std::string& context) const;

  double residual(Index level) const { return residuals[static_cast<std::size_t>(level)]; }
  void set_residual(Index level, double r) { residuals[static_cast<std::size_t>(level)] = r; }
};

// Value and block-derivative evaluators of one objective f_i.
class DerivativeOracle {
 public:
  virtual ~DerivativeOracle() = default;

  virtual double value(const PointStack& p) const = 0;
  // df/dx_j, length d_j.
  virtual Vector grad_block(const PointStack& p, Index j) const = 0;
  // d^2 f / dx_r dx_c, shape d_r x d_c.
  virtual Matrix hess_block(const PointStack& p, Index r, Index c) const = 0;

  virtual bool has_third_order() const { return false; }
  // d^3 f / dx_r dx_c dx_s, shape d_r x d_c x d_s. Throws CapabilityError
  // unless has_third_order().
  virtual Tensor3d third_slice(const PointStack& p, Index r, Index c, Index s) const;
};

using OraclePtr = std::shared_ptr<const DerivativeOracle>;

// n-level problem: objectives[i] is the objective of level i (0-based).
// Immutable after construction; safe to share across threads.
class MultilevelProblem {
 public:
  MultilevelProblem(std::string name, std::vector<Index> dims, std::vector<OraclePtr> objectives);

  Index levels() const { return static_cast<Index>(dims_.size()); }
  Index dim(Index level) const { return dims_[static_cast<std::size_t>(level)]; }
  const std::vector<Index>& dims() const { return dims_; }
  Index max_dim() const;
  const DerivativeOracle& objective(Index level) const { return *objectives_[static_cast<std::size_t>(level)]; }
  const OraclePtr& objective_ptr(Index level) const { return objectives_[static_cast<std::size_t>(level)]; }
  const std::string& name() const { return name_; }

  PointStack zero_point() const { return PointStack::Zero(dims_); }
  // Throws StructuralError if the stack does not match the problem dims.
  void check_point(const PointStack& p) const;

 private:
  std::string name_;
  std::vector<Index> dims_;
  std::vector<OraclePtr> objectives_;
};

struct ValidationCheck {
  std::string name;
  double max_deviation = 0.0;
  double threshold = 0.0;
  bool skipped = false;
  bool passed() const { return skipped || max_deviation <= threshold; }
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  bool passed() const;
  double max_deviation() const;
};

struct ValidationOptions {
  double rel_tol = 1e-8;
  // Self-slices with more entries than this are not materialized.
  Index max_third_entries = 2'000'000;
};

// Hessian-block transpose symmetry and, when available, third-slice
// permutation symmetry at the probe point.
ValidationReport validate(const MultilevelProblem& problem, const PointStack& probe,
                          const ValidationOptions& opts = {});

// Value of the objective of the given 1-based level.
double evaluate(const MultilevelProblem& problem, int level, const PointStack& point);

// Throws StructuralError unless the block has the expected shape.
void require_shape(const Matrix& m, Index rows, Index cols, const std::string& what);

}  // namespace mlopt
