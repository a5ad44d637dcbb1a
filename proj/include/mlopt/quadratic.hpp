#pragma once

#include <random>

#include "mlopt/core.hpp"

namespace mlopt {

// f(v) = 1/2 v^T Q v + q^T v + c over the stacked vector v = (x_1, ..., x_n).
class QuadraticOracle final : public DerivativeOracle {
 public:
  QuadraticOracle(std::vector<Index> dims, Matrix q_mat, Vector q_vec, double constant = 0.0);

  double value(const PointStack& p) const override;
  Vector grad_block(const PointStack& p, Index j) const override;
  Matrix hess_block(const PointStack& p, Index r, Index c) const override;
  bool has_third_order() const override { return true; }
  Tensor3d third_slice(const PointStack& p, Index r, Index c, Index s) const override;

  const Matrix& hessian() const { return q_mat_; }
  const Vector& linear() const { return q_vec_; }
  double constant() const { return constant_; }

 private:
  Vector stack(const PointStack& p) const;

  std::vector<Index> dims_;
  std::vector<Index> offsets_;
  Matrix q_mat_;
  Vector q_vec_;
  double constant_;
};

struct QuadraticLevel {
  Matrix q_mat;
  Vector q_vec;
  double constant = 0.0;
};

struct RandomQuadraticOptions {
  // Scale of off-diagonal coupling relative to the identity ridge.
  double coupling = 0.5;
  double ridge = 1.0;
  // Build f_1 as 1/2 ||R v - t||^2 with an identity block on x_1, so that
  // f_1 >= 0 and the reduced leader Hessian is positive definite.
  bool nonnegative_leader = false;
};

// Multilevel problem whose every objective is a convex quadratic with SPD
// Hessian over the full stacked vector. Every solution map is affine and is
// computed exactly by backward induction.
class QuadraticMultilevel {
 public:
  QuadraticMultilevel(std::vector<Index> dims, std::vector<QuadraticLevel> levels);

  static QuadraticMultilevel random(std::mt19937_64& rng, const std::vector<Index>& dims,
                                    const RandomQuadraticOptions& opts = {});
  // f_i = 1/2 x_i^T x_i + x_i^T x_{i-1} (i >= 2), f_1 = 1/2 ||x_1||^2 + x_1^T x_n.
  static QuadraticMultilevel chain(Index levels, Index dim);

  MultilevelProblem problem(const std::string& name = "quadratic") const;
  const std::vector<Index>& dims() const { return dims_; }
  Index levels() const { return static_cast<Index>(dims_.size()); }
  const QuadraticLevel& level(Index i) const { return levels_[static_cast<std::size_t>(i)]; }

  // Lower levels at their exact optimal responses to x1.
  PointStack exact_response(const Vector& x1) const;
  // x1 -> f_1(x1, x_2^*(x1), ..., x_n^*(x1)).
  double reduced_value(const Vector& x1) const;
  // Hessian of the reduced leader objective (constant for this family).
  Matrix reduced_leader_hessian() const;
  // Minimum of f_1 over the whole stacked vector (>= 0 for nonnegative leaders).
  double leader_lower_bound() const;

 private:
  std::vector<Index> dims_;
  std::vector<Index> offsets_;
  std::vector<QuadraticLevel> levels_;
  // x_{2..n} = response_map_ * x_1 + response_offset_
  Matrix response_map_;
  Vector response_offset_;
};

}  // namespace mlopt
