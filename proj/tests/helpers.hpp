#pragma once

#include <Eigen/Dense>

#include <functional>
#include <random>

#include "mlopt/core.hpp"
#include "mlopt/newton.hpp"
#include "mlopt/numderiv.hpp"

namespace testing {

using namespace mlopt;

inline Vector stack_vector(const PointStack& p) {
  Index total = 0;
  for (const auto& v : p.values) total += v.size();
  Vector out(total);
  Index off = 0;
  for (const auto& v : p.values) {
    out.segment(off, v.size()) = v;
    off += v.size();
  }
  return out;
}

inline std::vector<Index> offsets(const std::vector<Index>& dims) {
  std::vector<Index> off(dims.size(), 0);
  for (std::size_t i = 1; i < dims.size(); ++i) off[i] = off[i - 1] + dims[i - 1];
  return off;
}

inline PointStack random_point(std::mt19937_64& rng, const std::vector<Index>& dims, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  PointStack p = PointStack::Zero(dims);
  for (auto& v : p.values)
    for (Index k = 0; k < v.size(); ++k) v(k) = u(rng);
  return p;
}

// f(v) = 1/2 v^T Q v + q^T v + 1/6 sum_abc T_abc v_a v_b v_c over the stacked
// vector, with T fully symmetric.
class CubicOracle : public DerivativeOracle {
 public:
  CubicOracle(std::vector<Index> dims, Matrix q, Vector lin, std::vector<double> t)
      : dims_(std::move(dims)), off_(offsets(dims_)), q_(std::move(q)), lin_(std::move(lin)), t_(std::move(t)) {}

  static CubicOracle random(std::mt19937_64& rng, const std::vector<Index>& dims, double cubic_scale) {
    Index d = 0;
    for (Index x : dims) d += x;
    std::normal_distribution<double> n01(0.0, 1.0);
    Matrix a(d, d);
    for (Index i = 0; i < d * d; ++i) a.data()[i] = n01(rng);
    Matrix q = Matrix::Identity(d, d) + 0.3 * a.transpose() * a / static_cast<double>(d);
    Vector lin(d);
    for (Index i = 0; i < d; ++i) lin(i) = n01(rng);
    std::vector<double> raw(static_cast<std::size_t>(d * d * d));
    for (auto& x : raw) x = cubic_scale * n01(rng);
    std::vector<double> t(raw.size());
    auto at = [d](Index a_, Index b, Index c) { return static_cast<std::size_t>(a_ + d * (b + d * c)); };
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j)
        for (Index k = 0; k < d; ++k)
          t[at(i, j, k)] = (raw[at(i, j, k)] + raw[at(i, k, j)] + raw[at(j, i, k)] + raw[at(j, k, i)] +
                            raw[at(k, i, j)] + raw[at(k, j, i)]) /
                           6.0;
    return CubicOracle(dims, q, lin, t);
  }

  double value(const PointStack& p) const override {
    const Vector v = stack_vector(p);
    double cubic = 0.0;
    const Index d = v.size();
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j)
        for (Index k = 0; k < d; ++k) cubic += t(i, j, k) * v(i) * v(j) * v(k);
    return 0.5 * v.dot(q_ * v) + lin_.dot(v) + cubic / 6.0;
  }

  Vector grad_block(const PointStack& p, Index j) const override {
    const Vector g = full_grad(stack_vector(p));
    return g.segment(off(j), dim(j));
  }

  Matrix hess_block(const PointStack& p, Index r, Index c) const override {
    const Vector v = stack_vector(p);
    Matrix h(dim(r), dim(c));
    for (Index a = 0; a < dim(r); ++a)
      for (Index b = 0; b < dim(c); ++b) {
        const Index ia = off(r) + a;
        const Index ib = off(c) + b;
        double s = q_(ia, ib);
        for (Index k = 0; k < v.size(); ++k) s += t(ia, ib, k) * v(k);
        h(a, b) = s;
      }
    return h;
  }

  bool has_third_order() const override { return true; }

  Tensor3d third_slice(const PointStack&, Index r, Index c, Index s) const override {
    Tensor3d out(dim(r), dim(c), dim(s));
    for (Index a = 0; a < dim(r); ++a)
      for (Index b = 0; b < dim(c); ++b)
        for (Index e = 0; e < dim(s); ++e) out(a, b, e) = t(off(r) + a, off(c) + b, off(s) + e);
    return out;
  }

 private:
  Index dim(Index j) const { return dims_[static_cast<std::size_t>(j)]; }
  Index off(Index j) const { return off_[static_cast<std::size_t>(j)]; }
  double t(Index a, Index b, Index c) const {
    const Index d = q_.rows();
    return t_[static_cast<std::size_t>(a + d * (b + d * c))];
  }
  Vector full_grad(const Vector& v) const {
    Vector g = q_ * v + lin_;
    const Index d = v.size();
    for (Index i = 0; i < d; ++i) {
      double s = 0.0;
      for (Index j = 0; j < d; ++j)
        for (Index k = 0; k < d; ++k) s += t(i, j, k) * v(j) * v(k);
      g(i) += 0.5 * s;
    }
    return g;
  }

  std::vector<Index> dims_;
  std::vector<Index> off_;
  Matrix q_;
  Vector lin_;
  std::vector<double> t_;
};

// Value from a lambda; derivatives come from whatever the test overrides.
class ValueOracle : public DerivativeOracle {
 public:
  explicit ValueOracle(std::function<double(const PointStack&)> f) : f_(std::move(f)) {}
  double value(const PointStack& p) const override { return f_(p); }
  Vector grad_block(const PointStack& p, Index j) const override { return Vector::Zero(p[j].size()); }
  Matrix hess_block(const PointStack& p, Index r, Index c) const override {
    return Matrix::Zero(p[r].size(), p[c].size());
  }

 private:
  std::function<double(const PointStack&)> f_;
};


// Brute-force reduced value of a three-level problem: z by Newton on f3,
// y by Newton on the envelope gradient of y -> f2(x, y, z*(x, y)) with a
// finite-difference Hessian.
struct BruteForceTrilevel {
  const MultilevelProblem& prob;
  // Largest final reduced-gradient norm over every respond() call.
  mutable double worst_residual = 0.0;

  void solve_z(PointStack& p) const { newton_minimize_block(prob.objective(2), p, 2, {1e-13, 200}); }

  Vector envelope_gradient(PointStack p) const {
    solve_z(p);
    const auto& f2 = prob.objective(1);
    const auto& f3 = prob.objective(2);
    const Matrix dz_dy = -f3.hess_block(p, 2, 2).ldlt().solve(f3.hess_block(p, 2, 1));
    return f2.grad_block(p, 1) + dz_dy.transpose() * f2.grad_block(p, 2);
  }

  PointStack respond(const Vector& x, PointStack start) const {
    start[0] = x;
    const VectorMap grad = [this](const PointStack& q) { return envelope_gradient(q); };
    double gnorm = 0.0;
    for (int it = 0; it < 100; ++it) {
      const Vector g = grad(start);
      gnorm = g.norm();
      if (gnorm < 1e-12) break;
      const Matrix h = fd_jacobian_of_map(grad, start, 1, FdConfig{1e-6, 0.0});
      start[1] -= (0.5 * (h + h.transpose())).ldlt().solve(g);
    }
    worst_residual = std::max(worst_residual, gnorm);
    solve_z(start);
    return start;
  }

  double reduced_f1(const Vector& x, const PointStack& start) const {
    return prob.objective(0).value(respond(x, start));
  }

  Vector hypergradient(const PointStack& start, double h = 1e-4) const {
    const Vector x = start[0];
    Vector g(x.size());
    for (Index k = 0; k < x.size(); ++k) {
      Vector xp = x, xm = x;
      xp(k) += h;
      xm(k) -= h;
      g(k) = (reduced_f1(xp, start) - reduced_f1(xm, start)) / (2 * h);
    }
    return g;
  }
};

// Central-difference hypergradient of a reduced value function x -> F(x).
inline Vector fd_reduced_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-4) {
  Vector g(x.size());
  for (Index k = 0; k < x.size(); ++k) {
    Vector xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    g(k) = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

inline double rel_error(const Vector& a, const Vector& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace testing
