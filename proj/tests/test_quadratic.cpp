#include <doctest.h>

#include <Eigen/Dense>

#include "helpers.hpp"
#include "mlopt/numderiv.hpp"
#include "mlopt/quadratic.hpp"

using namespace mlopt;

namespace {

// Stationarity of every lower level at the returned stack, by brute force on
// the oracles.
double max_lower_gradient(const MultilevelProblem& prob, const PointStack& p) {
  const Index n = prob.levels();
  double worst = 0.0;
  // Reduced stationarity is only checkable at the deepest level directly;
  // shallower levels are checked through the response map below.
  worst = std::max(worst, prob.objective(n - 1).grad_block(p, n - 1).norm());
  return worst;
}

}  // namespace

TEST_CASE("exact response solves the deepest level and each reduced level") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<Index> dims{2, 3, 2};
    const auto model = QuadraticMultilevel::random(rng, dims);
    const auto prob = model.problem();
    Vector x1 = Vector::Random(2);
    const PointStack p = model.exact_response(x1);
    CHECK(max_lower_gradient(prob, p) <= 1e-10);

    // Level 2 optimality: perturbing y and re-solving z never lowers f2.
    const double base = prob.objective(1).value(p);
    std::mt19937_64 prng(trial);
    for (int k = 0; k < 10; ++k) {
      PointStack q = p;
      q[1] += 1e-3 * testing::random_point(prng, {3})[0];
      const Matrix hzz = prob.objective(2).hess_block(q, 2, 2);
      q[2] -= hzz.ldlt().solve(prob.objective(2).grad_block(q, 2));
      CHECK(prob.objective(1).value(q) >= base - 1e-12);
    }
  }
}

TEST_CASE("chain instance: every map is x_i = -x_{i-1}") {
  const auto model = QuadraticMultilevel::chain(4, 2);
  Vector x(2);
  x << 0.3, -1.2;
  const PointStack p = model.exact_response(x);
  CHECK((p[1] + x).norm() <= 1e-12);
  CHECK((p[2] - x).norm() <= 1e-12);
  CHECK((p[3] + x).norm() <= 1e-12);
  // f1 = 1/2 |x|^2 + x^T x4 = -1/2 |x|^2
  CHECK(model.reduced_value(x) == doctest::Approx(-0.5 * x.squaredNorm()));
  CHECK((model.reduced_leader_hessian() + Matrix::Identity(2, 2)).norm() <= 1e-12);
}

TEST_CASE("reduced leader Hessian matches second differences of the reduced value") {
  std::mt19937_64 rng(8);
  const auto model = QuadraticMultilevel::random(rng, {2, 2, 3}, {0.5, 1.0, true});
  const auto f = [&model](const Vector& x) { return model.reduced_value(x); };
  const Vector x0 = Vector::Random(2);
  const auto grad = [&f](const Vector& x) {
    return fd_jacobian([&f](const Vector& v) { return Vector::Constant(1, f(v)); }, x).transpose().eval();
  };
  const Matrix h = fd_jacobian([&grad](const Vector& v) -> Vector { return grad(v).col(0); }, x0, FdConfig{1e-3, 0});
  CHECK((h - model.reduced_leader_hessian()).cwiseAbs().maxCoeff() <= 1e-5);
}

TEST_CASE("nonnegative leader family") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 5; ++t) {
    const auto model = QuadraticMultilevel::random(rng, {3, 2, 2}, {0.5, 1.0, true});
    CHECK(model.leader_lower_bound() >= -1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(model.reduced_leader_hessian());
    CHECK(eig.eigenvalues().minCoeff() > 0.0);
    CHECK(model.reduced_value(Vector::Random(3)) >= 0.0);
  }
}

TEST_CASE("quadratic oracle is exact and has zero third order") {
  std::mt19937_64 rng(10);
  const auto model = QuadraticMultilevel::random(rng, {1, 2});
  const auto prob = model.problem();
  const PointStack p = testing::random_point(rng, {1, 2});
  CHECK(prob.objective(1).has_third_order());
  CHECK(prob.objective(1).third_slice(p, 1, 0, 1).max_abs() == 0.0);
  CHECK_THROWS_AS(QuadraticMultilevel({1, 2}, {}), StructuralError);
}
