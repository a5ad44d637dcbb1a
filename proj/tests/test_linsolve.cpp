#include <doctest.h>

#include <random>

#include "mlopt/linsolve.hpp"

using namespace mlopt;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index d, double ridge = 1.0) {
  std::normal_distribution<double> n01;
  MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < d * d; ++i) a.data()[i] = n01(rng);
  return a.transpose() * a / static_cast<double>(d) + ridge * MatrixXd::Identity(d, d);
}

}  // namespace

TEST_CASE("solve_spd examples") {
  VectorXd b(3);
  b << 1, -2, 3;
  const auto one = solve_spd_detailed(MatrixXd::Identity(3, 3), b, SolveMode::Cg(1));
  CHECK((one.x.col(0) - b).norm() == doctest::Approx(0.0));
  CHECK(one.iterations == 1);

  MatrixXd a = MatrixXd::Zero(2, 2);
  a.diagonal() << 1, 2;
  VectorXd b2(2);
  b2 << 1, 2;
  const auto cg = solve_spd_detailed(a, b2, SolveMode::Cg(2));
  CHECK((cg.x.col(0) - VectorXd::Ones(2)).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(cg.iterations <= 2);

  const MatrixXd two = MatrixXd::Constant(1, 1, 2.0);
  const MatrixXd one_rhs = MatrixXd::Constant(1, 1, 1.0);
  CHECK(solve_spd(two, one_rhs)(0, 0) == doctest::Approx(0.5));
  CHECK(solve_spd(two, one_rhs, SolveMode::Cg())(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("direct solve accuracy and A^{-1} A = I") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 10; ++t) {
    const MatrixXd a = random_spd(rng, 6);
    MatrixXd b = MatrixXd::Random(6, 3);
    const MatrixXd x = solve_spd(a, b);
    CHECK((a * x - b).cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + b.cwiseAbs().maxCoeff()));
    CHECK((solve_spd(a, a) - MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("CG with cg_iters >= d matches the direct solve") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    const Eigen::Index d = 2 + t % 5;
    const MatrixXd a = random_spd(rng, d);
    const MatrixXd b = MatrixXd::Random(d, 2);
    const MatrixXd direct = solve_spd(a, b);
    const MatrixXd cg = solve_spd(a, b, SolveMode::Cg(static_cast<int>(d), 0.0));
    CHECK((direct - cg).cwiseAbs().maxCoeff() <= 1e-7 * (1.0 + direct.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("CG residual is non-increasing on SPD systems") {
  std::mt19937_64 rng(4);
  const MatrixXd a = random_spd(rng, 12, 0.5);
  const VectorXd b = VectorXd::Random(12);
  double prev = b.norm();
  for (int k = 1; k <= 12; ++k) {
    const auto sol = solve_spd_detailed(a, b, SolveMode::Cg(k, 0.0));
    CHECK(sol.residual <= prev * (1.0 + 1e-12));
    CHECK(std::abs(sol.residual - (a * sol.x - b).norm()) <= 1e-8);
    prev = sol.residual;
  }
}

TEST_CASE("non-PD matrices raise SingularHessian with the failing pivot") {
  MatrixXd a(3, 3);
  a << 2, 0, 0, 0, 1, 2, 0, 2, 1;
  try {
    solve_spd(a, MatrixXd::Identity(3, 3));
    FAIL("expected SingularHessian");
  } catch (const SingularHessian& e) {
    CHECK(e.pivot() == 2);
  }
  SolveMode shifted;
  shifted.shift = 5.0;
  CHECK_NOTHROW(solve_spd(a, MatrixXd::Identity(3, 3), shifted));
  CHECK_THROWS_AS(solve_spd(a, MatrixXd::Identity(2, 2)), StructuralError);
  CHECK_THROWS_AS(solve_spd(a, MatrixXd::Identity(3, 3), SolveMode::Cg(0)), StructuralError);
}

TEST_CASE("is_spd examples") {
  CHECK(is_spd(MatrixXd::Identity(3, 3)));
  CHECK_FALSE(is_spd(MatrixXd::Zero(1, 1)));
  MatrixXd a(2, 2);
  a << 2, 1, 1, 2;
  CHECK(is_spd(a));
  MatrixXd asym(2, 2);
  asym << 2, 1, 0, 2;
  CHECK_FALSE(is_spd(asym));
}

TEST_CASE("solve_spd works for other scalar types") {
  Eigen::MatrixXf a(2, 2);
  a << 4, 1, 1, 3;
  Eigen::MatrixXf b(2, 1);
  b << 1, 2;
  const Eigen::MatrixXf x = solve_spd(a, b);
  CHECK((a * x - b).norm() <= 1e-5f);
}
