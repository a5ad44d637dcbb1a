#include <doctest.h>

#include "helpers.hpp"
#include "mlopt/nlevel.hpp"
#include "mlopt/stackelberg.hpp"
#include "mlopt/trilevel.hpp"

using namespace mlopt;

namespace {

QuadraticMultilevel random_model(std::mt19937_64& rng, Index levels, int max_dim) {
  std::uniform_int_distribution<int> dim(1, max_dim);
  std::vector<Index> dims;
  for (Index i = 0; i < levels; ++i) dims.push_back(dim(rng));
  return QuadraticMultilevel::random(rng, dims);
}

NlevelOptions exact_fd() {
  NlevelOptions o;
  o.derivative = ReducedDerivative::exact_fd;
  return o;
}

}  // namespace

TEST_CASE("bilevel base case: total(2,1) = -Q^{-1} R") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 10; ++t) {
    const auto model = random_model(rng, 2, 5);
    const auto prob = model.problem();
    const PointStack p = testing::random_point(rng, model.dims());
    const JacobianTable table = build_table(prob, p);
    const Index d1 = model.dims()[0], d2 = model.dims()[1];
    const Matrix& q = model.level(1).q_mat;
    const Matrix expected = -q.block(d1, d1, d2, d2).llt().solve(q.block(d1, 0, d2, d1));
    CHECK((table.total(1, 0) - expected).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(table.partial(1, 0) == table.total(1, 0));
  }
}

TEST_CASE("Stackelberg table entries") {
  const auto model = stackelberg_model({1});
  const auto prob = model.problem();
  const JacobianTable t = build_table(prob, model.exact_response(Vector::Constant(1, 0.2)));
  CHECK(t.total(2, 1)(0, 0) == doctest::Approx(-0.5));
  CHECK(t.total(1, 0)(0, 0) == doctest::Approx(-0.5));
  CHECK(t.total(2, 0)(0, 0) == doctest::Approx(-0.25));
  CHECK(t.partial(2, 0)(0, 0) == doctest::Approx(-0.5));
  CHECK(t.levels_resolved() == 3);
}

TEST_CASE("no dependency path gives zero Jacobians") {
  // x2 and x3 ignore x1 entirely.
  Matrix q2 = Matrix::Identity(3, 3), q3 = Matrix::Identity(3, 3);
  q2(0, 0) = q3(0, 0) = 0.0;
  q2(1, 2) = q2(2, 1) = 0.4;
  q3(1, 2) = q3(2, 1) = -0.3;
  std::vector<QuadraticLevel> levels{{Matrix::Identity(3, 3), Vector::Ones(3), 0.0},
                                     {q2, Vector::Ones(3), 0.0},
                                     {q3, -Vector::Ones(3), 0.0}};
  const QuadraticMultilevel model({1, 1, 1}, levels);
  const auto prob = model.problem();
  const JacobianTable t = build_table(prob, model.exact_response(Vector::Ones(1)));
  CHECK(t.partial(1, 0).isZero(0.0));
  CHECK(t.total(1, 0).isZero(0.0));
  CHECK(t.total(2, 0).isZero(0.0));
}

TEST_CASE("table invariants: counts and adjacent totals") {
  std::mt19937_64 rng(2);
  for (Index n = 2; n <= 5; ++n) {
    const auto model = random_model(rng, n, 3);
    const auto prob = model.problem();
    const JacobianTable t = build_table(prob, model.exact_response(Vector::Ones(model.dims()[0])));
    CHECK(t.total_count() == static_cast<std::size_t>(n * (n - 1) / 2));
    CHECK(t.partial_count() == static_cast<std::size_t>(n * (n - 1) / 2));
    for (Index i = 1; i < n; ++i) CHECK(t.total(i, i - 1) == t.partial(i, i - 1));
    CHECK_THROWS_AS(t.total(0, 0), StructuralError);
  }
}

TEST_CASE("grad_full examples") {
  const auto model = stackelberg_model({1});
  const auto prob = model.problem();
  const PointStack p = model.exact_response(Vector::Zero(1));
  const Vector g = grad_full(prob, p, build_table(prob, p));
  CHECK(g(0) == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK((g - grad_trilevel(prob, p)).cwiseAbs().maxCoeff() <= 1e-12);

  // f1 depends on x1 only.
  std::mt19937_64 rng(3);
  auto base = random_model(rng, 3, 2);
  auto levels = std::vector<QuadraticLevel>{base.level(0), base.level(1), base.level(2)};
  const Index d1 = base.dims()[0];
  const Matrix keep = levels[0].q_mat.topLeftCorner(d1, d1);
  levels[0].q_mat.setZero();
  levels[0].q_mat.topLeftCorner(d1, d1) = keep;
  levels[0].q_vec.tail(levels[0].q_vec.size() - d1).setZero();
  const QuadraticMultilevel own(base.dims(), levels);
  const auto prob2 = own.problem();
  const PointStack q = own.exact_response(Vector::Ones(d1));
  CHECK((grad_full(prob2, q, build_table(prob2, q)) - prob2.objective(0).grad_block(q, 0)).norm() <= 1e-14);
}

TEST_CASE("4-level chain matches the FD hypergradient of the exact reduction") {
  for (Index d : {1, 3}) {
    const auto model = QuadraticMultilevel::chain(4, d);
    const auto prob = model.problem();
    Vector x = Vector::LinSpaced(d, -0.4, 0.9);
    const PointStack p = model.exact_response(x);
    for (const NlevelOptions& opts : {NlevelOptions{}, exact_fd()}) {
      const Vector g = grad_full(prob, p, build_table(prob, p, opts));
      const Vector fd = testing::fd_reduced_gradient([&model](const Vector& v) { return model.reduced_value(v); }, x);
      CHECK((g - fd).cwiseAbs().maxCoeff() <= 1e-6);
      CHECK((g + x).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("end-to-end FD agreement on quadratic families up to 4 levels (20 seeds)") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const Index n = 2 + static_cast<Index>(seed % 3);
    const auto model = random_model(rng, n, 5);
    const auto prob = model.problem();
    const Vector x = Vector::Random(model.dims()[0]);
    const PointStack p = model.exact_response(x);
    const Vector g = grad_full(prob, p, build_table(prob, p));
    const Vector fd = testing::fd_reduced_gradient([&model](const Vector& v) { return model.reduced_value(v); }, x);
    CHECK(testing::rel_error(g, fd) <= 1e-5);
  }
}

TEST_CASE("path-sum identity on 4-level linear instances") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const auto model = random_model(rng, 4, 4);
    const auto prob = model.problem();
    const JacobianTable tb = build_table(prob, model.exact_response(Vector::Ones(model.dims()[0])));
    auto p = [&tb](Index i, Index j) { return tb.partial(i, j); };
    const Matrix paths = p(3, 0) + p(3, 1) * p(1, 0) + p(3, 2) * p(2, 0) + p(3, 2) * p(2, 1) * p(1, 0);
    CHECK((tb.total(3, 0) - paths).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("trilevel consistency") {
  for (Index d : {1, 5}) {
    const auto model = stackelberg_model({d});
    const auto prob = model.problem();
    CHECK(trilevel_consistency(prob, model.exact_response(Vector::Constant(d, 0.1))) <= 1e-10);
  }
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const auto model = random_model(rng, 3, 6);
    const auto prob = model.problem();
    const PointStack p = model.exact_response(Vector::Random(model.dims()[0]));
    CHECK(trilevel_consistency(prob, p) <= 1e-8);
  }
}

TEST_CASE("trilevel consistency with 3 CG iterations on well-conditioned instances") {
  std::mt19937_64 rng(6);
  RandomQuadraticOptions wc;
  wc.coupling = 0.3;
  for (int t = 0; t < 10; ++t) {
    const std::vector<Index> dims{3, 5, 6};
    const auto model = QuadraticMultilevel::random(rng, dims, wc);
    for (Index i = 1; i < 3; ++i) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(model.level(i).q_mat);
      CHECK(eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff() <= 10.0);
    }
    const auto prob = model.problem();
    NlevelOptions opts;
    opts.mode = SolveMode::Cg(3);
    CHECK(trilevel_consistency(prob, model.exact_response(Vector::Random(3)), opts) <= 1e-6);
  }
}

TEST_CASE("exact-fd derivative reproduces the closed form on non-quadratic trilevels") {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 3; ++t) {
    const std::vector<Index> dims{2, 2, 2};
    auto f1 = std::make_shared<testing::CubicOracle>(testing::CubicOracle::random(rng, dims, 0.3));
    auto f2 = std::make_shared<testing::CubicOracle>(testing::CubicOracle::random(rng, dims, 0.1));
    auto f3 = std::make_shared<testing::CubicOracle>(testing::CubicOracle::random(rng, dims, 0.1));
    MultilevelProblem prob("cubic", dims, {f1, f2, f3});
    testing::BruteForceTrilevel brute{prob};
    PointStack start = testing::random_point(rng, dims, 0.2);
    const PointStack p = brute.respond(start[0], start);
    const Vector fd = brute.hypergradient(p);
    const Vector exact = grad_full(prob, p, build_table(prob, p, exact_fd()));
    CHECK(testing::rel_error(exact, fd) <= 1e-5);
    CHECK(trilevel_consistency(prob, p, exact_fd()) <= 1e-6);
    // Freezing the Jacobian factors drops the solution-map curvature.
    const Vector gn = grad_full(prob, p, build_table(prob, p));
    CHECK(testing::rel_error(gn, fd) > 1e-4);
  }
}

TEST_CASE("exact-fd and gauss-newton agree on 4-level quadratics") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 5; ++t) {
    const auto model = random_model(rng, 4, 3);
    const auto prob = model.problem();
    const PointStack p = model.exact_response(Vector::Random(model.dims()[0]));
    const Vector a = grad_full(prob, p, build_table(prob, p));
    const Vector b = grad_full(prob, p, build_table(prob, p, exact_fd()));
    CHECK(testing::rel_error(a, b) <= 1e-6);
  }
}

TEST_CASE("errors: singular reduced Hessian names the level, stale points are refused") {
  std::vector<QuadraticLevel> levels(3, QuadraticLevel{Matrix::Identity(3, 3), Vector::Zero(3), 0.0});
  levels[1].q_mat(1, 1) = -1.0;
  const QuadraticMultilevel bad({1, 1, 1}, levels);
  const auto prob = bad.problem();
  try {
    build_table(prob, prob.zero_point());
    FAIL("expected SingularHessian");
  } catch (const SingularHessian& e) {
    CHECK(std::string(e.what()).find("level 2") != std::string::npos);
  }

  const auto model = stackelberg_model({1});
  const auto sprob = model.problem();
  PointStack p = model.exact_response(Vector::Zero(1));
  p[1](0) += 0.1;
  NlevelOptions strict;
  strict.stationarity_tol = 1e-6;
  CHECK_THROWS_AS(build_table(sprob, p, strict), StalePoint);
  CHECK_NOTHROW(build_table(sprob, p));
  CHECK_THROWS_AS(grad_full(sprob, p, build_window_table(sprob, p, 1)), StructuralError);
}

TEST_CASE("window tables give the reduced gradient of an intermediate level") {
  const auto model = stackelberg_model({1});
  const auto prob = model.problem();
  // With z at its response, level 2's reduced gradient is f2'(y) = -1 + x + 2y + z*(y) + y dz/dy
  PointStack p = model.exact_response(Vector::Constant(1, 0.2));
  p[1](0) = 0.1;
  p[2](0) = (1 - 0.2 - 0.1) / 2;
  const JacobianTable w = build_window_table(prob, p, 1);
  const double g = reduced_gradient(prob, p, w, 1)(0);
  CHECK(g == doctest::Approx(-1 + 0.2 + 0.2 + p[2](0) - 0.5 * 0.1));
  CHECK(w.residuals[2] == doctest::Approx(0.0));
}
