#include <doctest.h>

#include "helpers.hpp"
#include "mlopt/core.hpp"
#include "mlopt/quadratic.hpp"

using namespace mlopt;

namespace {

// f(x, z) = x z over two scalar levels.
class Bilinear : public DerivativeOracle {
 public:
  double value(const PointStack& p) const override { return p[0](0) * p[1](0); }
  Vector grad_block(const PointStack& p, Index j) const override { return Vector::Constant(1, p[1 - j](0)); }
  Matrix hess_block(const PointStack&, Index r, Index c) const override {
    return Matrix::Constant(1, 1, r == c ? 0.0 : 1.0);
  }
};

class Asymmetric : public Bilinear {
 public:
  Matrix hess_block(const PointStack&, Index r, Index c) const override {
    return Matrix::Constant(1, 1, (r == 0 && c == 1) ? 1.0 : 0.0);
  }
};

class NanOracle : public Bilinear {
 public:
  double value(const PointStack&) const override { return std::nan(""); }
};

}  // namespace

TEST_CASE("validate: bilinear form has zero symmetry deviation") {
  auto f = std::make_shared<Bilinear>();
  MultilevelProblem prob("bilinear", {1, 1}, {f, f});
  PointStack p({Vector::Ones(1), Vector::Ones(1)});
  const auto report = validate(prob, p);
  CHECK(report.passed());
  CHECK(report.max_deviation() == 0.0);
}

TEST_CASE("validate: asymmetric Hessian stub is flagged") {
  auto f = std::make_shared<Asymmetric>();
  MultilevelProblem prob("bad", {1, 1}, {f, f});
  PointStack p({Vector::Ones(1), Vector::Ones(1)});
  const auto report = validate(prob, p);
  CHECK_FALSE(report.passed());
  CHECK(report.max_deviation() >= 1.0);
}

TEST_CASE("validate: shape mismatch names the level") {
  auto f = std::make_shared<Bilinear>();
  MultilevelProblem prob("bilinear", {1, 1}, {f, f});
  PointStack p({Vector::Ones(1), Vector::Ones(2)});
  CHECK_THROWS_AS(validate(prob, p), StructuralError);
  try {
    validate(prob, p);
  } catch (const StructuralError& e) {
    CHECK(std::string(e.what()).find("level 2") != std::string::npos);
  }
}

TEST_CASE("problem construction invariants") {
  auto f = std::make_shared<Bilinear>();
  CHECK_THROWS_AS(MultilevelProblem("one", {1}, {f}), StructuralError);
  CHECK_THROWS_AS(MultilevelProblem("dims", {1, 0}, {f, f}), StructuralError);
  CHECK_THROWS_AS(MultilevelProblem("count", {1, 1}, {f}), StructuralError);
  CHECK_THROWS_AS(MultilevelProblem("null", {1, 1}, {f, nullptr}), StructuralError);
  MultilevelProblem ok("ok", {2, 3, 1}, {f, f, f});
  CHECK(ok.levels() == 3);
  CHECK(ok.max_dim() == 3);
}

TEST_CASE("evaluate: zero point and non-finite values") {
  auto f = std::make_shared<Bilinear>();
  auto bad = std::make_shared<NanOracle>();
  MultilevelProblem prob("p", {1, 1}, {f, bad});
  const PointStack p = prob.zero_point();
  CHECK(evaluate(prob, 1, p) == 0.0);
  CHECK_THROWS_AS(evaluate(prob, 2, p), NumericError);
  CHECK_THROWS_AS(evaluate(prob, 3, p), StructuralError);
  try {
    evaluate(prob, 2, p);
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("level 2") != std::string::npos);
  }
}

TEST_CASE("PointStack finiteness") {
  PointStack p = PointStack::Zero({2, 1});
  CHECK(p.all_finite());
  CHECK(std::isnan(p.residual(1)));
  p[1](0) = std::numeric_limits<double>::infinity();
  CHECK_FALSE(p.all_finite());
  CHECK_THROWS_AS(p.require_finite("test"), NumericError);
}

TEST_CASE("oracle laws on random quadratics and cubics: determinism, shapes, transpose") {
  std::mt19937_64 rng(7);
  const std::vector<Index> dims{2, 3, 4};
  const auto model = QuadraticMultilevel::random(rng, dims);
  const auto quad = model.problem();
  const auto cubic = std::make_shared<testing::CubicOracle>(testing::CubicOracle::random(rng, dims, 0.2));
  MultilevelProblem cub("cubic", dims, {cubic, cubic, cubic});
  for (const MultilevelProblem* prob : std::vector<const MultilevelProblem*>{&quad, &cub}) {
    for (int probe = 0; probe < 10; ++probe) {
      const PointStack p = testing::random_point(rng, dims);
      for (Index lvl = 0; lvl < 3; ++lvl) {
        const auto& f = prob->objective(lvl);
        CHECK(f.value(p) == f.value(p));
        for (Index r = 0; r < 3; ++r) {
          CHECK(f.grad_block(p, r).size() == dims[static_cast<std::size_t>(r)]);
          for (Index c = 0; c < 3; ++c) {
            const Matrix h = f.hess_block(p, r, c);
            CHECK(h.rows() == dims[static_cast<std::size_t>(r)]);
            CHECK(h.cols() == dims[static_cast<std::size_t>(c)]);
            const double scale = h.cwiseAbs().maxCoeff();
            CHECK((h - f.hess_block(p, c, r).transpose()).cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + scale));
          }
        }
      }
      CHECK(validate(*prob, p).passed());
    }
  }
}

TEST_CASE("Tensor3 layout and contractions") {
  Tensor3d t(2, 3, 2);
  for (Index a = 0; a < 2; ++a)
    for (Index b = 0; b < 3; ++b)
      for (Index e = 0; e < 2; ++e) t(a, b, e) = 100 * a + 10 * b + e;
  CHECK(t.slice(1)(1, 2) == 121);
  const Matrix cf = t.contract_first(Vector::Ones(2));
  CHECK(cf.rows() == 3);
  CHECK(cf(2, 1) == doctest::Approx(21 + 121));
  const Matrix cl = t.contract_last(Vector::Ones(2));
  CHECK(cl(1, 2) == doctest::Approx(120 + 121));
  CHECK(t.max_abs() == 121);
}
