#include "mlopt/experiments.hpp"

#include <fmt/format.h>

#include <Eigen/Cholesky>
#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace mlopt {

WineVariant parse_variant(const std::string& name) {
  if (name == "red") return WineVariant::red;
  if (name == "white") return WineVariant::white;
  throw StructuralError(fmt::format("unknown wine variant '{}' (expected red or white)", name));
}

std::string to_string(WineVariant v) { return v == WineVariant::red ? "red" : "white"; }

std::string to_string(GradientMethod m) {
  switch (m) {
    case GradientMethod::id:
      return "id";
    case GradientMethod::fd:
      return "fd";
    case GradientMethod::vgd:
      return "vgd";
  }
  return "?";
}

GradientMethod parse_method(const std::string& name) {
  if (name == "id") return GradientMethod::id;
  if (name == "fd") return GradientMethod::fd;
  if (name == "vgd") return GradientMethod::vgd;
  throw StructuralError(fmt::format("unknown method '{}' (expected id, fd or vgd)", name));
}

// ---------------------------------------------------------------- data

namespace {

constexpr Index kWineColumns = 12;

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ';')) out.push_back(cell);
  if (!line.empty() && line.back() == ';') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto keep = [](char c) { return c != ' ' && c != '\t' && c != '\r' && c != '"'; };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), keep));
  s.erase(std::find_if(s.rbegin(), s.rend(), keep).base(), s.end());
  return s;
}

}  // namespace

Dataset load_wine(const std::string& path, WineVariant variant) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("load_wine: cannot open '{}'", path));
  Dataset out;
  out.path = path;
  out.variant = variant;

  std::string line;
  if (!std::getline(in, line)) throw DataError(fmt::format("load_wine: '{}' is empty", path));
  for (const auto& c : split_cells(line)) out.columns.push_back(trim(c));
  if (static_cast<Index>(out.columns.size()) != kWineColumns) {
    throw DataError(fmt::format("load_wine: {}:1: header has {} columns, expected {}", path, out.columns.size(),
                                kWineColumns));
  }

  std::vector<std::array<double, kWineColumns>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_cells(line);
    if (static_cast<Index>(cells.size()) != kWineColumns) {
      throw DataError(fmt::format("load_wine: {}:{}: {} columns, expected {}", path, lineno, cells.size(),
                                  kWineColumns));
    }
    std::array<double, kWineColumns> row{};
    for (Index j = 0; j < kWineColumns; ++j) {
      const std::string cell = trim(cells[static_cast<std::size_t>(j)]);
      const char* end = cell.data() + cell.size();
      auto [ptr, ec] = std::from_chars(cell.data(), end, row[static_cast<std::size_t>(j)]);
      if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(row[static_cast<std::size_t>(j)])) {
        throw DataError(fmt::format("load_wine: {}:{}: column '{}' is not a number: '{}'", path, lineno,
                                    out.columns[static_cast<std::size_t>(j)], cell));
      }
    }
    rows.push_back(row);
  }
  if (rows.empty()) throw DataError(fmt::format("load_wine: '{}' has no data rows", path));

  const Index n = static_cast<Index>(rows.size());
  Matrix raw(n, kWineColumns);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < kWineColumns; ++j) raw(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];

  const Vector mean = raw.colwise().mean();
  Matrix centered = raw.rowwise() - mean.transpose();
  const Vector sd = (centered.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt();
  for (Index j = 0; j < kWineColumns; ++j) {
    if (!(sd(j) > 1e-12 * std::max(1.0, std::abs(mean(j))))) {
      throw DataError(fmt::format("load_wine: column '{}' of '{}' is constant; cannot z-score it",
                                  out.columns[static_cast<std::size_t>(j)], path));
    }
    centered.col(j) /= sd(j);
  }
  out.features = centered.leftCols(kWineColumns - 1);
  out.targets = centered.col(kWineColumns - 1);
  out.normalization.feature_mean = mean.head(kWineColumns - 1);
  out.normalization.feature_std = sd.head(kWineColumns - 1);
  out.normalization.target_mean = mean(kWineColumns - 1);
  out.normalization.target_std = sd(kWineColumns - 1);
  return out;
}

Split split(const Dataset& data, Index m, Index n, std::uint64_t seed) {
  if (m < 1 || n < 1) throw StructuralError("split: m and n must be >= 1");
  if (m + n > data.rows()) {
    throw DataError(fmt::format("split: need m + n = {} rows, dataset has {}", m + n, data.rows()));
  }
  std::vector<Index> idx(static_cast<std::size_t>(data.rows()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with explicit draws so the order does not depend on the
  // standard library's shuffle.
  for (std::size_t i = idx.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(idx[i], idx[j]);
  }
  Split out;
  out.train_rows.assign(idx.begin(), idx.begin() + n);
  out.val_rows.assign(idx.begin() + n, idx.begin() + n + m);
  const auto gather = [&data](const std::vector<Index>& rows, Matrix& x, Vector& y) {
    x.resize(static_cast<Index>(rows.size()), data.dim());
    y.resize(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x.row(static_cast<Index>(i)) = data.features.row(rows[i]);
      y(static_cast<Index>(i)) = data.targets(rows[i]);
    }
  };
  gather(out.train_rows, out.x_train, out.y_train);
  gather(out.val_rows, out.x_val, out.y_val);
  return out;
}

// ---------------------------------------------------------------- hyperopt

namespace {

constexpr Index kLam = 0;
constexpr Index kP = 1;
constexpr Index kTheta = 2;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct HyperData {
  Matrix x;
  Vector y;
  Matrix xv;
  Vector yv;
  Index n = 0;
  Index d = 0;
  double c = 0.0;
  double delta = 0.0;
};

// Quantities shared by the fit term (1/n)|y - (X + P) theta|^2.
struct FitState {
  Matrix a;  // X + P
  Vector theta;
  Vector r;  // y - A theta
};

FitState fit_state(const HyperData& h, const PointStack& p) {
  FitState s;
  s.a = h.x + Eigen::Map<const RowMajor>(p[kP].data(), h.n, h.d);
  s.theta = p[kTheta];
  s.r = h.y - s.a * s.theta;
  return s;
}

Vector flatten(const Matrix& m) {
  const RowMajor rm = m;
  return Eigen::Map<const Vector>(rm.data(), rm.size());
}

double fit_value(const HyperData& h, const FitState& s) { return s.r.squaredNorm() / static_cast<double>(h.n); }

Vector fit_grad(const HyperData& h, const FitState& s, Index j) {
  const double k = 2.0 / static_cast<double>(h.n);
  switch (j) {
    case kTheta:
      return -k * s.a.transpose() * s.r;
    case kP:
      return flatten(-k * s.r * s.theta.transpose());
    default:
      return Vector::Zero(1);
  }
}

Matrix fit_hess(const HyperData& h, const FitState& s, Index r, Index c) {
  const double k = 2.0 / static_cast<double>(h.n);
  const Index nd = h.n * h.d;
  if (r == kTheta && c == kTheta) return k * s.a.transpose() * s.a;
  if ((r == kTheta && c == kP) || (r == kP && c == kTheta)) {
    Matrix tp(h.d, nd);
    for (Index kk = 0; kk < h.n; ++kk)
      for (Index l = 0; l < h.d; ++l) {
        Vector col = k * s.a.row(kk).transpose() * s.theta(l);
        col(l) -= k * s.r(kk);
        tp.col(kk * h.d + l) = col;
      }
    if (r == kTheta) return tp;
    return tp.transpose();
  }
  if (r == kP && c == kP) {
    Matrix out = Matrix::Zero(nd, nd);
    const Matrix block = k * s.theta * s.theta.transpose();
    for (Index kk = 0; kk < h.n; ++kk) out.block(kk * h.d, kk * h.d, h.d, h.d) = block;
    return out;
  }
  const Index dims[3] = {1, nd, h.d};
  return Matrix::Zero(dims[r], dims[c]);
}

class HyperOracleBase : public DerivativeOracle {
 public:
  explicit HyperOracleBase(std::shared_ptr<const HyperData> h) : h_(std::move(h)) {}

 protected:
  Index dim(Index j) const { return j == kLam ? 1 : (j == kP ? h_->n * h_->d : h_->d); }
  std::shared_ptr<const HyperData> h_;
};

class ValidationLoss : public HyperOracleBase {
 public:
  using HyperOracleBase::HyperOracleBase;

  double value(const PointStack& p) const override {
    return (h_->yv - h_->xv * p[kTheta]).squaredNorm() / static_cast<double>(h_->yv.size());
  }
  Vector grad_block(const PointStack& p, Index j) const override {
    if (j != kTheta) return Vector::Zero(dim(j));
    return -2.0 / static_cast<double>(h_->yv.size()) * h_->xv.transpose() * (h_->yv - h_->xv * p[kTheta]);
  }
  Matrix hess_block(const PointStack&, Index r, Index c) const override {
    if (r == kTheta && c == kTheta) return 2.0 / static_cast<double>(h_->yv.size()) * h_->xv.transpose() * h_->xv;
    return Matrix::Zero(dim(r), dim(c));
  }
};

class AttackerLoss : public HyperOracleBase {
 public:
  using HyperOracleBase::HyperOracleBase;

  double value(const PointStack& p) const override {
    return -fit_value(*h_, fit_state(*h_, p)) + penalty() * p[kP].squaredNorm();
  }
  Vector grad_block(const PointStack& p, Index j) const override {
    if (j == kLam) return Vector::Zero(1);
    Vector g = -fit_grad(*h_, fit_state(*h_, p), j);
    if (j == kP) g += 2.0 * penalty() * p[kP];
    return g;
  }
  Matrix hess_block(const PointStack& p, Index r, Index c) const override {
    Matrix out = -fit_hess(*h_, fit_state(*h_, p), r, c);
    if (r == kP && c == kP) out.diagonal().array() += 2.0 * penalty();
    return out;
  }

 private:
  double penalty() const { return h_->c / static_cast<double>(h_->n * h_->d); }
};

class LearnerLoss : public HyperOracleBase {
 public:
  using HyperOracleBase::HyperOracleBase;

  double value(const PointStack& p) const override {
    const Vector t = p[kTheta];
    return fit_value(*h_, fit_state(*h_, p)) + scale(p) * root(t).sum();
  }
  Vector grad_block(const PointStack& p, Index j) const override {
    const Vector t = p[kTheta];
    if (j == kLam) return Vector::Constant(1, scale(p) * root(t).sum());
    Vector g = fit_grad(*h_, fit_state(*h_, p), j);
    if (j == kTheta) g += scale(p) * t.cwiseQuotient(root(t));
    return g;
  }
  Matrix hess_block(const PointStack& p, Index r, Index c) const override {
    const Vector t = p[kTheta];
    const double s = scale(p);
    Matrix out = fit_hess(*h_, fit_state(*h_, p), r, c);
    if (r == kLam && c == kLam) out(0, 0) = s * root(t).sum();
    if (r == kLam && c == kTheta) out = s * t.cwiseQuotient(root(t)).transpose();
    if (r == kTheta && c == kLam) out = s * t.cwiseQuotient(root(t));
    if (r == kTheta && c == kTheta) out.diagonal() += s * h_->delta * root(t).array().cube().inverse().matrix();
    return out;
  }

  bool has_third_order() const override { return true; }

  Tensor3d third_slice(const PointStack& p, Index r, Index c, Index s) const override {
    std::array<Index, 3> blocks{r, c, s};
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&blocks](int a, int b) { return blocks[a] < blocks[b]; });
    const Tensor3d canon = canonical(p, blocks[order[0]], blocks[order[1]], blocks[order[2]]);
    if (order == std::array<int, 3>{0, 1, 2}) return canon;
    Tensor3d out(dim(r), dim(c), dim(s));
    std::array<Index, 3> i{};
    for (i[2] = 0; i[2] < out.depth(); ++i[2])
      for (i[1] = 0; i[1] < out.cols(); ++i[1])
        for (i[0] = 0; i[0] < out.rows(); ++i[0]) out(i[0], i[1], i[2]) = canon(i[order[0]], i[order[1]], i[order[2]]);
    return out;
  }

 private:
  double scale(const PointStack& p) const { return std::exp(p[kLam](0)) / static_cast<double>(h_->d); }
  Vector root(const Vector& t) const { return (t.array().square() + h_->delta).sqrt().matrix(); }

  // Slice for block indices b0 <= b1 <= b2.
  Tensor3d canonical(const PointStack& p, Index b0, Index b1, Index b2) const {
    Tensor3d out(dim(b0), dim(b1), dim(b2));
    const Vector t = p[kTheta];
    const Vector rt = root(t);
    const double s = scale(p);
    const double k = 2.0 / static_cast<double>(h_->n);
    const Index d = h_->d;
    if (b0 == kLam && b1 == kLam && b2 == kLam) {
      out(0, 0, 0) = s * rt.sum();
    } else if (b0 == kLam && b1 == kLam && b2 == kTheta) {
      for (Index e = 0; e < d; ++e) out(0, 0, e) = s * t(e) / rt(e);
    } else if (b0 == kLam && b1 == kTheta && b2 == kTheta) {
      for (Index e = 0; e < d; ++e) out(0, e, e) = s * h_->delta / std::pow(rt(e), 3);
    } else if (b0 == kTheta) {
      for (Index e = 0; e < d; ++e) out(e, e, e) = -3.0 * s * h_->delta * t(e) / std::pow(rt(e), 5);
    } else if (b0 == kP && b1 == kTheta) {
      const Matrix a = fit_state(*h_, p).a;
      for (Index kk = 0; kk < h_->n; ++kk)
        for (Index l = 0; l < d; ++l)
          for (Index e = 0; e < d; ++e) {
            out(kk * d + l, l, e) += k * a(kk, e);
            out(kk * d + l, e, l) += k * a(kk, e);
          }
    } else if (b0 == kP && b1 == kP && b2 == kTheta) {
      for (Index kk = 0; kk < h_->n; ++kk)
        for (Index l = 0; l < d; ++l)
          for (Index l2 = 0; l2 < d; ++l2) {
            out(kk * d + l, kk * d + l2, l2) += k * t(l);
            out(kk * d + l, kk * d + l2, l) += k * t(l2);
          }
    }
    return out;
  }
};

}  // namespace

MultilevelProblem build_hyperopt(const HyperoptSpec& spec, const Split& data) {
  if (!(spec.c > 0.0)) throw StructuralError("build_hyperopt: c must be > 0");
  if (!(spec.l1_smooth_delta > 0.0)) throw StructuralError("build_hyperopt: delta must be > 0");
  if (data.x_train.rows() != spec.n || data.x_val.rows() != spec.m) {
    throw StructuralError(fmt::format("build_hyperopt: split has {} training / {} validation rows, spec wants {} / {}",
                                      data.x_train.rows(), data.x_val.rows(), spec.n, spec.m));
  }
  if (data.x_train.cols() != data.x_val.cols() || data.y_train.size() != spec.n || data.y_val.size() != spec.m) {
    throw StructuralError("build_hyperopt: inconsistent split shapes");
  }
  auto h = std::make_shared<HyperData>();
  h->x = data.x_train;
  h->y = data.y_train;
  h->xv = data.x_val;
  h->yv = data.y_val;
  h->n = spec.n;
  h->d = data.x_train.cols();
  h->c = spec.c;
  h->delta = spec.l1_smooth_delta;
  return MultilevelProblem("hyperopt", {1, h->n * h->d, h->d},
                           {std::make_shared<ValidationLoss>(h), std::make_shared<AttackerLoss>(h),
                            std::make_shared<LearnerLoss>(h)});
}

Matrix unflatten_attack(const Vector& p, Index n, Index d) {
  if (p.size() != n * d) throw StructuralError("unflatten_attack: length is not n * d");
  return Eigen::Map<const RowMajor>(p.data(), n, d);
}

// ---------------------------------------------------------------- inference

namespace {

std::vector<double> lower_residuals(const MultilevelProblem& problem, const PointStack& p, InnerGradient mode) {
  std::vector<double> out;
  for (Index j = 1; j < problem.levels(); ++j) out.push_back(lower_residual(problem, p, j, mode));
  return out;
}

bool within(const std::vector<double>& r, double tol) {
  return std::all_of(r.begin(), r.end(), [tol](double v) { return v <= tol; });
}

long updates_per_sweep(const std::vector<int>& schedule) {
  long total = 0;
  long reps = 1;
  for (int k : schedule) {
    reps *= k;
    total += reps;
  }
  return total;
}

[[noreturn]] void out_of_budget(const char* how, long iters, const std::vector<double>& r, double tol) {
  std::string list;
  for (std::size_t j = 0; j < r.size(); ++j) list += fmt::format("{}level {}: {:.3e}", j ? ", " : "", j + 2, r[j]);
  throw ConvergenceBudget(fmt::format("inference_run: {} stopped after {} iterations above tol {:.1e} ({})", how,
                                      iters, tol, list),
                          r);
}

InferenceResult gd_inference(const MultilevelProblem& problem, PointStack p, const InferenceOptions& opts) {
  InferenceResult out;
  const long per_sweep = updates_per_sweep(opts.sweep.inner_schedule);
  while (true) {
    out.residuals = lower_residuals(problem, p, opts.sweep.inner_gradient);
    if (within(out.residuals, opts.tol)) break;
    if (out.iterations + per_sweep > opts.max_iters) out_of_budget("nested gradient descent", out.iterations, out.residuals, opts.tol);
    p = nested_lower_solve(problem, p[0], p, opts.sweep);
    out.iterations += per_sweep;
  }
  out.stack = std::move(p);
  return out;
}

// Damped Newton on phi(y) = f2(x, y, z*(x, y)) with z re-solved by Newton.
InferenceResult newton_inference(const MultilevelProblem& problem, PointStack p, const InferenceOptions& opts) {
  InferenceResult out;
  const NewtonOptions inner{std::min(opts.newton.resolve.tol, 1e-3 * opts.tol), opts.newton.resolve.max_iters};
  const auto& f2 = problem.objective(problem.levels() - 2);
  const auto& f3 = problem.objective(problem.levels() - 1);
  if (problem.levels() == 2) {
    newton_minimize_block(f2, p, 1, {opts.tol, static_cast<int>(std::min<long>(opts.max_iters, 1000))});
    out.iterations = 1;
    out.residuals = lower_residuals(problem, p, InnerGradient::total);
    if (!within(out.residuals, opts.tol)) out_of_budget("Newton", out.iterations, out.residuals, opts.tol);
    out.stack = std::move(p);
    return out;
  }
  if (problem.levels() != 3) throw StructuralError("inference_run: Newton inference supports 2 or 3 levels");

  TrilevelOptions topts = opts.newton;
  topts.mode = SolveMode::Direct();
  topts.stationarity_tol = kInf;
  const auto phi = [&](PointStack& q) {
    newton_minimize_block(f3, q, 2, inner);
    return f2.value(q);
  };
  const auto reduced = [&](const PointStack& q) {
    const Matrix dg_dy = jac_g(f3, q, topts).second;
    return std::make_pair(Vector(f2.grad_block(q, 1) + dg_dy.transpose() * f2.grad_block(q, 2)), dg_dy);
  };

  double value = phi(p);
  for (;;) {
    auto [g, dg_dy] = reduced(p);
    out.residuals = {g.norm(), f3.grad_block(p, 2).norm()};
    if (within(out.residuals, opts.tol)) break;
    if (out.iterations >= opts.max_iters) out_of_budget("Newton", out.iterations, out.residuals, opts.tol);
    ++out.iterations;

    Matrix d = reduced_hessian_y(f2, f3, p, dg_dy, topts);
    const Index k = d.rows();
    double shift = 0.0;
    const double base = std::max(1e-10, 1e-8 * d.diagonal().cwiseAbs().maxCoeff());
    Eigen::LLT<Matrix> llt(d);
    while (llt.info() != Eigen::Success) {
      shift = shift == 0.0 ? base : 10.0 * shift;
      llt.compute(d + shift * Matrix::Identity(k, k));
    }
    Vector step = -llt.solve(g);
    if (!(g.dot(step) < 0.0)) step = -g;

    const PointStack start = p;
    double alpha = 1.0;
    bool moved = false;
    for (int h = 0; h < 50; ++h) {
      p[1] = start[1] + alpha * step;
      const double v = phi(p);
      if (std::isfinite(v) && v <= value + 1e-4 * alpha * g.dot(step)) {
        value = v;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) {
      // values agree to roundoff; keep a full step only if it shrinks G
      p = start;
      p[1] += step;
      phi(p);
      if (!(reduced(p).first.norm() < out.residuals[0])) {
        p = start;
        out_of_budget("Newton (no descent)", out.iterations, out.residuals, opts.tol);
      }
      value = f2.value(p);
    }
  }
  out.stack = std::move(p);
  return out;
}

}  // namespace

InferenceResult inference_run(const MultilevelProblem& problem, const Vector& x1, const PointStack& warm,
                              const InferenceOptions& opts) {
  if (!(opts.tol > 0.0)) throw StructuralError("inference_run: tol must be > 0");
  if (opts.max_iters < 0) throw StructuralError("inference_run: max_iters must be >= 0");
  problem.check_point(warm);
  if (x1.size() != problem.dim(0)) throw StructuralError("inference_run: x1 has wrong length");
  PointStack p = warm;
  p[0] = x1;
  InferenceResult out;
  if (opts.method == InferenceMethod::gd) {
    SolverConfig sweep = opts.sweep;
    sweep.outer_steps = 0;
    sweep.check(problem);
    out = gd_inference(problem, std::move(p), opts);
  } else {
    out = newton_inference(problem, std::move(p), opts);
  }
  for (Index j = 1; j < problem.levels(); ++j) out.stack.set_residual(j, out.residuals[static_cast<std::size_t>(j - 1)]);
  out.f1 = problem.objective(0).value(out.stack);
  return out;
}

// ---------------------------------------------------------------- timing

std::vector<BenchRow> timing_bench(const MultilevelProblem& problem, const std::vector<GradientMethod>& methods,
                                   const SolverConfig& cfg, int repeats) {
  if (repeats < 5) throw StructuralError("timing_bench: repeats must be >= 5");
  std::vector<GradientMethod> order{GradientMethod::vgd};
  for (GradientMethod m : methods)
    if (std::find(order.begin(), order.end(), m) == order.end()) order.push_back(m);

  std::vector<BenchRow> rows;
  for (GradientMethod m : order) {
    SolverConfig c = cfg;
    c.method = m;
    c.outer_steps = 2 + repeats;
    c.record_wall_time = true;
    const RunResult res = run(problem, std::nullopt, c);
    double total = 0.0;
    for (int k = 2; k < c.outer_steps; ++k) total += static_cast<double>(res.trace[static_cast<std::size_t>(k)].wall_micros);
    rows.push_back({m, total / repeats, 1.0});
  }
  const double base = std::max(rows.front().mean_micros, 1e-3);
  for (auto& r : rows) r.ratio = r.mean_micros / base;
  rows.front().ratio = 1.0;
  return rows;
}

}  // namespace mlopt
