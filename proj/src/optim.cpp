#include "mlopt/optim.hpp"

#include <fmt/format.h>

#include <Eigen/Eigenvalues>
#include <chrono>

namespace mlopt {

void SolverConfig::check(const MultilevelProblem& problem) const {
  if (outer_steps < 0) throw StructuralError("config: outer_steps must be >= 0");
  if (static_cast<Index>(inner_schedule.size()) != problem.levels() - 1) {
    throw StructuralError(fmt::format("config: inner_schedule has {} entries, problem '{}' needs {}",
                                      inner_schedule.size(), problem.name(), problem.levels() - 1));
  }
  for (int k : inner_schedule) {
    if (k < 1) throw StructuralError("config: inner_schedule counts must be >= 1");
  }
  if (!(lr_inner > 0.0) || !(gd_lr > 0.0) || !(adam.lr0 > 0.0) || !(adam.decay > 0.0)) {
    throw StructuralError("config: learning rates must be > 0");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw StructuralError("config: Adam betas must lie in [0, 1)");
  }
  if (solve_mode.kind == SolveKind::cg && solve_mode.cg_iters < 1) {
    throw StructuralError("config: cg_iters must be >= 1");
  }
  if (!(divergence_factor > 1.0)) throw StructuralError("config: divergence_factor must be > 1");
  if (!(fd.step > 0.0)) throw StructuralError("config: fd step must be > 0");
  if (engine == IdEngine::trilevel && problem.levels() != 3) {
    throw StructuralError("config: the trilevel engine needs a 3-level problem");
  }
}

Vector gd_step(const Vector& x, const Vector& grad, double lr) {
  Vector out = x - lr * grad;
  if (!out.allFinite()) throw NumericError("gd_step: non-finite iterate");
  return out;
}

Vector adam_step(AdamState& state, const Vector& x, const Vector& grad, int t, double lr, const AdamConfig& cfg) {
  if (t < 1) throw StructuralError("adam_step: t must be >= 1");
  if (state.m.size() != x.size()) state = AdamState::Zero(x.size());
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const Vector m_hat = state.m / (1.0 - std::pow(cfg.beta1, t));
  const Vector v_hat = state.v / (1.0 - std::pow(cfg.beta2, t));
  Vector out = x - lr * (m_hat.array() / (v_hat.array().sqrt() + cfg.eps)).matrix();
  if (!out.allFinite()) throw NumericError("adam_step: non-finite iterate");
  return out;
}

namespace {

Vector level_gradient(const MultilevelProblem& problem, const PointStack& p, Index j, InnerGradient mode) {
  if (j == problem.levels() - 1 || mode == InnerGradient::partial) return problem.objective(j).grad_block(p, j);
  NlevelOptions opts;
  const JacobianTable t = build_window_table(problem, p, j, opts);
  return reduced_gradient(problem, p, t, j);
}

class NestedSolver {
 public:
  NestedSolver(const MultilevelProblem& problem, const SolverConfig& cfg, PointStack& p)
      : problem_(problem), cfg_(cfg), p_(p), entry_(static_cast<std::size_t>(problem.levels()), 0.0) {
    for (Index j = 1; j < problem.levels(); ++j) {
      entry_[static_cast<std::size_t>(j)] = level_gradient(problem, p, j, cfg.inner_gradient).norm();
    }
  }

  void solve() {
    for (int r = 0; r < cfg_.inner_schedule[0]; ++r) update(1);
  }

 private:
  void update(Index j) {
    if (j + 1 < problem_.levels()) {
      for (int r = 0; r < cfg_.inner_schedule[static_cast<std::size_t>(j)]; ++r) update(j + 1);
    }
    const Vector g = level_gradient(problem_, p_, j, cfg_.inner_gradient);
    const double norm = g.norm();
    const double limit = cfg_.divergence_factor * std::max(entry_[static_cast<std::size_t>(j)], 1.0);
    if (!std::isfinite(norm) || norm > limit) {
      throw DivergedLowerLevel(fmt::format("nested_lower_solve: level {} residual {:.3e} grew past {:.3e}",
                                           level_label(j), norm, limit),
                               level_label(j));
    }
    p_[j] -= cfg_.lr_inner * g;
    if (!p_[j].allFinite()) {
      throw DivergedLowerLevel(fmt::format("nested_lower_solve: level {} iterate is non-finite", level_label(j)),
                               level_label(j));
    }
  }

  const MultilevelProblem& problem_;
  const SolverConfig& cfg_;
  PointStack& p_;
  std::vector<double> entry_;
};

}  // namespace

double lower_residual(const MultilevelProblem& problem, const PointStack& point, Index level, InnerGradient mode) {
  return level_gradient(problem, point, level, mode).norm();
}

PointStack nested_lower_solve(const MultilevelProblem& problem, const Vector& x1, const PointStack& warm,
                              const SolverConfig& cfg) {
  problem.check_point(warm);
  if (static_cast<Index>(cfg.inner_schedule.size()) != problem.levels() - 1) {
    throw StructuralError("nested_lower_solve: inner_schedule length does not match the level count");
  }
  if (x1.size() != problem.dim(0)) throw StructuralError("nested_lower_solve: x1 has wrong length");
  PointStack p = warm;
  p[0] = x1;
  NestedSolver(problem, cfg, p).solve();
  for (Index j = 1; j < problem.levels(); ++j) p.set_residual(j, lower_residual(problem, p, j, cfg.inner_gradient));
  p.require_finite("nested_lower_solve");
  return p;
}

Hypergradient hypergradient(const MultilevelProblem& problem, const PointStack& point, const SolverConfig& cfg) {
  Hypergradient out;
  switch (cfg.method) {
    case GradientMethod::vgd:
      out.grad = vgd_gradient(problem.objective(0), point);
      break;
    case GradientMethod::fd: {
      SolverConfig inner = cfg;
      if (cfg.fd.inner_schedule) inner.inner_schedule = *cfg.fd.inner_schedule;
      const LowerSolver solver = [&problem, inner](const Vector& x, const PointStack& warm) {
        return nested_lower_solve(problem, x, warm, inner);
      };
      out.grad = fd_hypergradient(problem.objective(0), point[0], point, solver, cfg.fd);
      break;
    }
    case GradientMethod::id: {
      const bool use_trilevel =
          cfg.engine == IdEngine::trilevel || (cfg.engine == IdEngine::automatic && problem.levels() == 3);
      if (use_trilevel) {
        TrilevelOptions opts;
        opts.mode = cfg.solve_mode;
        opts.curvature = cfg.curvature;
        opts.stationarity_tol = cfg.stationarity_tol;
        const auto res = grad_trilevel_detailed(problem.objective(0), problem.objective(1), problem.objective(2),
                                                point, opts);
        out.grad = res.grad;
        out.solve_residual = res.jacs.solve_residual;
      } else {
        NlevelOptions opts;
        opts.mode = cfg.solve_mode;
        opts.derivative = cfg.derivative;
        opts.stationarity_tol = cfg.stationarity_tol;
        const JacobianTable t = build_table(problem, point, opts);
        out.grad = grad_full(problem, point, t);
        out.solve_residual = t.solve_residual;
      }
      break;
    }
  }
  if (!out.grad.allFinite()) throw NumericError("hypergradient: non-finite gradient");
  return out;
}

double mse_to_reference(const Vector& x, const Vector& ref) {
  if (x.size() != ref.size() || x.size() == 0) throw StructuralError("mse_to_reference: length mismatch");
  return (x - ref).squaredNorm() / static_cast<double>(x.size());
}

RunResult run(const MultilevelProblem& problem, const std::optional<Vector>& reference, const SolverConfig& cfg,
              const std::optional<PointStack>& start, const StepObserver& observer) {
  cfg.check(problem);
  if (reference && reference->size() != problem.dim(0)) throw StructuralError("run: reference has wrong length");
  RunResult out;
  PointStack p = start ? *start : problem.zero_point();
  problem.check_point(p);
  AdamState adam = AdamState::Zero(problem.dim(0));
  double cum = 0.0;
  using Clock = std::chrono::steady_clock;
  for (int step = 0; step < cfg.outer_steps; ++step) {
    try {
      const auto t0 = Clock::now();
      p = nested_lower_solve(problem, p[0], p, cfg);
      TraceRecord rec;
      rec.step = step + 1;
      rec.f1 = evaluate(problem, 1, p);
      const Hypergradient hg = hypergradient(problem, p, cfg);
      rec.grad_norm_sq = hg.grad.squaredNorm();
      cum += rec.grad_norm_sq;
      rec.cum_avg_grad_sq = cum / static_cast<double>(step + 1);
      rec.cg_residual = hg.solve_residual;
      p[0] = cfg.optimizer == OuterOptimizer::adam ? adam_step(adam, p[0], hg.grad, step + 1, cfg.adam.lr(step), cfg.adam)
                                                   : gd_step(p[0], hg.grad, cfg.gd_lr);
      if (cfg.record_wall_time) {
        rec.wall_micros = std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - t0).count();
      }
      if (reference) rec.mse = mse_to_reference(p[0], *reference);
      for (Index j = 1; j < problem.levels(); ++j) rec.lower_residuals.push_back(p.residual(j));
      if (observer) observer(rec, p);
      out.trace.push_back(std::move(rec));
    } catch (const Error&) {
      rethrow_with_suffix(fmt::format(" (outer step {})", step + 1));
    }
  }
  out.final_point = std::move(p);
  return out;
}

Theorem4Result theorem4_check(const QuadraticMultilevel& model, const Vector& x0, double beta, int steps) {
  if (model.leader_lower_bound() < -1e-12) {
    throw StructuralError("theorem4_check: leader objective is not bounded below by 0");
  }
  if (x0.size() != model.dims()[0]) throw StructuralError("theorem4_check: x0 has wrong length");
  if (steps < 1) throw StructuralError("theorem4_check: need at least one step");
  Theorem4Result out;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(model.reduced_leader_hessian(), Eigen::EigenvaluesOnly);
  out.lambda_max = eig.eigenvalues().maxCoeff();
  if (!(out.lambda_max > 0.0)) throw StructuralError("theorem4_check: reduced leader Hessian has no positive curvature");
  if (!(beta > 0.0) || beta > (1.0 + 1e-12) / out.lambda_max) {
    throw StructuralError(fmt::format("theorem4_check: step {:.6g} outside (0, 1/lambda_max = {:.6g}]", beta,
                                      1.0 / out.lambda_max));
  }
  const MultilevelProblem problem = model.problem("theorem4");
  out.f1_start = model.reduced_value(x0);
  Vector x = x0;
  for (int k = 0; k < steps; ++k) {
    const PointStack p = model.exact_response(x);
    const Vector g = grad_full(problem, p, build_table(problem, p));
    out.lhs += g.squaredNorm();
    out.prefix.push_back(out.lhs);
    x = gd_step(x, g, beta);
  }
  out.rhs = out.f1_start / (beta - 0.5 * beta * beta * out.lambda_max);
  out.pass = out.lhs <= out.rhs * (1.0 + 1e-12);
  return out;
}

}  // namespace mlopt
