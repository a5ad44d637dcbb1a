#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "mlopt/baselines.hpp"
#include "mlopt/nlevel.hpp"
#include "mlopt/quadratic.hpp"
#include "mlopt/trilevel.hpp"

namespace mlopt {

enum class GradientMethod { id, fd, vgd };

// Which closed form the id method uses: the trilevel formulas for 3-level
// problems and the Jacobian table otherwise (automatic), or a forced choice.
enum class IdEngine { automatic, trilevel, nlevel };

// Gradient followed by intermediate lower levels during nested solves:
// total = reduced gradient through the deeper solution maps,
// partial = df_j/dx_j only. The deepest level always uses its partial.
enum class InnerGradient { total, partial };

enum class OuterOptimizer { adam, gd };

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr0 = 0.1;
  double decay = 0.99;

  // lr0 * decay^t for the 0-based outer step t.
  double lr(int t) const { return lr0 * std::pow(decay, t); }
};

struct AdamState {
  Vector m;
  Vector v;
  static AdamState Zero(Index dim) { return {Vector::Zero(dim), Vector::Zero(dim)}; }
};

struct SolverConfig {
  int outer_steps = 200;
  // [k_2, ..., k_n]: each update of x_j is preceded by k_{j+1} updates of x_{j+1}.
  std::vector<int> inner_schedule{30, 3};
  double lr_inner = 1e-2;
  OuterOptimizer optimizer = OuterOptimizer::adam;
  AdamConfig adam;
  double gd_lr = 0.1;
  std::uint64_t seed = 0;
  // Only enforced when finite; the recorded residuals land in the trace.
  double stationarity_tol = kInf;
  SolveMode solve_mode = SolveMode::Cg(3);
  GradientMethod method = GradientMethod::id;
  IdEngine engine = IdEngine::automatic;
  CurvatureMode curvature = CurvatureMode::automatic;
  ReducedDerivative derivative = ReducedDerivative::gauss_newton;
  InnerGradient inner_gradient = InnerGradient::total;
  FdHyperConfig fd;
  double divergence_factor = 1e6;
  bool record_wall_time = true;

  // Throws StructuralError when inconsistent with the problem.
  void check(const MultilevelProblem& problem) const;
};

struct TraceRecord {
  int step = 0;
  double f1 = 0.0;
  double grad_norm_sq = 0.0;
  double cum_avg_grad_sq = 0.0;
  std::optional<double> mse;
  std::int64_t wall_micros = 0;
  std::optional<double> cg_residual;
  std::optional<double> f1_inference;
  // Stationarity residuals of levels 2..n after the lower solve.
  std::vector<double> lower_residuals;
};

Vector gd_step(const Vector& x, const Vector& grad, double lr);

// One Adam update at 1-based step t with learning rate lr.
Vector adam_step(AdamState& state, const Vector& x, const Vector& grad, int t, double lr, const AdamConfig& cfg);

// Nested gradient descent on the lower levels with x1 fixed, following
// cfg.inner_schedule at cfg.lr_inner. The returned stack records each lower
// level's final stationarity residual.
PointStack nested_lower_solve(const MultilevelProblem& problem, const Vector& x1, const PointStack& warm,
                              const SolverConfig& cfg);

// Stationarity residual of level j (1..n-1) as followed by the nested solver.
double lower_residual(const MultilevelProblem& problem, const PointStack& point, Index level, InnerGradient mode);

struct Hypergradient {
  Vector grad;
  std::optional<double> solve_residual;
};

// Hypergradient of f1 at a lower-solved stack by cfg.method.
Hypergradient hypergradient(const MultilevelProblem& problem, const PointStack& point, const SolverConfig& cfg);

struct RunResult {
  std::vector<TraceRecord> trace;
  PointStack final_point;
};

// Called after each outer step with the record and the stack (x1 updated,
// lower levels as solved for the pre-update x1).
using StepObserver = std::function<void(TraceRecord&, const PointStack&)>;

RunResult run(const MultilevelProblem& problem, const std::optional<Vector>& reference, const SolverConfig& cfg,
              const std::optional<PointStack>& start = std::nullopt, const StepObserver& observer = {});

double mse_to_reference(const Vector& x, const Vector& ref);

struct Theorem4Result {
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
  double lambda_max = 0.0;
  double f1_start = 0.0;
  // Running sums of squared gradient norms after 1..N steps.
  std::vector<double> prefix;
};

// Constant-step gradient descent on the reduced leader objective with exact
// lower solves, checking sum ||g||^2 <= f1(x0) / (beta - beta^2 lambda_max / 2).
Theorem4Result theorem4_check(const QuadraticMultilevel& model, const Vector& x0, double beta, int steps);

}  // namespace mlopt
