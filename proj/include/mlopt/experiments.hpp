#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mlopt/optim.hpp"
#include "mlopt/stackelberg.hpp"

// Benchmark problems: the Stackelberg game (stackelberg.hpp) and the
// adversarial hyperparameter trilevel on wine quality data, plus the
// inference and timing protocols around optim::run.

namespace mlopt {

enum class WineVariant { red, white };

WineVariant parse_variant(const std::string& name);
std::string to_string(WineVariant v);

struct Normalization {
  Vector feature_mean;
  Vector feature_std;
  double target_mean = 0.0;
  double target_std = 1.0;
};

struct Dataset {
  Matrix features;  // rows x d, z-scored
  Vector targets;   // z-scored quality
  Normalization normalization;
  std::vector<std::string> columns;
  std::string path;
  WineVariant variant = WineVariant::red;

  Index rows() const { return features.rows(); }
  Index dim() const { return features.cols(); }
};

// UCI winequality CSV: ';'-separated, a header row, 11 feature columns and
// then `quality`. Every column is z-scored with the population std.
// Throws DataError on unreadable files, malformed cells (with line number),
// wrong column counts and constant columns.
Dataset load_wine(const std::string& path, WineVariant variant);

struct Split {
  Matrix x_train;
  Vector y_train;
  Matrix x_val;
  Vector y_val;
  std::vector<Index> train_rows;
  std::vector<Index> val_rows;
};

// Seeded sample without replacement: n training rows, then m validation rows.
Split split(const Dataset& data, Index m, Index n, std::uint64_t seed);

struct HyperoptSpec {
  Index m = 100;
  Index n = 40;
  double c = 100.0;
  double l1_smooth_delta = 1e-6;
};

// Levels: lambda (1), P (n*d, row-major: P(k, l) at k*d + l), theta (d).
//   f1 = (1/m)|y_val - X_val theta|^2
//   f2 = -(1/n)|y - (X + P) theta|^2 + c/(n d) |P|^2
//   f3 =  (1/n)|y - (X + P) theta|^2 + exp(lambda)/d * sum_j sqrt(theta_j^2 + delta)
// f3 carries analytic third-order slices.
MultilevelProblem build_hyperopt(const HyperoptSpec& spec, const Split& data);

// P as an n x d matrix from the flattened level-2 block.
Matrix unflatten_attack(const Vector& p, Index n, Index d);

enum class InferenceMethod {
  // repeated nested_lower_solve sweeps
  gd,
  // Newton on the innermost level, damped Newton on the exact reduced
  // second-level objective (at most three levels)
  newton,
};

struct InferenceOptions {
  InferenceMethod method = InferenceMethod::gd;
  double tol = 1e-8;
  long max_iters = 100'000;
  // schedule, lr_inner and inner_gradient of the gd sweeps
  SolverConfig sweep;
  TrilevelOptions newton;
};

struct InferenceResult {
  PointStack stack;
  double f1 = 0.0;
  // inner updates (gd) or Newton iterations summed over levels
  long iterations = 0;
  std::vector<double> residuals;
};

// Drives every lower level to stationarity <= tol with x1 fixed and reports
// f1 there. Throws ConvergenceBudget carrying the final residuals when
// max_iters runs out.
InferenceResult inference_run(const MultilevelProblem& problem, const Vector& x1, const PointStack& warm,
                              const InferenceOptions& opts = {});

struct BenchRow {
  GradientMethod method = GradientMethod::vgd;
  double mean_micros = 0.0;
  double ratio = 1.0;
};

// Mean wall time per outer update (2 warm-up updates, then `repeats`) for
// each method, with ratios against vgd. vgd is timed even when absent from
// `methods` and is listed first.
std::vector<BenchRow> timing_bench(const MultilevelProblem& problem, const std::vector<GradientMethod>& methods,
                                   const SolverConfig& cfg, int repeats = 5);

std::string to_string(GradientMethod m);
GradientMethod parse_method(const std::string& name);

}  // namespace mlopt
