#include "mlopt/quadratic.hpp"

#include <fmt/format.h>

#include <Eigen/LU>
#include <Eigen/QR>

#include <numeric>

namespace mlopt {

namespace {

std::vector<Index> offsets_of(const std::vector<Index>& dims) {
  std::vector<Index> off(dims.size(), 0);
  for (std::size_t i = 1; i < dims.size(); ++i) off[i] = off[i - 1] + dims[i - 1];
  return off;
}

Index total_of(const std::vector<Index>& dims) { return std::accumulate(dims.begin(), dims.end(), Index{0}); }

Matrix gaussian(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = n01(rng);
  return m;
}

}  // namespace

QuadraticOracle::QuadraticOracle(std::vector<Index> dims, Matrix q_mat, Vector q_vec, double constant)
    : dims_(std::move(dims)), offsets_(offsets_of(dims_)), q_mat_(std::move(q_mat)), q_vec_(std::move(q_vec)),
      constant_(constant) {
  const Index total = total_of(dims_);
  require_shape(q_mat_, total, total, "QuadraticOracle hessian");
  if (q_vec_.size() != total) throw StructuralError("QuadraticOracle: linear term has wrong length");
}

Vector QuadraticOracle::stack(const PointStack& p) const {
  if (p.levels() != static_cast<Index>(dims_.size())) throw StructuralError("QuadraticOracle: level count mismatch");
  Vector v(q_vec_.size());
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (p[static_cast<Index>(i)].size() != dims_[i]) {
      throw StructuralError(fmt::format("QuadraticOracle: level {} has wrong length", i + 1));
    }
    v.segment(offsets_[i], dims_[i]) = p[static_cast<Index>(i)];
  }
  return v;
}

double QuadraticOracle::value(const PointStack& p) const {
  const Vector v = stack(p);
  return 0.5 * v.dot(q_mat_ * v) + q_vec_.dot(v) + constant_;
}

Vector QuadraticOracle::grad_block(const PointStack& p, Index j) const {
  const Vector v = stack(p);
  const auto j_ = static_cast<std::size_t>(j);
  return q_mat_.middleRows(offsets_[j_], dims_[j_]) * v + q_vec_.segment(offsets_[j_], dims_[j_]);
}

Matrix QuadraticOracle::hess_block(const PointStack&, Index r, Index c) const {
  const auto r_ = static_cast<std::size_t>(r);
  const auto c_ = static_cast<std::size_t>(c);
  // The symmetric part is the Hessian even if Q was supplied unsymmetrized.
  return 0.5 * (q_mat_.block(offsets_[r_], offsets_[c_], dims_[r_], dims_[c_]) +
                q_mat_.block(offsets_[c_], offsets_[r_], dims_[c_], dims_[r_]).transpose());
}

Tensor3d QuadraticOracle::third_slice(const PointStack&, Index r, Index c, Index s) const {
  return Tensor3d::Zero(dims_[static_cast<std::size_t>(r)], dims_[static_cast<std::size_t>(c)],
                        dims_[static_cast<std::size_t>(s)]);
}

QuadraticMultilevel::QuadraticMultilevel(std::vector<Index> dims, std::vector<QuadraticLevel> levels)
    : dims_(std::move(dims)), offsets_(offsets_of(dims_)), levels_(std::move(levels)) {
  const Index n = static_cast<Index>(dims_.size());
  if (n < 2 || static_cast<Index>(levels_.size()) != n) {
    throw StructuralError("QuadraticMultilevel: need >= 2 levels and one quadratic per level");
  }
  const Index total = total_of(dims_);
  for (auto& lvl : levels_) {
    require_shape(lvl.q_mat, total, total, "QuadraticMultilevel level hessian");
    lvl.q_mat = (0.5 * (lvl.q_mat + lvl.q_mat.transpose())).eval();
  }

  // Backward induction. Invariant before processing level i:
  //   x_{>i} = map * x_{<=i} + offset.
  Matrix map(0, offsets_.back() + dims_.back());
  Vector offset(0);
  for (Index i = n - 1; i >= 1; --i) {
    const auto i_ = static_cast<std::size_t>(i);
    const Index prefix = offsets_[i_] + dims_[i_];
    Matrix sel = Matrix::Zero(total, prefix);
    sel.topRows(prefix).setIdentity();
    sel.bottomRows(total - prefix) = map;
    Vector shift = Vector::Zero(total);
    shift.tail(total - prefix) = offset;

    const QuadraticLevel& lvl = levels_[i_];
    const Matrix reduced = sel.transpose() * lvl.q_mat * sel;
    const Vector lin = sel.transpose() * (lvl.q_mat * shift + lvl.q_vec);
    const Index off = offsets_[i_];
    const Index d = dims_[i_];
    Eigen::PartialPivLU<Matrix> lu(reduced.block(off, off, d, d));
    const Matrix gain = -lu.solve(reduced.block(off, 0, d, off));
    const Vector bias = -lu.solve(lin.segment(off, d));

    Matrix next(total - off, off);
    next.topRows(d) = gain;
    next.bottomRows(total - prefix) = map.leftCols(off) + map.middleCols(off, d) * gain;
    Vector next_offset(total - off);
    next_offset.head(d) = bias;
    next_offset.tail(total - prefix) = map.middleCols(off, d) * bias + offset;
    map = std::move(next);
    offset = std::move(next_offset);
  }
  response_map_ = std::move(map);
  response_offset_ = std::move(offset);
}

QuadraticMultilevel QuadraticMultilevel::random(std::mt19937_64& rng, const std::vector<Index>& dims,
                                                const RandomQuadraticOptions& opts) {
  const Index total = total_of(dims);
  std::vector<QuadraticLevel> levels;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    QuadraticLevel lvl;
    if (i == 0 && opts.nonnegative_leader) {
      const Index d0 = dims[0];
      Matrix r = Matrix::Zero(d0 + total, total);
      r.topLeftCorner(d0, d0).setIdentity();
      r.bottomRows(total) = opts.coupling * gaussian(rng, total, total) / std::sqrt(static_cast<double>(total));
      const Vector t = gaussian(rng, d0 + total, 1);
      lvl.q_mat = r.transpose() * r;
      lvl.q_vec = -r.transpose() * t;
      lvl.constant = 0.5 * t.squaredNorm();
    } else {
      const Matrix a = gaussian(rng, total, total);
      lvl.q_mat = opts.ridge * Matrix::Identity(total, total) +
                  opts.coupling * (a.transpose() * a) / static_cast<double>(total);
      lvl.q_vec = gaussian(rng, total, 1);
      lvl.constant = 0.0;
    }
    levels.push_back(std::move(lvl));
  }
  return QuadraticMultilevel(dims, std::move(levels));
}

QuadraticMultilevel QuadraticMultilevel::chain(Index n, Index d) {
  std::vector<Index> dims(static_cast<std::size_t>(n), d);
  const Index total = n * d;
  const Matrix eye = Matrix::Identity(d, d);
  std::vector<QuadraticLevel> levels;
  for (Index i = 0; i < n; ++i) {
    QuadraticLevel lvl{Matrix::Zero(total, total), Vector::Zero(total), 0.0};
    lvl.q_mat.block(i * d, i * d, d, d) = eye;
    const Index partner = (i == 0) ? n - 1 : i - 1;
    lvl.q_mat.block(i * d, partner * d, d, d) += eye;
    lvl.q_mat.block(partner * d, i * d, d, d) += eye;
    levels.push_back(std::move(lvl));
  }
  return QuadraticMultilevel(std::move(dims), std::move(levels));
}

MultilevelProblem QuadraticMultilevel::problem(const std::string& name) const {
  std::vector<OraclePtr> objectives;
  for (const auto& lvl : levels_) {
    objectives.push_back(std::make_shared<QuadraticOracle>(dims_, lvl.q_mat, lvl.q_vec, lvl.constant));
  }
  return MultilevelProblem(name, dims_, std::move(objectives));
}

PointStack QuadraticMultilevel::exact_response(const Vector& x1) const {
  if (x1.size() != dims_[0]) throw StructuralError("exact_response: x1 has wrong length");
  const Vector lower = response_map_ * x1 + response_offset_;
  std::vector<Vector> vals{x1};
  for (std::size_t i = 1; i < dims_.size(); ++i) vals.push_back(lower.segment(offsets_[i] - dims_[0], dims_[i]));
  PointStack p(std::move(vals));
  for (Index i = 1; i < p.levels(); ++i) p.set_residual(i, 0.0);
  return p;
}

double QuadraticMultilevel::reduced_value(const Vector& x1) const {
  const PointStack p = exact_response(x1);
  const QuadraticLevel& lead = levels_[0];
  Vector v(lead.q_vec.size());
  for (std::size_t i = 0; i < dims_.size(); ++i) v.segment(offsets_[i], dims_[i]) = p[static_cast<Index>(i)];
  return 0.5 * v.dot(lead.q_mat * v) + lead.q_vec.dot(v) + lead.constant;
}

Matrix QuadraticMultilevel::reduced_leader_hessian() const {
  const Index total = levels_[0].q_vec.size();
  Matrix sel(total, dims_[0]);
  sel.topRows(dims_[0]).setIdentity();
  sel.bottomRows(total - dims_[0]) = response_map_;
  return sel.transpose() * levels_[0].q_mat * sel;
}

double QuadraticMultilevel::leader_lower_bound() const {
  const QuadraticLevel& lead = levels_[0];
  const Vector v = -lead.q_mat.completeOrthogonalDecomposition().solve(lead.q_vec);
  return 0.5 * v.dot(lead.q_mat * v) + lead.q_vec.dot(v) + lead.constant;
}

}  // namespace mlopt
