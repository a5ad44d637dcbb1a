#include "mlopt/stackelberg.hpp"

namespace mlopt {

QuadraticMultilevel stackelberg_model(const StackelbergSpec& spec) {
  if (spec.dim < 1) throw StructuralError("stackelberg: dim must be >= 1");
  const Index d = spec.dim;
  const Matrix eye = Matrix::Identity(d, d);
  std::vector<QuadraticLevel> levels;
  for (Index own = 0; own < 3; ++own) {
    // -v^T(1 - x - y - z) = -sum v + |v|^2 + sum_{other} v^T other
    QuadraticLevel lvl{Matrix::Zero(3 * d, 3 * d), Vector::Zero(3 * d), 0.0};
    for (Index other = 0; other < 3; ++other) {
      if (other == own) {
        lvl.q_mat.block(own * d, own * d, d, d) = 2.0 * eye;
      } else {
        lvl.q_mat.block(own * d, other * d, d, d) = eye;
        lvl.q_mat.block(other * d, own * d, d, d) = eye;
      }
    }
    lvl.q_vec.segment(own * d, d).setConstant(-1.0);
    levels.push_back(std::move(lvl));
  }
  return QuadraticMultilevel({d, d, d}, std::move(levels));
}

MultilevelProblem build_stackelberg(const StackelbergSpec& spec) {
  return stackelberg_model(spec).problem("stackelberg");
}

Vector stackelberg_reference(const StackelbergSpec& spec) { return Vector::Constant(spec.dim, 0.5); }

}  // namespace mlopt
