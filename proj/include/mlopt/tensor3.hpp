#pragma once

#include <Eigen/Core>

#include <array>
#include <vector>

namespace mlopt {

// Dense rank-3 array with extents (rows, cols, depth). Storage is column-major
// in the first two indices so that every depth slice is a contiguous matrix.
template <typename Scalar>
class Tensor3 {
 public:
  using Index = Eigen::Index;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using SliceMap = Eigen::Map<Matrix>;
  using ConstSliceMap = Eigen::Map<const Matrix>;

  Tensor3() = default;
  Tensor3(Index rows, Index cols, Index depth)
      : extents_{rows, cols, depth}, data_(static_cast<std::size_t>(rows * cols * depth), Scalar(0)) {}

  static Tensor3 Zero(Index rows, Index cols, Index depth) { return Tensor3(rows, cols, depth); }

  Index rows() const { return extents_[0]; }
  Index cols() const { return extents_[1]; }
  Index depth() const { return extents_[2]; }
  Index size() const { return rows() * cols() * depth(); }

  Scalar& operator()(Index a, Index b, Index e) { return data_[offset(a, b, e)]; }
  Scalar operator()(Index a, Index b, Index e) const { return data_[offset(a, b, e)]; }

  SliceMap slice(Index e) { return SliceMap(data_.data() + e * rows() * cols(), rows(), cols()); }
  ConstSliceMap slice(Index e) const {
    return ConstSliceMap(data_.data() + e * rows() * cols(), rows(), cols());
  }

  // Contract the first index against w: result(b, e) = sum_a w(a) T(a, b, e).
  template <typename Derived>
  Matrix contract_first(const Eigen::MatrixBase<Derived>& w) const {
    Matrix out(cols(), depth());
    for (Index e = 0; e < depth(); ++e) out.col(e) = slice(e).transpose() * w;
    return out;
  }

  // Contract the last index against v: result(a, b) = sum_e T(a, b, e) v(e).
  template <typename Derived>
  Matrix contract_last(const Eigen::MatrixBase<Derived>& v) const {
    Matrix out = Matrix::Zero(rows(), cols());
    for (Index e = 0; e < depth(); ++e) out += v(e) * slice(e);
    return out;
  }

  Scalar max_abs() const {
    Scalar m(0);
    for (const Scalar& x : data_) m = std::max<Scalar>(m, x < Scalar(0) ? -x : x);
    return m;
  }

  const std::vector<Scalar>& data() const { return data_; }

 private:
  Index offset(Index a, Index b, Index e) const { return a + rows() * (b + cols() * e); }

  std::array<Index, 3> extents_{0, 0, 0};
  std::vector<Scalar> data_;
};

using Tensor3d = Tensor3<double>;

}  // namespace mlopt
