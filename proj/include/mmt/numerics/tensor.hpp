#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <vector>

namespace mmt {

using Index = Eigen::Index;

/// Row-major dense matrix; the storage type behind every tensor.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Matrix = MatrixX<double>;
using Shape = std::vector<Index>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a forward op produces NaN/Inf or a gradient is non-finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_string(const Shape& shape);
Index shape_numel(const Shape& shape);

/// Dense n-dimensional array of doubles.
///
/// Values live in a row-major matrix whose column count is the last extent
/// and whose row count is the product of the leading extents, so a
/// [F x J x 3] tensor is stored as an (F*J) x 3 matrix. Rank-1 tensors are
/// stored as a single row.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Matrix data, bool requires_grad = false);
  explicit Tensor(Matrix data, bool requires_grad = false);

  static Tensor zeros(const Shape& shape);
  static Tensor scalar(double value);
  static Tensor row(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index numel() const { return data_.size(); }
  Index rows() const { return data_.rows(); }
  Index cols() const { return data_.cols(); }

  Matrix& data() { return data_; }
  const Matrix& data() const { return data_; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  double item() const;
  bool all_finite() const { return data_.allFinite(); }

  /// Same data viewed under another shape with equal element count.
  Tensor reshaped(const Shape& shape) const;

 private:
  Shape shape_;
  Matrix data_;
  bool requires_grad_ = false;
};

/// Storage layout for a shape: (product of leading extents, last extent).
std::pair<Index, Index> storage_dims(const Shape& shape);

}  // namespace mmt
