#include "mmt/numerics/tensor.hpp"

#include <sstream>

namespace mmt {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

std::pair<Index, Index> storage_dims(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  for (Index e : shape) {
    if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
  const Index cols = shape.back();
  return {shape_numel(shape) / cols, cols};
}

Tensor::Tensor(Shape shape, Matrix data, bool requires_grad)
    : shape_(std::move(shape)), data_(std::move(data)), requires_grad_(requires_grad) {
  const auto [rows, cols] = storage_dims(shape_);
  if (data_.size() != rows * cols) {
    throw ShapeError("tensor data has " + std::to_string(data_.size()) + " values but shape " +
                     shape_string(shape_) + " needs " + std::to_string(rows * cols));
  }
  if (data_.rows() != rows || data_.cols() != cols) {
    Matrix reshaped = Eigen::Map<const Matrix>(data_.data(), rows, cols);
    data_ = std::move(reshaped);
  }
}

Tensor::Tensor(Matrix data, bool requires_grad)
    : shape_{data.rows(), data.cols()}, data_(std::move(data)), requires_grad_(requires_grad) {
  storage_dims(shape_);
}

Tensor Tensor::zeros(const Shape& shape) {
  const auto [rows, cols] = storage_dims(shape);
  return Tensor(shape, Matrix::Zero(rows, cols));
}

Tensor Tensor::scalar(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return Tensor(Shape{1}, std::move(m));
}

Tensor Tensor::row(std::initializer_list<double> values) {
  Matrix m(1, static_cast<Index>(values.size()));
  Index i = 0;
  for (double v : values) m(0, i++) = v;
  const Index n = m.cols();
  return Tensor(Shape{n}, std::move(m));
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() requires a single-element tensor, got " + shape_string(shape_));
  return data_(0, 0);
}

Tensor Tensor::reshaped(const Shape& shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(shape, data_, requires_grad_);
}

}  // namespace mmt
