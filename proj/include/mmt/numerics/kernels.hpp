#pragma once

// Plain Eigen kernels shared by the differentiable ops and by code that
// needs the same math without a tape.

#include "mmt/numerics/tensor.hpp"

#include <cmath>
#include <numbers>

namespace mmt {

/// Row-wise softmax, stabilized by subtracting each row's maximum.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// Normalizes each row to zero mean and unit (biased) variance.
/// `inv_std` receives 1/sqrt(var + eps) per row when non-null.
template <typename Derived>
MatrixX<typename Derived::Scalar> standardize_rows(const Eigen::MatrixBase<Derived>& x,
                                                   typename Derived::Scalar eps,
                                                   Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>* inv_std = nullptr) {
  using Scalar = typename Derived::Scalar;
  const Index n = x.cols();
  MatrixX<Scalar> out(x.rows(), n);
  if (inv_std) inv_std->resize(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).mean();
    const auto centered = (x.row(r).array() - mean).matrix();
    const Scalar var = centered.squaredNorm() / static_cast<Scalar>(n);
    const Scalar is = Scalar(1) / std::sqrt(var + eps);
    out.row(r) = centered * is;
    if (inv_std) (*inv_std)(r) = is;
  }
  return out;
}

/// Exact (erf-based) GELU.
template <typename Scalar>
Scalar gelu_scalar(Scalar x) {
  return Scalar(0.5) * x * (Scalar(1) + std::erf(x / std::numbers::sqrt2_v<Scalar>));
}

template <typename Scalar>
Scalar gelu_scalar_derivative(Scalar x) {
  const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(x / std::numbers::sqrt2_v<Scalar>));
  const Scalar pdf = std::exp(Scalar(-0.5) * x * x) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
  return cdf + x * pdf;
}

}  // namespace mmt
