#pragma once

#include "pbgan/tensor.hpp"

#include <cmath>

namespace pbgan::nn {

/// A scalar loss together with its gradient w.r.t. the prediction.
template <typename Scalar>
struct LossGrad {
  Scalar value = 0;
  Tensor<Scalar> grad;
};

/// mean((pred - target)^2)
template <typename Scalar>
LossGrad<Scalar> mse_to_constant(const Tensor<Scalar>& pred, Scalar target, Scalar weight = Scalar(1)) {
  const auto diff = (pred.matrix().array() - target).eval();
  const auto n = static_cast<Scalar>(pred.size());
  return {weight * diff.square().sum() / n, Tensor<Scalar>(pred.shape(), (diff * (Scalar(2) * weight / n)).matrix())};
}

/// weight * mean(|a - b|); gradient taken w.r.t. `a`.
template <typename Scalar>
LossGrad<Scalar> weighted_l1(const Tensor<Scalar>& a, const Tensor<Scalar>& b, Scalar weight) {
  require_same_shape(a, b, "weighted_l1");
  const auto diff = (a.matrix().array() - b.matrix().array()).eval();
  const auto n = static_cast<Scalar>(a.size());
  const Scalar g = weight / n;
  return {weight * diff.abs().sum() / n,
          Tensor<Scalar>(a.shape(), diff.unaryExpr([g](Scalar d) {
                                          return d > Scalar(0) ? g : (d < Scalar(0) ? -g : Scalar(0));
                                        }).matrix())};
}

/// Softmax cross-entropy on an (n x 1 x 1) logit tensor with an integer label.
template <typename Scalar>
LossGrad<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits, int label) {
  const auto z = logits.flat();
  const Scalar zmax = z.maxCoeff();
  Vector<Scalar> p = (z.array() - zmax).exp().matrix();
  const Scalar sum = p.sum();
  p /= sum;
  const Scalar loss = -(z[label] - zmax - std::log(sum));
  p[label] -= Scalar(1);
  return {loss, Tensor<Scalar>(logits.shape(), Eigen::Map<const Matrix<Scalar>>(p.data(), p.size(), 1))};
}

}  // namespace pbgan::nn
