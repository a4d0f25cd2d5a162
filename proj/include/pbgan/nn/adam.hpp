#pragma once

#include "pbgan/nn/layers.hpp"

#include <cmath>

namespace pbgan::nn {

struct AdamOptions {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Holds one first/second moment pair per
/// parameter; the parameter list must outlive the optimizer.
template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<Parameter<Scalar>*> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
    for (auto* p : params_) {
      m_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<Scalar>(opts_.beta1);
    const auto b2 = static_cast<Scalar>(opts_.beta2);
    const auto lr = static_cast<Scalar>(opts_.learning_rate / c1);
    const auto eps = static_cast<Scalar>(opts_.epsilon);
    const auto sc2 = static_cast<Scalar>(1.0 / std::sqrt(c2));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& g = params_[i]->grad;
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
      params_[i]->value.array() -= lr * m_[i].array() / (v_[i].array().sqrt() * sc2 + eps);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void set_learning_rate(double lr) { opts_.learning_rate = lr; }
  [[nodiscard]] double learning_rate() const { return opts_.learning_rate; }
  [[nodiscard]] const AdamOptions& options() const { return opts_; }

  [[nodiscard]] std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  std::vector<Matrix<Scalar>>& first_moments() { return m_; }
  std::vector<Matrix<Scalar>>& second_moments() { return v_; }
  [[nodiscard]] const std::vector<Matrix<Scalar>>& first_moments() const { return m_; }
  [[nodiscard]] const std::vector<Matrix<Scalar>>& second_moments() const { return v_; }

 private:
  std::vector<Parameter<Scalar>*> params_;
  AdamOptions opts_;
  std::int64_t t_ = 0;
  std::vector<Matrix<Scalar>> m_;
  std::vector<Matrix<Scalar>> v_;
};

}  // namespace pbgan::nn
