#pragma once

#include "pbgan/nn/layers.hpp"

#include <random>

namespace pbgan::nn {

/// Ordered layer stack. Also usable as a layer (nested caches live in
/// Cache::children), which is how residual blocks are built.
template <typename Scalar>
class Sequential : public Layer<Scalar> {
 public:
  Sequential() = default;
  Sequential(const Sequential& other) {
    layers_.reserve(other.layers_.size());
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  Sequential& operator=(const Sequential& other) {
    if (this != &other) *this = Sequential(other);
    return *this;
  }
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void push_back(LayerPtr<Scalar> layer) { layers_.push_back(std::move(layer)); }

  [[nodiscard]] std::size_t size() const { return layers_.size(); }
  Layer<Scalar>& operator[](std::size_t i) { return *layers_[i]; }
  const Layer<Scalar>& operator[](std::size_t i) const { return *layers_[i]; }

  [[nodiscard]] std::string kind() const override { return "Sequential"; }

  [[nodiscard]] Shape output_shape(const Shape& in) const override {
    Shape s = in;
    for (const auto& l : layers_) s = l->output_shape(s);
    return s;
  }

  /// Shape after every layer, in order.
  [[nodiscard]] std::vector<Shape> trace_shapes(const Shape& in) const {
    std::vector<Shape> out;
    Shape s = in;
    for (const auto& l : layers_) out.push_back(s = l->output_shape(s));
    return out;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    if (cache) cache->children.assign(layers_.size(), Cache<Scalar>{});
    Tensor<Scalar> h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) h = layers_[i]->forward(h, cache ? &cache->children[i] : nullptr);
    return h;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) const { return forward(x, nullptr); }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    Tensor<Scalar> g = dy;
    for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, cache.children[i]);
    return g;
  }

  std::vector<Parameter<Scalar>*> parameters() override {
    std::vector<Parameter<Scalar>*> out;
    for (auto& l : layers_)
      for (auto* p : l->parameters()) out.push_back(p);
    return out;
  }

  /// Parameters with stable dotted names ("3.weight", "10.inner.1.bias").
  std::vector<Parameter<Scalar>*> named_parameters(const std::string& prefix = "") {
    auto params = parameters();
    std::size_t k = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      auto lp = layers_[i]->parameters();
      for (std::size_t j = 0; j < lp.size(); ++j, ++k) {
        const bool is_bias = lp[j]->role == ParamRole::bias;
        std::string leaf = is_bias ? "bias" : "weight";
        if (lp.size() > 2) leaf = std::to_string(j / 2) + "." + leaf;
        params[k]->name = prefix + std::to_string(i) + "." + leaf;
      }
    }
    return params;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  [[nodiscard]] std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<Sequential>(*this); }

 private:
  std::vector<LayerPtr<Scalar>> layers_;
};

/// x + body(x)
template <typename Scalar>
class Residual : public LayerBase<Residual<Scalar>, Scalar> {
 public:
  explicit Residual(Sequential<Scalar> body) : body_(std::move(body)) {}

  [[nodiscard]] std::string kind() const override { return "Residual"; }
  [[nodiscard]] Shape output_shape(const Shape& in) const override {
    const Shape out = body_.output_shape(in);
    if (out != in) throw ShapeError("Residual body changes shape " + to_string(in) + " -> " + to_string(out));
    return out;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    if (cache) cache->children.assign(1, Cache<Scalar>{});
    Tensor<Scalar> y = body_.forward(x, cache ? &cache->children[0] : nullptr);
    y.matrix() += x.matrix();
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    Tensor<Scalar> dx = body_.backward(dy, cache.children[0]);
    dx.matrix() += dy.matrix();
    return dx;
  }

  std::vector<Parameter<Scalar>*> parameters() override { return body_.parameters(); }
  [[nodiscard]] const Sequential<Scalar>& body() const { return body_; }

 private:
  Sequential<Scalar> body_;
};

enum class InitScheme {
  normal_002,      // N(0, 0.02) weights, zero bias
  glorot_uniform,  // U(-a, a), a = sqrt(6 / (fan_in + fan_out)), zero bias
};

template <typename Scalar, typename Rng>
void initialize(const std::vector<Parameter<Scalar>*>& params, InitScheme scheme, Rng& rng) {
  for (auto* p : params) {
    if (p->role == ParamRole::bias) {
      p->value.setZero();
      continue;
    }
    if (scheme == InitScheme::normal_002) {
      std::normal_distribution<double> dist(0.0, 0.02);
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<Scalar>(dist(rng));
    } else {
      const double a = std::sqrt(6.0 / (p->fan_in + p->fan_out));
      std::uniform_real_distribution<double> dist(-a, a);
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<Scalar>(dist(rng));
    }
  }
}

}  // namespace pbgan::nn
