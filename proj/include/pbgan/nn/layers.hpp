#pragma once

#include "pbgan/nn/im2col.hpp"
#include "pbgan/tensor.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace pbgan::nn {

enum class ParamRole { weight, bias };

template <typename Scalar>
struct Parameter {
  std::string name;
  ParamRole role = ParamRole::weight;
  int fan_in = 0;
  int fan_out = 0;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter() = default;
  Parameter(ParamRole r, Eigen::Index rows, Eigen::Index cols, int in, int out)
      : role(r), fan_in(in), fan_out(out), value(Matrix<Scalar>::Zero(rows, cols)),
        grad(Matrix<Scalar>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  [[nodiscard]] std::int64_t count() const { return value.size(); }
};

/// Per-call activation record. Forward passes fill it; backward reads it.
/// One network may be applied several times per step with separate caches.
template <typename Scalar>
struct Cache {
  Tensor<Scalar> saved;
  Vector<Scalar> stats;
  std::vector<std::int64_t> indices;
  std::vector<Cache> children;
};

template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;

  [[nodiscard]] virtual std::string kind() const = 0;
  [[nodiscard]] virtual Shape output_shape(const Shape& in) const = 0;
  /// `cache` may be null for inference-only passes.
  virtual Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const = 0;
  /// Returns dL/dx and accumulates parameter gradients.
  virtual Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) = 0;
  virtual std::vector<Parameter<Scalar>*> parameters() { return {}; }
  [[nodiscard]] virtual std::unique_ptr<Layer> clone() const = 0;

  [[nodiscard]] std::int64_t parameter_count() {
    std::int64_t n = 0;
    for (auto* p : parameters()) n += p->count();
    return n;
  }
};

template <typename Scalar>
using LayerPtr = std::unique_ptr<Layer<Scalar>>;

template <typename Derived, typename Scalar>
class LayerBase : public Layer<Scalar> {
 public:
  [[nodiscard]] LayerPtr<Scalar> clone() const override {
    return std::make_unique<Derived>(static_cast<const Derived&>(*this));
  }
};

// ---------------------------------------------------------------------------

template <typename Scalar>
class Conv2d : public LayerBase<Conv2d<Scalar>, Scalar> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride = 1, int padding = 0)
      : in_(in_channels), out_(out_channels), geom_{kernel, stride, padding},
        weight_(ParamRole::weight, out_channels, std::int64_t{in_channels} * kernel * kernel,
                in_channels * kernel * kernel, out_channels * kernel * kernel),
        bias_(ParamRole::bias, out_channels, 1, in_channels * kernel * kernel, out_channels) {}

  [[nodiscard]] std::string kind() const override { return "Conv2d"; }
  [[nodiscard]] const WindowGeometry& geometry() const { return geom_; }
  [[nodiscard]] int in_channels() const { return in_; }
  [[nodiscard]] int out_channels() const { return out_; }

  [[nodiscard]] Shape output_shape(const Shape& in) const override {
    if (in.channels != in_)
      throw ShapeError("Conv2d expects " + std::to_string(in_) + " channels, got " + to_string(in));
    Shape out{out_, geom_.output_extent(in.height), geom_.output_extent(in.width)};
    if (out.height < 1 || out.width < 1) throw ShapeError("Conv2d input too small: " + to_string(in));
    return out;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    const Shape os = output_shape(x.shape());
    Tensor<Scalar> y(os);
    Matrix<Scalar> cols;
    const int band = band_rows(weight_.value.cols(), os.width, os.height);
    for (int r0 = 0; r0 < os.height; r0 += band) {
      const int r1 = std::min(os.height, r0 + band);
      im2col(x, geom_, os.width, r0, r1, cols);
      auto block = y.matrix().middleCols(std::int64_t{r0} * os.width, cols.cols());
      block.noalias() = weight_.value * cols;
      block.colwise() += bias_.value.col(0);
    }
    if (cache) cache->saved = x;
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    const Tensor<Scalar>& x = cache.saved;
    const Shape os = dy.shape();
    Tensor<Scalar> dx(x.shape());
    Matrix<Scalar> cols;
    Matrix<Scalar> dcols;
    const int band = band_rows(weight_.value.cols(), os.width, os.height);
    for (int r0 = 0; r0 < os.height; r0 += band) {
      const int r1 = std::min(os.height, r0 + band);
      im2col(x, geom_, os.width, r0, r1, cols);
      const auto g = dy.matrix().middleCols(std::int64_t{r0} * os.width, cols.cols());
      weight_.grad.noalias() += g * cols.transpose();
      dcols.noalias() = weight_.value.transpose() * g;
      col2im_add(dcols, geom_, os.width, r0, r1, dx);
    }
    bias_.grad.col(0) += dy.matrix().rowwise().sum();
    return dx;
  }

  std::vector<Parameter<Scalar>*> parameters() override { return {&weight_, &bias_}; }

 private:
  int in_;
  int out_;
  WindowGeometry geom_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
};

/// Transposed convolution. Weight is stored (in x out*k*k) so the forward
/// pass is the adjoint of a Conv2d with the same geometry.
template <typename Scalar>
class ConvTranspose2d : public LayerBase<ConvTranspose2d<Scalar>, Scalar> {
 public:
  ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride, int padding, int output_padding)
      : in_(in_channels), out_(out_channels), geom_{kernel, stride, padding}, output_padding_(output_padding),
        weight_(ParamRole::weight, in_channels, std::int64_t{out_channels} * kernel * kernel,
                out_channels * kernel * kernel, in_channels * kernel * kernel),
        bias_(ParamRole::bias, out_channels, 1, out_channels * kernel * kernel, out_channels) {}

  [[nodiscard]] std::string kind() const override { return "ConvTranspose2d"; }

  [[nodiscard]] Shape output_shape(const Shape& in) const override {
    if (in.channels != in_)
      throw ShapeError("ConvTranspose2d expects " + std::to_string(in_) + " channels, got " + to_string(in));
    return {out_, geom_.transposed_extent(in.height, output_padding_),
            geom_.transposed_extent(in.width, output_padding_)};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    const Shape os = output_shape(x.shape());
    Tensor<Scalar> y(os);
    Matrix<Scalar> cols;
    const int band = band_rows(weight_.value.cols(), x.width(), x.height());
    for (int r0 = 0; r0 < x.height(); r0 += band) {
      const int r1 = std::min(x.height(), r0 + band);
      const auto xin = x.matrix().middleCols(std::int64_t{r0} * x.width(), std::int64_t{r1 - r0} * x.width());
      cols.noalias() = weight_.value.transpose() * xin;
      col2im_add(cols, geom_, x.width(), r0, r1, y);
    }
    y.matrix().colwise() += bias_.value.col(0);
    if (cache) cache->saved = x;
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    const Tensor<Scalar>& x = cache.saved;
    Tensor<Scalar> dx(x.shape());
    Matrix<Scalar> cols;
    const int band = band_rows(weight_.value.cols(), x.width(), x.height());
    for (int r0 = 0; r0 < x.height(); r0 += band) {
      const int r1 = std::min(x.height(), r0 + band);
      im2col(dy, geom_, x.width(), r0, r1, cols);
      const std::int64_t c0 = std::int64_t{r0} * x.width();
      dx.matrix().middleCols(c0, cols.cols()).noalias() = weight_.value * cols;
      weight_.grad.noalias() += x.matrix().middleCols(c0, cols.cols()) * cols.transpose();
    }
    bias_.grad.col(0) += dy.matrix().rowwise().sum();
    return dx;
  }

  std::vector<Parameter<Scalar>*> parameters() override { return {&weight_, &bias_}; }

 private:
  int in_;
  int out_;
  WindowGeometry geom_;
  int output_padding_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
};

template <typename Scalar>
class ReflectionPad2d : public LayerBase<ReflectionPad2d<Scalar>, Scalar> {
 public:
  explicit ReflectionPad2d(int pad) : pad_(pad) {}

  [[nodiscard]] std::string kind() const override { return "ReflectionPad2d"; }

  [[nodiscard]] Shape output_shape(const Shape& in) const override {
    if (in.height <= pad_ || in.width <= pad_)
      throw ShapeError("ReflectionPad2d: padding " + std::to_string(pad_) + " too large for " + to_string(in));
    return {in.channels, in.height + 2 * pad_, in.width + 2 * pad_};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    const Shape os = output_shape(x.shape());
    Tensor<Scalar> y(os);
    for (int c = 0; c < os.channels; ++c)
      for (int oy = 0; oy < os.height; ++oy) {
        const int iy = reflect(oy - pad_, x.height());
        for (int ox = 0; ox < os.width; ++ox) y(c, oy, ox) = x(c, iy, reflect(ox - pad_, x.width()));
      }
    if (cache) cache->saved = Tensor<Scalar>(x.shape());
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    Tensor<Scalar> dx(cache.saved.shape());
    for (int c = 0; c < dy.channels(); ++c)
      for (int oy = 0; oy < dy.height(); ++oy) {
        const int iy = reflect(oy - pad_, dx.height());
        for (int ox = 0; ox < dy.width(); ++ox) dx(c, iy, reflect(ox - pad_, dx.width())) += dy(c, oy, ox);
      }
    return dx;
  }

 private:
  static int reflect(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * (n - 1) - i;
    return i;
  }
  int pad_;
};

/// Per-sample, per-channel normalization without affine parameters.
template <typename Scalar>
class InstanceNorm2d : public LayerBase<InstanceNorm2d<Scalar>, Scalar> {
 public:
  explicit InstanceNorm2d(Scalar eps = Scalar(1e-5)) : eps_(eps) {}

  [[nodiscard]] std::string kind() const override { return "InstanceNorm2d"; }
  [[nodiscard]] Shape output_shape(const Shape& in) const override { return in; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    Tensor<Scalar> y(x.shape());
    Vector<Scalar> inv_std(x.channels());
    const Scalar n = static_cast<Scalar>(x.shape().plane());
    for (int c = 0; c < x.channels(); ++c) {
      const auto row = x.matrix().row(c).array();
      const Scalar mu = row.sum() / n;
      const Scalar var = (row - mu).square().sum() / n;
      inv_std[c] = Scalar(1) / std::sqrt(var + eps_);
      y.matrix().row(c) = ((row - mu) * inv_std[c]).matrix();
    }
    if (cache) {
      cache->saved = y;
      cache->stats = inv_std;
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    const Tensor<Scalar>& xhat = cache.saved;
    Tensor<Scalar> dx(dy.shape());
    const Scalar n = static_cast<Scalar>(dy.shape().plane());
    for (int c = 0; c < dy.channels(); ++c) {
      const auto g = dy.matrix().row(c).array();
      const auto xh = xhat.matrix().row(c).array();
      const Scalar mean_g = g.sum() / n;
      const Scalar mean_gx = (g * xh).sum() / n;
      dx.matrix().row(c) = (cache.stats[c] * (g - mean_g - xh * mean_gx)).matrix();
    }
    return dx;
  }

 private:
  Scalar eps_;
};

template <typename Scalar>
class LeakyReLU : public LayerBase<LeakyReLU<Scalar>, Scalar> {
 public:
  /// slope 0 gives a plain ReLU.
  explicit LeakyReLU(Scalar slope = Scalar(0)) : slope_(slope) {}

  [[nodiscard]] std::string kind() const override { return slope_ == Scalar(0) ? "ReLU" : "LeakyReLU"; }
  [[nodiscard]] Shape output_shape(const Shape& in) const override { return in; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    const Scalar s = slope_;
    Tensor<Scalar> y(x.shape(), x.matrix().unaryExpr([s](Scalar v) { return v > Scalar(0) ? v : s * v; }));
    if (cache) cache->saved = x;
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    const Scalar s = slope_;
    return Tensor<Scalar>(dy.shape(), dy.matrix().binaryExpr(cache.saved.matrix(), [s](Scalar g, Scalar v) {
      return v > Scalar(0) ? g : s * g;
    }));
  }

 private:
  Scalar slope_;
};

template <typename Scalar>
class ReLU : public LeakyReLU<Scalar> {
 public:
  ReLU() : LeakyReLU<Scalar>(Scalar(0)) {}
  [[nodiscard]] LayerPtr<Scalar> clone() const override { return std::make_unique<ReLU>(*this); }
};

template <typename Scalar>
class Tanh : public LayerBase<Tanh<Scalar>, Scalar> {
 public:
  [[nodiscard]] std::string kind() const override { return "Tanh"; }
  [[nodiscard]] Shape output_shape(const Shape& in) const override { return in; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    Tensor<Scalar> y(x.shape(), x.matrix().array().tanh().matrix());
    if (cache) cache->saved = y;
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    const auto& y = cache.saved.matrix().array();
    return Tensor<Scalar>(dy.shape(), (dy.matrix().array() * (Scalar(1) - y.square())).matrix());
  }
};

/// 2x2 window, stride 2.
template <typename Scalar>
class MaxPool2d : public LayerBase<MaxPool2d<Scalar>, Scalar> {
 public:
  [[nodiscard]] std::string kind() const override { return "MaxPool2d"; }
  [[nodiscard]] Shape output_shape(const Shape& in) const override {
    if (in.height < 2 || in.width < 2) throw ShapeError("MaxPool2d input too small: " + to_string(in));
    return {in.channels, in.height / 2, in.width / 2};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    const Shape os = output_shape(x.shape());
    Tensor<Scalar> y(os);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(os.size()));
    std::size_t k = 0;
    for (int c = 0; c < os.channels; ++c)
      for (int oy = 0; oy < os.height; ++oy)
        for (int ox = 0; ox < os.width; ++ox, ++k) {
          std::int64_t best = std::int64_t{2 * oy} * x.width() + 2 * ox;
          Scalar bv = x.matrix()(c, best);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::int64_t p = std::int64_t{2 * oy + dy} * x.width() + 2 * ox + dx;
              if (x.matrix()(c, p) > bv) {
                bv = x.matrix()(c, p);
                best = p;
              }
            }
          y(c, oy, ox) = bv;
          idx[k] = best;
        }
    if (cache) {
      cache->saved = Tensor<Scalar>(x.shape());
      cache->indices = std::move(idx);
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    Tensor<Scalar> dx(cache.saved.shape());
    std::size_t k = 0;
    for (int c = 0; c < dy.channels(); ++c)
      for (std::int64_t p = 0; p < dy.shape().plane(); ++p, ++k) dx.matrix()(c, cache.indices[k]) += dy.matrix()(c, p);
    return dx;
  }
};

/// CHW -> (C*H*W) x 1 x 1, keeping memory order.
template <typename Scalar>
class Flatten : public LayerBase<Flatten<Scalar>, Scalar> {
 public:
  [[nodiscard]] std::string kind() const override { return "Flatten"; }
  [[nodiscard]] Shape output_shape(const Shape& in) const override {
    return {static_cast<int>(in.size()), 1, 1};
  }
  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    if (cache) cache->saved = Tensor<Scalar>(x.shape());
    return Tensor<Scalar>(output_shape(x.shape()), Eigen::Map<const Matrix<Scalar>>(x.data(), x.size(), 1));
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    const Shape s = cache.saved.shape();
    return Tensor<Scalar>(s, Eigen::Map<const Matrix<Scalar>>(dy.data(), s.channels, s.plane()));
  }
};

/// Dense layer on an N x 1 x 1 tensor.
template <typename Scalar>
class Linear : public LayerBase<Linear<Scalar>, Scalar> {
 public:
  Linear(int in_features, int out_features)
      : in_(in_features), out_(out_features),
        weight_(ParamRole::weight, out_features, in_features, in_features, out_features),
        bias_(ParamRole::bias, out_features, 1, in_features, out_features) {}

  [[nodiscard]] std::string kind() const override { return "Linear"; }
  [[nodiscard]] Shape output_shape(const Shape& in) const override {
    if (in.height != 1 || in.width != 1 || in.channels != in_)
      throw ShapeError("Linear expects " + std::to_string(in_) + "x1x1, got " + to_string(in));
    return {out_, 1, 1};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    Tensor<Scalar> y(output_shape(x.shape()));
    y.matrix().noalias() = weight_.value * x.matrix();
    y.matrix() += bias_.value;
    if (cache) cache->saved = x;
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    weight_.grad.noalias() += dy.matrix() * cache.saved.matrix().transpose();
    bias_.grad += dy.matrix();
    Tensor<Scalar> dx(cache.saved.shape());
    dx.matrix().noalias() = weight_.value.transpose() * dy.matrix();
    return dx;
  }

  std::vector<Parameter<Scalar>*> parameters() override { return {&weight_, &bias_}; }

 private:
  int in_;
  int out_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
};

/// Splits rows into `parts` horizontal stripes and averages each stripe per
/// channel. Output is (parts*C) x 1 x 1, stripe-major.
template <typename Scalar>
class StripePool : public LayerBase<StripePool<Scalar>, Scalar> {
 public:
  explicit StripePool(int parts) : parts_(parts) {}

  [[nodiscard]] std::string kind() const override { return "StripePool"; }
  [[nodiscard]] int parts() const { return parts_; }
  [[nodiscard]] Shape output_shape(const Shape& in) const override {
    if (in.height < parts_) throw ShapeError("StripePool: fewer rows than parts in " + to_string(in));
    return {in.channels * parts_, 1, 1};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Cache<Scalar>* cache) const override {
    Tensor<Scalar> y(output_shape(x.shape()));
    for (int p = 0; p < parts_; ++p) {
      const auto [r0, r1] = stripe(p, x.height());
      const std::int64_t c0 = std::int64_t{r0} * x.width();
      const std::int64_t n = std::int64_t{r1 - r0} * x.width();
      y.matrix().middleRows(std::int64_t{p} * x.channels(), x.channels()) =
          x.matrix().middleCols(c0, n).rowwise().sum() / static_cast<Scalar>(n);
    }
    if (cache) cache->saved = Tensor<Scalar>(x.shape());
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Cache<Scalar>& cache) override {
    const Shape s = cache.saved.shape();
    Tensor<Scalar> dx(s);
    for (int p = 0; p < parts_; ++p) {
      const auto [r0, r1] = stripe(p, s.height);
      const std::int64_t c0 = std::int64_t{r0} * s.width;
      const std::int64_t n = std::int64_t{r1 - r0} * s.width;
      const auto g = dy.matrix().middleRows(std::int64_t{p} * s.channels, s.channels) / static_cast<Scalar>(n);
      dx.matrix().middleCols(c0, n).colwise() = g.col(0);
    }
    return dx;
  }

 private:
  [[nodiscard]] std::pair<int, int> stripe(int p, int h) const { return {p * h / parts_, (p + 1) * h / parts_}; }
  int parts_;
};

}  // namespace pbgan::nn
