#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace pbgan {

/// Channel/height/width triple. Ordering follows the in-memory layout.
struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  [[nodiscard]] std::int64_t plane() const { return std::int64_t{height} * width; }
  [[nodiscard]] std::int64_t size() const { return channels * plane(); }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Planar CHW tensor. Stored as a (channels x height*width) row-major
/// matrix so a whole channel plane is one contiguous row.
template <typename Scalar>
class Tensor {
 public:
  using MatrixType = Matrix<Scalar>;

  Tensor() = default;
  explicit Tensor(Shape s) : shape_(s), data_(MatrixType::Zero(s.channels, s.plane())) {}
  Tensor(int channels, int height, int width) : Tensor(Shape{channels, height, width}) {}
  Tensor(Shape s, MatrixType data) : shape_(s), data_(std::move(data)) {
    if (data_.rows() != s.channels || data_.cols() != s.plane())
      throw ShapeError("tensor data does not match shape " + to_string(s));
  }

  static Tensor constant(Shape s, Scalar v) { return Tensor(s, MatrixType::Constant(s.channels, s.plane(), v)); }

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] int channels() const { return shape_.channels; }
  [[nodiscard]] int height() const { return shape_.height; }
  [[nodiscard]] int width() const { return shape_.width; }
  [[nodiscard]] std::int64_t size() const { return shape_.size(); }
  [[nodiscard]] bool empty() const { return size() == 0; }

  Scalar& operator()(int c, int y, int x) { return data_(c, std::int64_t{y} * shape_.width + x); }
  Scalar operator()(int c, int y, int x) const { return data_(c, std::int64_t{y} * shape_.width + x); }

  MatrixType& matrix() { return data_; }
  [[nodiscard]] const MatrixType& matrix() const { return data_; }

  auto flat() { return Eigen::Map<Vector<Scalar>>(data_.data(), data_.size()); }
  [[nodiscard]] auto flat() const { return Eigen::Map<const Vector<Scalar>>(data_.data(), data_.size()); }

  Scalar* data() { return data_.data(); }
  [[nodiscard]] const Scalar* data() const { return data_.data(); }

  template <typename Other>
  [[nodiscard]] Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

 private:
  Shape shape_;
  MatrixType data_;
};

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <typename Scalar>
Scalar mean(const Tensor<Scalar>& t) {
  return t.empty() ? Scalar(0) : t.matrix().mean();
}

template <typename Scalar>
Scalar mean_abs_difference(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "mean_abs_difference");
  if (a.empty()) return Scalar(0);
  return (a.matrix() - b.matrix()).cwiseAbs().mean();
}

template <typename Scalar>
bool all_finite(const Tensor<Scalar>& t) {
  return t.matrix().allFinite();
}

/// [0,1] -> [-1,1]
template <typename Scalar>
Tensor<Scalar> to_symmetric_range(const Tensor<Scalar>& t) {
  return Tensor<Scalar>(t.shape(), (t.matrix().array() * Scalar(2) - Scalar(1)).matrix());
}

/// [-1,1] -> [0,1]
template <typename Scalar>
Tensor<Scalar> to_unit_range(const Tensor<Scalar>& t) {
  return Tensor<Scalar>(t.shape(), ((t.matrix().array() + Scalar(1)) * Scalar(0.5)).matrix());
}

using Image = Tensor<float>;

}  // namespace pbgan
