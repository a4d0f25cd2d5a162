#pragma once

#include "pbgan/tensor.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <vector>

namespace pbgan {

enum class Border { replicate, constant };

/// Bilinear sample at continuous pixel coordinates (pixel centers at
/// integers). Out-of-range coordinates are clamped or filled.
template <typename Scalar>
Scalar sample_bilinear(const Tensor<Scalar>& t, int c, double x, double y, Border border = Border::replicate,
                       Scalar fill = Scalar(0)) {
  const int w = t.width();
  const int h = t.height();
  if (border == Border::constant && (x < -0.5 || y < -0.5 || x > w - 0.5 || y > h - 0.5)) return fill;
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1 - fx) * t(c, y0, x0) + fx * t(c, y0, x1);
  const double bottom = (1 - fx) * t(c, y1, x0) + fx * t(c, y1, x1);
  return static_cast<Scalar>((1 - fy) * top + fy * bottom);
}

/// Half-pixel-centre bilinear resize. Equal dims return an exact copy.
template <typename Scalar>
Tensor<Scalar> resize_bilinear(const Tensor<Scalar>& src, int width, int height) {
  if (width <= 0 || height <= 0) throw ShapeError("resize_bilinear: non-positive target dims");
  if (width == src.width() && height == src.height()) return src;
  Tensor<Scalar> out(src.channels(), height, width);
  const double sx = static_cast<double>(src.width()) / width;
  const double sy = static_cast<double>(src.height()) / height;
  for (int c = 0; c < src.channels(); ++c)
    for (int y = 0; y < height; ++y) {
      const double fy = (y + 0.5) * sy - 0.5;
      for (int x = 0; x < width; ++x) out(c, y, x) = sample_bilinear(src, c, (x + 0.5) * sx - 0.5, fy);
    }
  return out;
}

/// Homography mapping src[i] -> dst[i] for four point pairs (DLT, h33 = 1).
inline Eigen::Matrix3d homography_from_points(const std::array<Eigen::Vector2d, 4>& src,
                                              const std::array<Eigen::Vector2d, 4>& dst) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = src[i].x(), y = src[i].y(), u = dst[i].x(), v = dst[i].y();
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> h = a.fullPivLu().solve(b);
  Eigen::Matrix3d hm;
  hm << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return hm;
}

inline Eigen::Vector2d apply_homography(const Eigen::Matrix3d& h, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = h * p.homogeneous();
  return q.hnormalized();
}

/// Inverse-mapped warp: output pixel p samples src at dst_to_src(p).
template <typename Scalar>
Tensor<Scalar> warp_perspective(const Tensor<Scalar>& src, const Eigen::Matrix3d& dst_to_src, int width, int height,
                                Border border = Border::replicate, Scalar fill = Scalar(0)) {
  Tensor<Scalar> out(src.channels(), height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector2d s = apply_homography(dst_to_src, Eigen::Vector2d(x, y));
      for (int c = 0; c < src.channels(); ++c) out(c, y, x) = sample_bilinear(src, c, s.x(), s.y(), border, fill);
    }
  return out;
}

/// Normalized 1-D Gaussian taps, radius ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  return k;
}

/// Separable Gaussian blur with mirrored borders. sigma <= 0 is a no-op.
template <typename Scalar>
Tensor<Scalar> gaussian_blur(const Tensor<Scalar>& src, double sigma) {
  if (sigma <= 0) return src;
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const auto mirror = [](int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  const int w = src.width();
  const int h = src.height();
  Tensor<Scalar> tmp(src.shape());
  Tensor<Scalar> out(src.shape());
  for (int c = 0; c < src.channels(); ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * src(c, y, mirror(x + i, w));
        tmp(c, y, x) = static_cast<Scalar>(acc);
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp(c, mirror(y + i, h), x);
        out(c, y, x) = static_cast<Scalar>(acc);
      }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> crop(const Tensor<Scalar>& src, int x0, int y0, int width, int height) {
  if (width <= 0 || height <= 0 || x0 < 0 || y0 < 0 || x0 + width > src.width() || y0 + height > src.height())
    throw ShapeError("crop window outside image");
  Tensor<Scalar> out(src.channels(), height, width);
  for (int c = 0; c < src.channels(); ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out(c, y, x) = src(c, y0 + y, x0 + x);
  return out;
}

/// Channel-averaged luminance plane as a 1-channel tensor.
template <typename Scalar>
Tensor<Scalar> channel_mean(const Tensor<Scalar>& src) {
  Tensor<Scalar> out(1, src.height(), src.width());
  out.matrix() = src.matrix().colwise().mean();
  return out;
}

/// Mean SSIM over all `window` x `window` windows (stride 1, uniform
/// weights), computed per channel and averaged. Inputs are expected in
/// [0,1]; not clamped.
template <typename Scalar>
double mean_ssim(const Tensor<Scalar>& a, const Tensor<Scalar>& b, int window = 8) {
  require_same_shape(a, b, "mean_ssim");
  const int w = a.width();
  const int h = a.height();
  if (w < window || h < window) throw ShapeError("mean_ssim: image smaller than window");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  // Integral images of a, b, a^2, b^2, ab.
  const int iw = w + 1;
  std::vector<double> sa, sb, saa, sbb, sab;
  double total = 0;
  std::int64_t count = 0;
  const double n = static_cast<double>(window) * window;
  for (int c = 0; c < a.channels(); ++c) {
    for (auto* v : {&sa, &sb, &saa, &sbb, &sab}) v->assign(static_cast<std::size_t>(iw) * (h + 1), 0.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double va = a(c, y, x), vb = b(c, y, x);
        const std::size_t i = static_cast<std::size_t>(y + 1) * iw + x + 1;
        const std::size_t up = i - iw, left = i - 1, diag = i - iw - 1;
        sa[i] = va + sa[up] + sa[left] - sa[diag];
        sb[i] = vb + sb[up] + sb[left] - sb[diag];
        saa[i] = va * va + saa[up] + saa[left] - saa[diag];
        sbb[i] = vb * vb + sbb[up] + sbb[left] - sbb[diag];
        sab[i] = va * vb + sab[up] + sab[left] - sab[diag];
      }
    const auto box = [&](const std::vector<double>& s, int x, int y) {
      const std::size_t x1 = x + window, y1 = y + window;
      return s[y1 * iw + x1] - s[static_cast<std::size_t>(y) * iw + x1] - s[y1 * iw + x] +
             s[static_cast<std::size_t>(y) * iw + x];
    };
    for (int y = 0; y + window <= h; ++y)
      for (int x = 0; x + window <= w; ++x) {
        const double ma = box(sa, x, y) / n, mb = box(sb, x, y) / n;
        const double va = std::max(0.0, box(saa, x, y) / n - ma * ma);
        const double vb = std::max(0.0, box(sbb, x, y) / n - mb * mb);
        const double cov = box(sab, x, y) / n - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
  }
  return total / static_cast<double>(count);
}

}  // namespace pbgan
