#pragma once

#include "pbgan/tensor.hpp"

#include <algorithm>

namespace pbgan::nn {

/// Sliding-window geometry of a square-kernel convolution with zero padding.
struct WindowGeometry {
  int kernel = 1;
  int stride = 1;
  int padding = 0;

  [[nodiscard]] int output_extent(int in) const { return (in + 2 * padding - kernel) / stride + 1; }
  [[nodiscard]] int transposed_extent(int in, int output_padding) const {
    return (in - 1) * stride - 2 * padding + kernel + output_padding;
  }
};

namespace detail {

// Range of grid positions o in [0, n) with lo <= o*stride + offset < hi.
inline std::pair<int, int> valid_range(int n, int stride, int offset, int hi) {
  int first = 0;
  if (offset < 0) first = (-offset + stride - 1) / stride;
  int last = hi - 1 - offset < 0 ? -1 : (hi - 1 - offset) / stride;
  last = std::min(last, n - 1);
  return {std::min(first, n), std::max(last + 1, std::min(first, n))};
}

}  // namespace detail

/// Gathers kernel windows of `src` into columns for the grid rows
/// [row_begin, row_end). Row index of `cols` is (c*k + ky)*k + kx, column
/// index is (oy - row_begin)*grid_w + ox.
template <typename Scalar>
void im2col(const Tensor<Scalar>& src, const WindowGeometry& g, int grid_w, int row_begin, int row_end,
            Matrix<Scalar>& cols) {
  const int k = g.kernel;
  const int rows = row_end - row_begin;
  cols.resize(std::int64_t{src.channels()} * k * k, std::int64_t{rows} * grid_w);
  const int h = src.height();
  const int w = src.width();
  for (int c = 0; c < src.channels(); ++c) {
    const Scalar* plane = src.matrix().row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* out = cols.row((std::int64_t{c} * k + ky) * k + kx).data();
        const auto [x0, x1] = detail::valid_range(grid_w, g.stride, kx - g.padding, w);
        for (int oy = row_begin; oy < row_end; ++oy) {
          Scalar* dst = out + std::int64_t{oy - row_begin} * grid_w;
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + grid_w, Scalar(0));
            continue;
          }
          std::fill(dst, dst + x0, Scalar(0));
          const Scalar* line = plane + std::int64_t{iy} * w;
          const int off = kx - g.padding;
          if (g.stride == 1) {
            std::copy(line + x0 + off, line + x1 + off, dst + x0);
          } else {
            for (int ox = x0; ox < x1; ++ox) dst[ox] = line[ox * g.stride + off];
          }
          std::fill(dst + x1, dst + grid_w, Scalar(0));
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters-and-adds columns back into `dst`.
template <typename Scalar>
void col2im_add(const Matrix<Scalar>& cols, const WindowGeometry& g, int grid_w, int row_begin, int row_end,
                Tensor<Scalar>& dst) {
  const int k = g.kernel;
  const int h = dst.height();
  const int w = dst.width();
  for (int c = 0; c < dst.channels(); ++c) {
    Scalar* plane = dst.matrix().row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* in = cols.row((std::int64_t{c} * k + ky) * k + kx).data();
        const auto [x0, x1] = detail::valid_range(grid_w, g.stride, kx - g.padding, w);
        for (int oy = row_begin; oy < row_end; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= h) continue;
          const Scalar* srow = in + std::int64_t{oy - row_begin} * grid_w;
          Scalar* line = plane + std::int64_t{iy} * w;
          const int off = kx - g.padding;
          for (int ox = x0; ox < x1; ++ox) line[ox * g.stride + off] += srow[ox];
        }
      }
    }
  }
}

/// Number of grid rows per band so that one band of columns stays below
/// `budget` elements.
inline int band_rows(std::int64_t col_rows, int grid_w, int grid_h, std::int64_t budget = std::int64_t{1} << 22) {
  const std::int64_t per_row = std::max<std::int64_t>(1, col_rows * grid_w);
  return static_cast<int>(std::clamp<std::int64_t>(budget / per_row, 1, std::max(1, grid_h)));
}

}  // namespace pbgan::nn
