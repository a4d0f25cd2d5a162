#include <doctest.h>

#include "pbgan/imgproc.hpp"

#include <random>

using namespace pbgan;

TEST_CASE("resize to identical dims is an exact copy") {
  Image img(3, 10, 12);
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(0, 1);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = u(rng);
  const Image out = resize_bilinear(img, 12, 10);
  CHECK(out.matrix() == img.matrix());
  CHECK_THROWS_AS(resize_bilinear(img, 0, 10), ShapeError);
}

TEST_CASE("2x bilinear downscale averages 2x2 blocks") {
  Image img(1, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img(0, y, x) = static_cast<float>(y * 4 + x);
  const Image out = resize_bilinear(img, 2, 2);
  CHECK(out(0, 0, 0) == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
  CHECK(out(0, 1, 1) == doctest::Approx((10 + 11 + 14 + 15) / 4.0));
}

TEST_CASE("homography from four points reproduces the correspondences") {
  const std::array<Eigen::Vector2d, 4> src{Eigen::Vector2d(0, 0), {10, 0}, {10, 5}, {0, 5}};
  const std::array<Eigen::Vector2d, 4> dst{Eigen::Vector2d(1, 0.5), {9.5, -0.2}, {10.3, 5.4}, {-0.4, 4.6}};
  const auto h = homography_from_points(src, dst);
  for (int i = 0; i < 4; ++i) CHECK((apply_homography(h, src[i]) - dst[i]).norm() < 1e-9);
}

TEST_CASE("gaussian blur preserves constant images and mass") {
  Image img = Image::constant({3, 9, 11}, 0.4f);
  const Image out = gaussian_blur(img, 1.2);
  CHECK((out.matrix().array() - 0.4f).abs().maxCoeff() < 1e-6);
  const auto k = gaussian_kernel(1.5);
  double s = 0;
  for (double v : k) s += v;
  CHECK(s == doctest::Approx(1.0));
  CHECK(k.size() == 11);
}

TEST_CASE("ssim is one for identical images and bounded otherwise") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<float> u(0, 1);
  Image a(3, 16, 16), b(3, 16, 16);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = u(rng);
    b.data()[i] = u(rng);
  }
  CHECK(mean_ssim(a, a) == doctest::Approx(1.0));
  const double s = mean_ssim(a, b);
  CHECK(s < 0.2);
  CHECK(s > -1.0);
}

TEST_CASE("crop bounds") {
  Image img(3, 4, 6);
  CHECK(crop(img, 1, 1, 5, 3).shape() == Shape{3, 3, 5});
  CHECK_THROWS_AS(crop(img, 2, 0, 5, 3), ShapeError);
}
