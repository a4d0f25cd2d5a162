#include <doctest.h>

#include "pbgan/fixture.hpp"
#include "pbgan/imgproc.hpp"

using namespace pbgan;

TEST_CASE("texture is deterministic and shaped") {
  const Image a = generate_texture(1, 7, 128, 64);
  const Image b = generate_texture(1, 7, 128, 64);
  CHECK(a.shape() == Shape{3, 64, 128});
  CHECK(a.matrix() == b.matrix());
  CHECK(a.matrix().minCoeff() >= 0.0f);
  CHECK(a.matrix().maxCoeff() <= 1.0f);
}

TEST_CASE("textures of distinct blocks differ") {
  for (int id = 2; id <= 20; ++id) CHECK(mean_abs_difference(generate_texture(1, 7, 128, 64), generate_texture(id, 7, 128, 64)) > 0.05f);
}

TEST_CASE("zero rotation renders RL identical to C") {
  FixtureSpec spec;
  spec.rotation_angle_deg = 0.0;
  const Image tex = generate_texture(4, 7, spec.width, spec.height);
  const auto c = render_perspective(tex, 4, Perspective::C, Lighting::natural, spec);
  const auto rl = render_perspective(tex, 4, Perspective::RL, Lighting::natural, spec);
  CHECK(c.pixels.matrix() == rl.pixels.matrix());
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  CHECK_THROWS_AS(render_perspective(tex, 4, Perspective::SL, Lighting::natural, FixtureSpec{}), ValidationError);
}

TEST_CASE("RL render foreshortens: left edge taller than right") {
  FixtureSpec spec;
  const Image white = Image::constant({3, spec.height, spec.width}, 1.0f);
  const auto rl = render_perspective(white, 1, Perspective::RL, Lighting::natural, spec);
  const auto c = render_perspective(white, 1, Perspective::C, Lighting::natural, spec);
  // Column heights of the face, measured on the rendered pixels.
  const auto column_heights = [](const Image& img) {
    std::vector<int> h(img.width(), 0);
    for (int x = 0; x < img.width(); ++x)
      for (int y = 0; y < img.height(); ++y) h[x] += img(0, y, x) > 0.5f;
    return h;
  };
  const auto hr = column_heights(rl.pixels);
  int first = 0, last = spec.width - 1;
  while (hr[first] == 0) ++first;
  while (hr[last] == 0) --last;
  CHECK(hr[first + 1] > hr[last - 1] + 5);
  const auto hc = column_heights(c.pixels);
  int cf = 0;
  while (hc[cf] == 0) ++cf;
  CHECK(hc[cf + 1] == hc[spec.width - 1 - cf - 1]);
}

TEST_CASE("lighting scales pixel values") {
  FixtureSpec spec;
  spec.luminosity_artificial = 0.5;
  const Image tex = generate_texture(9, 7, spec.width, spec.height);
  const auto nat = render_perspective(tex, 9, Perspective::C, Lighting::natural, spec);
  const auto art = render_perspective(tex, 9, Perspective::C, Lighting::artificial, spec);
  CHECK(mean(art.pixels) / mean(nat.pixels) == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("fixture dataset counts and determinism") {
  FixtureSpec spec;
  spec.n_blocks = 1;
  const auto one = generate_fixture_dataset(spec);
  CHECK(one.size() == 4);
  CHECK(one.is_complete());
  spec.n_blocks = 64;
  spec.width = 32;
  spec.height = 16;
  const auto a = generate_fixture_dataset(spec);
  const auto b = generate_fixture_dataset(spec);
  CHECK(a.size() == 256);
  CHECK(a.manifest_digest == b.manifest_digest);
  spec.n_blocks = 0;
  CHECK_THROWS_AS(generate_fixture_dataset(spec), ValidationError);
}

TEST_CASE("C and RL of one block share texture once the warp is undone") {
  FixtureSpec spec;
  for (int block : {1, 2, 3}) {
    const Image tex = generate_texture(block, spec.seed, spec.width, spec.height);
    const auto c = render_perspective(tex, block, Perspective::C, Lighting::natural, spec);
    const auto rl = render_perspective(tex, block, Perspective::RL, Lighting::natural, spec);
    const auto gc = face_geometry(spec.width, spec.height, 0.0);
    const auto gr = face_geometry(spec.width, spec.height, spec.rotation_angle_deg);
    std::vector<double> a, b;
    // Inner 80% of the face, mapped from the C frame into the RL frame.
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        const auto uv = gc.unproject(x, y);
        if (!uv || std::abs(uv->x()) > 0.4 * gc.face_width || std::abs(uv->y()) > 0.4 * gc.face_height) continue;
        const auto p = gr.project(uv->x(), uv->y());
        for (int ch = 0; ch < 3; ++ch) {
          a.push_back(c.pixels(ch, y, x));
          b.push_back(sample_bilinear(rl.pixels, ch, p.x(), p.y()));
        }
      }
    const auto va = Eigen::Map<Eigen::VectorXd>(a.data(), a.size());
    const auto vb = Eigen::Map<Eigen::VectorXd>(b.data(), b.size());
    const Eigen::VectorXd da = va.array() - va.mean();
    const Eigen::VectorXd db = vb.array() - vb.mean();
    const double ncc = da.dot(db) / (da.norm() * db.norm());
    CHECK(ncc > 0.6);
  }
}
