#include "pbgan/fixture.hpp"

#include "pbgan/image_io.hpp"
#include "pbgan/imgproc.hpp"
#include "pbgan/util.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

namespace pbgan {

void FixtureSpec::validate() const {
  if (n_blocks < 1) throw ValidationError("fixture needs at least one block");
  if (width < 8 || height < 8) throw ValidationError("fixture dims must be at least 8x8");
  if (!(rotation_angle_deg > 0.0 && rotation_angle_deg < 45.0))
    throw ValidationError("rotation_angle_deg must lie in (0, 45)");
  for (double l : {luminosity_natural, luminosity_artificial})
    if (!(l > 0.0 && l <= 1.0)) throw ValidationError("luminosity scale must lie in (0, 1]");
}

void to_json(nlohmann::json& j, const FixtureSpec& s) {
  j = {{"n_blocks", s.n_blocks},
       {"width", s.width},
       {"height", s.height},
       {"seed", s.seed},
       {"rotation_angle_deg", s.rotation_angle_deg},
       {"luminosity_natural", s.luminosity_natural},
       {"luminosity_artificial", s.luminosity_artificial}};
}

void from_json(const nlohmann::json& j, FixtureSpec& s) {
  s.n_blocks = j.value("n_blocks", s.n_blocks);
  s.width = j.value("width", s.width);
  s.height = j.value("height", s.height);
  s.seed = j.value("seed", s.seed);
  s.rotation_angle_deg = j.value("rotation_angle_deg", s.rotation_angle_deg);
  s.luminosity_natural = j.value("luminosity_natural", s.luminosity_natural);
  s.luminosity_artificial = j.value("luminosity_artificial", s.luminosity_artificial);
}

Eigen::Vector2d FaceGeometry::project(double u, double v) const {
  const double z = camera_distance + u * std::sin(yaw_rad);
  const double x = camera_distance * u * std::cos(yaw_rad) / z;
  const double y = camera_distance * v / z;
  return {centre_x + shift_x + x, centre_y + y};
}

std::optional<Eigen::Vector2d> FaceGeometry::unproject(double x, double y) const {
  const double xp = x - centre_x - shift_x;
  const double yp = y - centre_y;
  const double denom = camera_distance * std::cos(yaw_rad) - xp * std::sin(yaw_rad);
  if (denom <= 0) return std::nullopt;
  const double u = xp * camera_distance / denom;
  const double z = camera_distance + u * std::sin(yaw_rad);
  const double v = yp * z / camera_distance;
  if (std::abs(u) > face_width / 2 || std::abs(v) > face_height / 2) return std::nullopt;
  return Eigen::Vector2d(u, v);
}

FaceGeometry face_geometry(int width, int height, double yaw_deg) {
  FaceGeometry g;
  g.face_width = 0.70 * width;
  g.face_height = 0.60 * height;
  g.camera_distance = 1.5 * g.face_width;
  g.yaw_rad = yaw_deg * std::numbers::pi / 180.0;
  g.centre_x = (width - 1) / 2.0;
  g.centre_y = (height - 1) / 2.0;
  // Recentre the projected quad horizontally.
  const double left = g.project(-g.face_width / 2, 0).x();
  const double right = g.project(g.face_width / 2, 0).x();
  g.shift_x = g.centre_x - (left + right) / 2;
  return g;
}

namespace {

double smooth(double t) { return t * t * (3 - 2 * t); }

/// Value noise on a lattice of `cells` x `cells_y` cells.
class ValueNoise {
 public:
  ValueNoise(int cells_x, int cells_y, Rng& rng) : nx_(cells_x + 1), ny_(cells_y + 1), lattice_(nx_ * ny_) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : lattice_) v = u(rng);
  }
  /// fx, fy in [0,1]
  [[nodiscard]] double at(double fx, double fy) const {
    const double gx = fx * (nx_ - 1);
    const double gy = fy * (ny_ - 1);
    const int x0 = std::min(static_cast<int>(gx), nx_ - 2);
    const int y0 = std::min(static_cast<int>(gy), ny_ - 2);
    const double tx = smooth(gx - x0);
    const double ty = smooth(gy - y0);
    const auto l = [&](int x, int y) { return lattice_[static_cast<std::size_t>(y) * nx_ + x]; };
    const double top = l(x0, y0) * (1 - tx) + l(x0 + 1, y0) * tx;
    const double bottom = l(x0, y0 + 1) * (1 - tx) + l(x0 + 1, y0 + 1) * tx;
    return top * (1 - ty) + bottom * ty;
  }

 private:
  int nx_;
  int ny_;
  std::vector<double> lattice_;
};

}  // namespace

Image generate_texture(int block_id, std::uint64_t seed, int width, int height) {
  if (width <= 0 || height <= 0) throw ValidationError("texture dims must be positive");
  Rng rng(derive_seed(seed, 0x7E47, block_id));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double base[3] = {0.70 + 0.08 * (unit(rng) - 0.5), 0.56 + 0.08 * (unit(rng) - 0.5),
                          0.38 + 0.08 * (unit(rng) - 0.5)};

  std::vector<ValueNoise> octaves;
  const double weights[3] = {0.5, 0.3, 0.2};
  for (int cells : {4, 9, 20}) octaves.emplace_back(cells, std::max(2, cells * height / width), rng);

  std::vector<double> shade(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double fx = (x + 0.5) / width;
      const double fy = (y + 0.5) / height;
      double n = 0;
      for (std::size_t o = 0; o < octaves.size(); ++o) n += weights[o] * octaves[o].at(fx, fy);
      shade[static_cast<std::size_t>(y) * width + x] = 0.22 * n;
    }

  // Elliptical chips: pressed wood fragments, mostly darker than the base.
  Image tex(3, height, width);
  std::vector<std::array<double, 3>> delta(shade.size(), {0, 0, 0});
  const int n_chips = std::max(8, width * height / 90);
  const double max_axis = std::max(2.0, 0.07 * width);
  for (int i = 0; i < n_chips; ++i) {
    const double cx = unit(rng) * width;
    const double cy = unit(rng) * height;
    const double a = 1.2 + unit(rng) * (max_axis - 1.2);
    const double b = 0.8 + unit(rng) * std::max(0.5, 0.55 * a - 0.8);
    const double th = unit(rng) * std::numbers::pi;
    const double tone = -0.38 + unit(rng) * 0.58;
    const double tint[3] = {1.0, 0.9 + 0.2 * unit(rng), 0.7 + 0.5 * unit(rng)};
    const double ct = std::cos(th), st = std::sin(th);
    const int x0 = std::max(0, static_cast<int>(cx - a - 1)), x1 = std::min(width - 1, static_cast<int>(cx + a + 1));
    const int y0 = std::max(0, static_cast<int>(cy - a - 1)), y1 = std::min(height - 1, static_cast<int>(cy + a + 1));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double r = std::pow((dx * ct + dy * st) / a, 2) + std::pow((-dx * st + dy * ct) / b, 2);
        if (r >= 1.0) continue;
        const double w = 1.0 - r * r;
        auto& d = delta[static_cast<std::size_t>(y) * width + x];
        for (int c = 0; c < 3; ++c) d[c] = d[c] * (1 - w) + tone * tint[c] * w;
      }
  }

  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      for (int c = 0; c < 3; ++c)
        tex(c, y, x) = static_cast<float>(std::clamp(base[c] * (1.0 + shade[i]) + delta[i][c], 0.0, 1.0));
    }
  return tex;
}

ImageRecord render_perspective(const Image& texture, int block_id, Perspective perspective, Lighting lighting,
                               const FixtureSpec& spec) {
  if (texture.channels() != 3 || texture.empty()) throw ValidationError("texture must be a 3-channel image");
  double yaw = 0.0;
  if (perspective == Perspective::RL) {
    yaw = spec.rotation_angle_deg;
    if (!(yaw >= 0.0 && yaw < 45.0)) throw ValidationError("rotation angle must lie in [0, 45)");
  } else if (perspective != Perspective::C) {
    throw ValidationError("fixture renders only C and RL, got " + to_tag(perspective));
  }

  const FaceGeometry g = face_geometry(spec.width, spec.height, yaw);
  const double lum = spec.luminosity(lighting);
  Image out(3, spec.height, spec.width);
  for (int y = 0; y < spec.height; ++y) {
    const double bg = 0.12 + 0.08 * y / std::max(1, spec.height - 1);
    for (int x = 0; x < spec.width; ++x) {
      const auto uv = g.unproject(x, y);
      for (int c = 0; c < 3; ++c) {
        double v = bg;
        if (uv) {
          const double tx = (uv->x() / g.face_width + 0.5) * texture.width() - 0.5;
          const double ty = (uv->y() / g.face_height + 0.5) * texture.height() - 0.5;
          v = sample_bilinear(texture, c, tx, ty);
        }
        out(c, y, x) = static_cast<float>(v * lum);
      }
    }
  }

  ImageRecord r;
  r.block_id = block_id;
  r.perspective = perspective;
  r.lighting = lighting;
  r.pixels = quantize_8bit(out);
  r.normalization = Normalization::unit;
  r.source_path = "fixture:" + std::to_string(block_id) + "/" + to_tag(perspective) + "_" + to_tag(lighting);
  return r;
}

PerspectiveDataset generate_fixture_dataset(const FixtureSpec& spec) {
  spec.validate();
  std::vector<ImageRecord> records;
  records.reserve(static_cast<std::size_t>(spec.n_blocks) * 4);
  for (int b = 1; b <= spec.n_blocks; ++b) {
    const Image tex = generate_texture(b, spec.seed, spec.width, spec.height);
    for (auto p : {Perspective::C, Perspective::RL})
      for (auto l : {Lighting::natural, Lighting::artificial}) records.push_back(render_perspective(tex, b, p, l, spec));
  }
  return make_dataset(std::move(records));
}

PerspectiveDataset write_fixture_dataset(const FixtureSpec& spec, const std::filesystem::path& root) {
  auto ds = generate_fixture_dataset(spec);
  write_dataset(ds, root);
  nlohmann::json j = {{"fixture", spec}, {"n_records", ds.size()}, {"manifest_digest", ds.manifest_digest}};
  std::ofstream(root / "fixture.json") << j.dump(2) << '\n';
  return ds;
}

}  // namespace pbgan
