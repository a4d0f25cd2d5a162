#pragma once

#include "pbgan/dataset.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <optional>

namespace pbgan {

struct FixtureSpec {
  int n_blocks = 64;
  int width = 128;
  int height = 64;
  std::uint64_t seed = 7;
  double rotation_angle_deg = 20.0;
  double luminosity_natural = 1.0;
  double luminosity_artificial = 0.6;

  /// n_blocks >= 1, dims >= 8, angle in (0, 45), luminosity in (0, 1].
  void validate() const;
  [[nodiscard]] double luminosity(Lighting l) const {
    return l == Lighting::natural ? luminosity_natural : luminosity_artificial;
  }
};
void to_json(nlohmann::json& j, const FixtureSpec& s);
void from_json(const nlohmann::json& j, FixtureSpec& s);

/// Where the block face lands in the rendered frame. Face-plane
/// coordinates (u, v) are centred on the face, in pixels of the frontal
/// render; a yaw rotates the face about its vertical axis with the left
/// edge moving toward the camera.
struct FaceGeometry {
  double face_width = 0;
  double face_height = 0;
  double camera_distance = 0;
  double yaw_rad = 0;
  double centre_x = 0;
  double centre_y = 0;
  double shift_x = 0;

  [[nodiscard]] Eigen::Vector2d project(double u, double v) const;
  /// Image point back to the face plane; nullopt when behind the camera
  /// or off the face.
  [[nodiscard]] std::optional<Eigen::Vector2d> unproject(double x, double y) const;
};

FaceGeometry face_geometry(int width, int height, double yaw_deg);

/// Chipwood-like texture in [0,1], deterministic in (block_id, seed).
Image generate_texture(int block_id, std::uint64_t seed, int width, int height);

/// Frames `texture` frontally (C) or under the yaw warp (RL) and scales
/// by the lighting luminosity. Output is quantized to 8 bits so it
/// round-trips through PNG unchanged. Angles must lie in [0, 45).
ImageRecord render_perspective(const Image& texture, int block_id, Perspective perspective, Lighting lighting,
                               const FixtureSpec& spec);

/// n_blocks x {C, RL} x {natural, artificial}.
PerspectiveDataset generate_fixture_dataset(const FixtureSpec& spec);

/// Generates and writes the dataset layout plus fixture.json.
PerspectiveDataset write_fixture_dataset(const FixtureSpec& spec, const std::filesystem::path& root);

}  // namespace pbgan
