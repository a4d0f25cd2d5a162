#pragma once

#include "pbgan/cyclegan.hpp"

#include <filesystem>

namespace pbgan {

struct SyntheticItem {
  int source_block_id = 0;
  Lighting lighting = Lighting::natural;
  /// Translated image (RL perspective, synthetic flag set).
  ImageRecord image;
  double collapse_score = 0;
  bool excluded = false;
  /// Mean intensity of the C input in [0,1].
  double source_luminance = 0;
};

struct SyntheticSet {
  std::vector<SyntheticItem> items;
  std::string checkpoint_digest;
  double threshold = 0.95;

  [[nodiscard]] std::size_t size() const { return items.size(); }
  [[nodiscard]] std::size_t excluded_count() const;
  /// Synthetic RL records of the non-excluded items.
  [[nodiscard]] std::vector<ImageRecord> kept_records() const;
};

/// Mean 8x8-window SSIM between two images in [0,1], clamped to [0,1].
/// 1 means the output is a copy of the input.
double collapse_score(const Image& input, const Image& output);

/// Translates every C record to RL and scores it. Records are resized to
/// the model dims first when needed.
SyntheticSet generate_synthetic_set(const CycleGanCheckpoint& ckpt, const std::vector<ImageRecord>& c_view,
                                    double threshold = 0.95);

struct CollapseFilterResult {
  SyntheticSet kept;
  SyntheticSet excluded;
  double mean_luminance_kept = 0;
  double mean_luminance_excluded = 0;
};
void to_json(nlohmann::json& j, const CollapseFilterResult& r);

/// Partitions on collapse_score >= threshold; threshold in (0, 1].
CollapseFilterResult filter_collapsed(const SyntheticSet& set, double threshold);

/// `<dir>/<block:4d>/rl_<light>.png`, `<dir>/synthetic.csv`
/// (block_id,lighting,path,collapse_score,excluded) and `<dir>/synthetic.json`.
void write_synthetic_set(const SyntheticSet& set, const std::filesystem::path& dir);
SyntheticSet read_synthetic_set(const std::filesystem::path& dir);

}  // namespace pbgan
