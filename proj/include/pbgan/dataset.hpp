#pragma once

#include "pbgan/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pbgan {

/// Camera perspective of a block image. Only C and RL take part in
/// translation; the remaining tags are accepted on ingest.
enum class Perspective { C, RL, RR, SL, SR };
enum class Lighting { natural, artificial };
/// unit: [0,1] (classifier, re-id); symmetric: [-1,1] (GAN).
enum class Normalization { unit, symmetric };
enum class StratifyBy { block, image };

std::string to_tag(Perspective p);
std::string to_tag(Lighting l);
std::string to_tag(StratifyBy s);
Perspective parse_perspective(std::string_view tag);
Lighting parse_lighting(std::string_view tag);
StratifyBy parse_stratify(std::string_view tag);

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ImageRecord {
  int block_id = 0;
  Perspective perspective = Perspective::C;
  Lighting lighting = Lighting::natural;
  Image pixels;
  Normalization normalization = Normalization::unit;
  std::string source_path;
  bool synthetic = false;

  /// Copy of the pixels in the requested range.
  [[nodiscard]] Image pixels_as(Normalization target) const;
};

/// Throws ValidationError unless the record has 3 channels and dims >= 8.
void validate_record(const ImageRecord& r);

struct PerspectiveDataset {
  std::vector<ImageRecord> records;
  int n_blocks = 0;
  std::string manifest_digest;

  [[nodiscard]] bool empty() const { return records.empty(); }
  [[nodiscard]] std::size_t size() const { return records.size(); }
  /// Every block has exactly two C and two RL records.
  [[nodiscard]] bool is_complete() const;
  [[nodiscard]] std::vector<int> block_ids() const;
};

/// Sorts by (block, perspective, lighting), rejects duplicate keys and
/// invalid pixels, and fills n_blocks / manifest_digest.
PerspectiveDataset make_dataset(std::vector<ImageRecord> records);

/// Digest over record keys and pixel contents, independent of source paths.
std::string compute_manifest_digest(const std::vector<ImageRecord>& records);

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  StratifyBy stratify_by = StratifyBy::block;

  void validate() const;
};
void to_json(nlohmann::json& j, const SplitSpec& s);
void from_json(const nlohmann::json& j, SplitSpec& s);

enum class DatasetLayout { auto_detect, directory, manifest_csv };

struct IngestOptions {
  DatasetLayout layout = DatasetLayout::auto_detect;
  /// Resize every image on load (width, height); keeps memory bounded.
  std::optional<std::pair<int, int>> resize_to;
  /// Restrict to these perspectives; empty keeps all.
  std::vector<Perspective> perspectives;
};

/// Loads `<root>/<block:4d>/<persp>_<light>.png` or `<root>/manifest.csv`.
PerspectiveDataset ingest_dataset(const std::filesystem::path& root, const IngestOptions& opts = {});

/// Writes PNGs in the directory layout plus manifest.csv; returns the
/// manifest path. Records get their source_path updated.
std::filesystem::path write_dataset(PerspectiveDataset& ds, const std::filesystem::path& root);

/// Deterministic partition. Block mode puts floor(f*N) blocks in train;
/// image mode holds out floor((1-f)*n) images per perspective class.
std::pair<PerspectiveDataset, PerspectiveDataset> split_dataset(const PerspectiveDataset& ds, const SplitSpec& spec);

/// CSV `path,block_id,perspective,lighting,split` with a `<file>.json`
/// sidecar holding the SplitSpec and counts.
void write_split_manifest(const std::filesystem::path& csv_path, const PerspectiveDataset& train,
                          const PerspectiveDataset& holdout, const SplitSpec& spec);

/// Bilinear resize to (width, height); normalization preserved.
ImageRecord resize_for_gan(const ImageRecord& img, int width, int height);

/// C and RL records, each ordered by (block_id, lighting).
std::pair<std::vector<ImageRecord>, std::vector<ImageRecord>> domain_views(const PerspectiveDataset& ds);

std::string record_key(const ImageRecord& r);

/// Comma split with surrounding blanks trimmed; no quoting.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace pbgan
