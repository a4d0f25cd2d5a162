#include "pbgan/translate.hpp"

#include "pbgan/image_io.hpp"
#include "pbgan/imgproc.hpp"
#include "pbgan/log.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

namespace pbgan {

namespace fs = std::filesystem;

std::size_t SyntheticSet::excluded_count() const {
  return static_cast<std::size_t>(std::count_if(items.begin(), items.end(), [](const auto& i) { return i.excluded; }));
}

std::vector<ImageRecord> SyntheticSet::kept_records() const {
  std::vector<ImageRecord> out;
  for (const auto& i : items)
    if (!i.excluded) out.push_back(i.image);
  return out;
}

double collapse_score(const Image& input, const Image& output) {
  require_same_shape(input, output, "collapse_score");
  return std::clamp(mean_ssim(input, output, 8), 0.0, 1.0);
}

SyntheticSet generate_synthetic_set(const CycleGanCheckpoint& ckpt, const std::vector<ImageRecord>& c_view,
                                    double threshold) {
  SyntheticSet set;
  set.checkpoint_digest = ckpt.digest();
  set.threshold = threshold;
  std::set<std::pair<int, Lighting>> seen;
  for (const auto& rec : c_view) {
    if (rec.perspective != Perspective::C) throw ValidationError("synthetic set input must be C, got " + record_key(rec));
    if (!seen.emplace(rec.block_id, rec.lighting).second)
      throw ValidationError("duplicate synthetic source " + record_key(rec));
    const ImageRecord in = rec.pixels.width() == ckpt.config.width && rec.pixels.height() == ckpt.config.height
                               ? rec
                               : resize_for_gan(rec, ckpt.config.width, ckpt.config.height);
    SyntheticItem item;
    item.source_block_id = rec.block_id;
    item.lighting = rec.lighting;
    item.image = translate(ckpt, in, Direction::C_to_RL);
    const Image in_unit = in.pixels_as(Normalization::unit);
    item.collapse_score = collapse_score(in_unit, item.image.pixels_as(Normalization::unit));
    item.excluded = item.collapse_score >= threshold;
    item.source_luminance = mean(in_unit);
    set.items.push_back(std::move(item));
  }
  log_info("generated ", set.size(), " synthetic images, ", set.excluded_count(), " at or above collapse threshold ",
           threshold);
  return set;
}

void to_json(nlohmann::json& j, const CollapseFilterResult& r) {
  j = {{"threshold", r.kept.threshold},
       {"n_kept", r.kept.size()},
       {"n_excluded", r.excluded.size()},
       {"mean_luminance_kept", r.mean_luminance_kept},
       {"mean_luminance_excluded", r.mean_luminance_excluded}};
}

CollapseFilterResult filter_collapsed(const SyntheticSet& set, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("collapse threshold must lie in (0, 1]");
  CollapseFilterResult r;
  for (auto* part : {&r.kept, &r.excluded}) {
    part->checkpoint_digest = set.checkpoint_digest;
    part->threshold = threshold;
  }
  double lum_kept = 0, lum_excl = 0;
  for (auto item : set.items) {
    item.excluded = item.collapse_score >= threshold;
    (item.excluded ? lum_excl : lum_kept) += item.source_luminance;
    (item.excluded ? r.excluded : r.kept).items.push_back(std::move(item));
  }
  if (!r.kept.items.empty()) r.mean_luminance_kept = lum_kept / static_cast<double>(r.kept.size());
  if (!r.excluded.items.empty()) r.mean_luminance_excluded = lum_excl / static_cast<double>(r.excluded.size());
  return r;
}

namespace {

std::string relative_png(const SyntheticItem& i) {
  char block[16];
  std::snprintf(block, sizeof block, "%04d", i.source_block_id);
  return std::string(block) + "/rl_" + to_tag(i.lighting) + ".png";
}

}  // namespace

void write_synthetic_set(const SyntheticSet& set, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream csv(dir / "synthetic.csv");
  csv << "block_id,lighting,path,collapse_score,excluded\n";
  csv.precision(9);
  nlohmann::json lum = nlohmann::json::array();
  for (const auto& i : set.items) {
    const auto rel = relative_png(i);
    write_png(dir / rel, i.image.pixels_as(Normalization::unit));
    csv << i.source_block_id << ',' << to_tag(i.lighting) << ',' << rel << ',' << i.collapse_score << ','
        << (i.excluded ? 1 : 0) << '\n';
    lum.push_back(i.source_luminance);
  }
  const nlohmann::json meta = {{"checkpoint_digest", set.checkpoint_digest},
                               {"threshold", set.threshold},
                               {"n_items", set.size()},
                               {"n_excluded", set.excluded_count()},
                               {"source_luminance", lum}};
  std::ofstream(dir / "synthetic.json") << meta.dump(2) << '\n';
}

SyntheticSet read_synthetic_set(const fs::path& dir) {
  std::ifstream meta_in(dir / "synthetic.json");
  std::ifstream csv(dir / "synthetic.csv");
  if (!meta_in || !csv) throw IngestError("no synthetic set in " + dir.string());
  const auto meta = nlohmann::json::parse(meta_in);
  SyntheticSet set;
  set.checkpoint_digest = meta.at("checkpoint_digest");
  set.threshold = meta.at("threshold");
  const auto& lum = meta.at("source_luminance");
  std::string line;
  std::getline(csv, line);
  if (split_csv_line(line) != std::vector<std::string>{"block_id", "lighting", "path", "collapse_score", "excluded"})
    throw IngestError("unexpected synthetic.csv header: " + line);
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 5) throw IngestError("malformed synthetic.csv row: " + line);
    SyntheticItem i;
    i.source_block_id = std::stoi(cells[0]);
    i.lighting = parse_lighting(cells[1]);
    i.collapse_score = std::stod(cells[3]);
    i.excluded = cells[4] == "1";
    if (set.items.size() >= lum.size()) throw IngestError("synthetic.json luminance list is short");
    i.source_luminance = lum[set.items.size()];
    const fs::path path = dir / cells[2];
    if (!fs::exists(path)) throw IngestError("missing file " + path.string());
    i.image.block_id = i.source_block_id;
    i.image.perspective = Perspective::RL;
    i.image.lighting = i.lighting;
    i.image.pixels = read_png(path);
    i.image.normalization = Normalization::unit;
    i.image.source_path = path.string();
    i.image.synthetic = true;
    set.items.push_back(std::move(i));
  }
  return set;
}

}  // namespace pbgan
