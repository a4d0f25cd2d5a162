#include "pbgan/dataset.hpp"

#include "pbgan/image_io.hpp"
#include "pbgan/imgproc.hpp"
#include "pbgan/log.hpp"
#include "pbgan/util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

namespace pbgan {

namespace fs = std::filesystem;

std::string to_tag(Perspective p) {
  switch (p) {
    case Perspective::C: return "c";
    case Perspective::RL: return "rl";
    case Perspective::RR: return "rr";
    case Perspective::SL: return "sl";
    case Perspective::SR: return "sr";
  }
  return "?";
}

std::string to_tag(Lighting l) { return l == Lighting::natural ? "nat" : "art"; }
std::string to_tag(StratifyBy s) { return s == StratifyBy::block ? "block" : "image"; }

Perspective parse_perspective(std::string_view tag) {
  std::string t(tag);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "c") return Perspective::C;
  if (t == "rl") return Perspective::RL;
  if (t == "rr") return Perspective::RR;
  if (t == "sl") return Perspective::SL;
  if (t == "sr") return Perspective::SR;
  throw ValidationError("unknown perspective tag '" + std::string(tag) + "'");
}

Lighting parse_lighting(std::string_view tag) {
  if (tag == "nat" || tag == "natural") return Lighting::natural;
  if (tag == "art" || tag == "artificial") return Lighting::artificial;
  throw ValidationError("unknown lighting tag '" + std::string(tag) + "'");
}

StratifyBy parse_stratify(std::string_view tag) {
  if (tag == "block") return StratifyBy::block;
  if (tag == "image") return StratifyBy::image;
  throw ValidationError("unknown stratify mode '" + std::string(tag) + "'");
}

Image ImageRecord::pixels_as(Normalization target) const {
  if (target == normalization) return pixels;
  return target == Normalization::symmetric ? to_symmetric_range(pixels) : to_unit_range(pixels);
}

std::string record_key(const ImageRecord& r) {
  return std::to_string(r.block_id) + "/" + to_tag(r.perspective) + "_" + to_tag(r.lighting) +
         (r.synthetic ? "*" : "");
}

void validate_record(const ImageRecord& r) {
  if (r.block_id < 1) throw ValidationError("block_id must be positive: " + record_key(r));
  if (r.pixels.channels() != 3) throw ValidationError("image must have 3 channels: " + record_key(r));
  if (r.pixels.height() < 8 || r.pixels.width() < 8)
    throw ValidationError("image smaller than 8x8: " + record_key(r) + " " + to_string(r.pixels.shape()));
}

namespace {

auto sort_key(const ImageRecord& r) { return std::tuple(r.block_id, r.perspective, r.lighting, r.synthetic); }

}  // namespace

bool PerspectiveDataset::is_complete() const {
  std::map<int, std::pair<int, int>> counts;
  for (const auto& r : records) {
    auto& [c, rl] = counts[r.block_id];
    if (r.perspective == Perspective::C) ++c;
    if (r.perspective == Perspective::RL) ++rl;
  }
  return !counts.empty() && std::all_of(counts.begin(), counts.end(), [](const auto& kv) {
    return kv.second.first == 2 && kv.second.second == 2;
  });
}

std::vector<int> PerspectiveDataset::block_ids() const {
  std::set<int> ids;
  for (const auto& r : records) ids.insert(r.block_id);
  return {ids.begin(), ids.end()};
}

std::string compute_manifest_digest(const std::vector<ImageRecord>& records) {
  Digest d;
  for (const auto& r : records) {
    d.update(record_key(r));
    const int dims[3] = {r.pixels.channels(), r.pixels.height(), r.pixels.width()};
    d.update_array(dims, 3);
    d.update_pod(static_cast<int>(r.normalization));
    d.update_array(r.pixels.data(), static_cast<std::size_t>(r.pixels.size()));
  }
  return d.hex();
}

PerspectiveDataset make_dataset(std::vector<ImageRecord> records) {
  for (const auto& r : records) validate_record(r);
  std::stable_sort(records.begin(), records.end(),
                   [](const ImageRecord& a, const ImageRecord& b) { return sort_key(a) < sort_key(b); });
  for (std::size_t i = 1; i < records.size(); ++i)
    if (sort_key(records[i]) == sort_key(records[i - 1]))
      throw ValidationError("duplicate record " + record_key(records[i]));
  PerspectiveDataset ds;
  ds.records = std::move(records);
  ds.n_blocks = static_cast<int>(ds.block_ids().size());
  ds.manifest_digest = compute_manifest_digest(ds.records);
  return ds;
}

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw ValidationError("train_fraction must lie in (0,1], got " + std::to_string(train_fraction));
}

void to_json(nlohmann::json& j, const SplitSpec& s) {
  j = {{"train_fraction", s.train_fraction}, {"seed", s.seed}, {"stratify_by", to_tag(s.stratify_by)}};
}

void from_json(const nlohmann::json& j, SplitSpec& s) {
  s.train_fraction = j.value("train_fraction", s.train_fraction);
  s.seed = j.value("seed", s.seed);
  if (j.contains("stratify_by")) s.stratify_by = parse_stratify(j.at("stratify_by").get<std::string>());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

namespace {

struct PendingRecord {
  fs::path path;
  int block_id;
  Perspective perspective;
  Lighting lighting;
};

std::vector<PendingRecord> scan_manifest(const fs::path& root) {
  const fs::path manifest = root / "manifest.csv";
  std::ifstream in(manifest);
  if (!in) throw IngestError("cannot read " + manifest.string());
  std::string line;
  if (!std::getline(in, line)) throw IngestError("no records: empty manifest " + manifest.string());
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"path", "block_id", "perspective", "lighting"})
    if (!col.count(need)) throw IngestError(manifest.string() + ": missing column '" + need + "'");
  std::vector<PendingRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < header.size())
      throw IngestError(manifest.string() + ":" + std::to_string(line_no) + ": too few columns");
    PendingRecord p;
    p.path = root / cells[col["path"]];
    try {
      p.block_id = std::stoi(cells[col["block_id"]]);
    } catch (const std::exception&) {
      throw IngestError(manifest.string() + ":" + std::to_string(line_no) + ": bad block_id");
    }
    p.perspective = parse_perspective(cells[col["perspective"]]);
    p.lighting = parse_lighting(cells[col["lighting"]]);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PendingRecord> scan_directory(const fs::path& root) {
  static const std::regex dir_re(R"(\d{4})");
  static const std::regex file_re(R"((c|rl|rr|sl|sr)_(nat|art)\.png)", std::regex::icase);
  std::vector<PendingRecord> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, dir_re)) continue;
    const int block = std::stoi(name);
    for (const auto& f : fs::directory_iterator(entry.path())) {
      std::smatch m;
      const std::string fname = f.path().filename().string();
      if (!f.is_regular_file() || !std::regex_match(fname, m, file_re)) continue;
      out.push_back({f.path(), block, parse_perspective(m[1].str()), parse_lighting(m[2].str())});
    }
  }
  return out;
}

}  // namespace

PerspectiveDataset ingest_dataset(const fs::path& root, const IngestOptions& opts) {
  if (!fs::is_directory(root)) throw IngestError("dataset root is not a directory: " + root.string());
  DatasetLayout layout = opts.layout;
  if (layout == DatasetLayout::auto_detect)
    layout = fs::exists(root / "manifest.csv") ? DatasetLayout::manifest_csv : DatasetLayout::directory;
  auto pending = layout == DatasetLayout::manifest_csv ? scan_manifest(root) : scan_directory(root);
  if (!opts.perspectives.empty())
    std::erase_if(pending, [&](const PendingRecord& p) {
      return std::find(opts.perspectives.begin(), opts.perspectives.end(), p.perspective) == opts.perspectives.end();
    });
  if (pending.empty()) throw IngestError("no records under " + root.string());

  std::vector<ImageRecord> records;
  records.reserve(pending.size());
  for (const auto& p : pending) {
    if (!fs::exists(p.path)) throw IngestError("missing file " + p.path.string());
    ImageRecord r;
    r.block_id = p.block_id;
    r.perspective = p.perspective;
    r.lighting = p.lighting;
    r.pixels = read_png(p.path);
    if (opts.resize_to) r.pixels = resize_bilinear(r.pixels, opts.resize_to->first, opts.resize_to->second);
    r.normalization = Normalization::unit;
    r.source_path = fs::relative(p.path, root).generic_string();
    records.push_back(std::move(r));
  }
  auto ds = make_dataset(std::move(records));
  std::map<Perspective, int> per;
  for (const auto& r : ds.records) ++per[r.perspective];
  std::ostringstream stats;
  for (const auto& [k, v] : per) stats << ' ' << to_tag(k) << '=' << v;
  log_info("ingested ", ds.size(), " records, N=", ds.n_blocks, ",", stats.str());
  return ds;
}

fs::path write_dataset(PerspectiveDataset& ds, const fs::path& root) {
  fs::create_directories(root);
  const fs::path manifest = root / "manifest.csv";
  std::ofstream out(manifest);
  out << "path,block_id,perspective,lighting\n";
  for (auto& r : ds.records) {
    char dir[16];
    std::snprintf(dir, sizeof dir, "%04d", r.block_id);
    const std::string rel = std::string(dir) + "/" + to_tag(r.perspective) + "_" + to_tag(r.lighting) + ".png";
    write_png(root / rel, r.pixels_as(Normalization::unit));
    r.source_path = rel;
    out << rel << ',' << r.block_id << ',' << to_tag(r.perspective) << ',' << to_tag(r.lighting) << '\n';
  }
  if (!out) throw IngestError("failed writing " + manifest.string());
  return manifest;
}

namespace {

std::size_t floor_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

}  // namespace

std::pair<PerspectiveDataset, PerspectiveDataset> split_dataset(const PerspectiveDataset& ds, const SplitSpec& spec) {
  spec.validate();
  if (ds.empty()) throw ValidationError("cannot split an empty dataset");
  std::vector<bool> in_train(ds.size(), false);

  if (spec.stratify_by == StratifyBy::block) {
    auto ids = ds.block_ids();
    Rng rng(derive_seed(spec.seed, 0xB10C));
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::set<int> train_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(floor_count(spec.train_fraction, ids.size())));
    for (std::size_t i = 0; i < ds.size(); ++i) in_train[i] = train_ids.count(ds.records[i].block_id) > 0;
  } else {
    std::map<Perspective, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.records[i].perspective].push_back(i);
    for (auto& [cls, idx] : by_class) {
      Rng rng(derive_seed(spec.seed, 0x1A6E, static_cast<int>(cls)));
      std::shuffle(idx.begin(), idx.end(), rng);
      const std::size_t holdout = floor_count(1.0 - spec.train_fraction, idx.size());
      for (std::size_t k = holdout; k < idx.size(); ++k) in_train[idx[k]] = true;
    }
  }

  std::vector<ImageRecord> train;
  std::vector<ImageRecord> holdout;
  for (std::size_t i = 0; i < ds.size(); ++i) (in_train[i] ? train : holdout).push_back(ds.records[i]);
  if (train.empty()) throw ValidationError("split yields an empty train set");
  return {make_dataset(std::move(train)), holdout.empty() ? PerspectiveDataset{} : make_dataset(std::move(holdout))};
}

void write_split_manifest(const fs::path& csv_path, const PerspectiveDataset& train, const PerspectiveDataset& holdout,
                          const SplitSpec& spec) {
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  std::ofstream out(csv_path);
  out << "path,block_id,perspective,lighting,split\n";
  for (const auto* part : {&train, &holdout})
    for (const auto& r : part->records)
      out << r.source_path << ',' << r.block_id << ',' << to_tag(r.perspective) << ',' << to_tag(r.lighting) << ','
          << (part == &train ? "train" : "holdout") << '\n';
  nlohmann::json side = {{"split", spec},
                         {"n_train", train.size()},
                         {"n_holdout", holdout.size()},
                         {"train_digest", train.manifest_digest},
                         {"holdout_digest", holdout.manifest_digest}};
  std::ofstream(fs::path(csv_path.string() + ".json")) << side.dump(2) << '\n';
}

ImageRecord resize_for_gan(const ImageRecord& img, int width, int height) {
  if (width <= 0 || height <= 0) throw ValidationError("resize target must be positive");
  ImageRecord out = img;
  out.pixels = resize_bilinear(img.pixels, width, height);
  return out;
}

std::pair<std::vector<ImageRecord>, std::vector<ImageRecord>> domain_views(const PerspectiveDataset& ds) {
  std::vector<ImageRecord> c;
  std::vector<ImageRecord> rl;
  for (const auto& r : ds.records) {
    if (r.perspective == Perspective::C) c.push_back(r);
    if (r.perspective == Perspective::RL) rl.push_back(r);
  }
  const auto by_block_light = [](const ImageRecord& a, const ImageRecord& b) {
    return std::tie(a.block_id, a.lighting) < std::tie(b.block_id, b.lighting);
  };
  std::stable_sort(c.begin(), c.end(), by_block_light);
  std::stable_sort(rl.begin(), rl.end(), by_block_light);
  return {std::move(c), std::move(rl)};
}

}  // namespace pbgan
