#include <doctest.h>

#include "pbgan/dataset.hpp"
#include "pbgan/fixture.hpp"
#include "pbgan/image_io.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

using namespace pbgan;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("pbgan_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ImageRecord tiny_record(int block, Perspective p, Lighting l, float value = 0.5f) {
  ImageRecord r;
  r.block_id = block;
  r.perspective = p;
  r.lighting = l;
  r.pixels = Image::constant({3, 8, 8}, value);
  return r;
}

// Synthetic dataset of `blocks` blocks with the full C/RL x nat/art grid.
PerspectiveDataset grid_dataset(int blocks) {
  std::vector<ImageRecord> recs;
  for (int b = 1; b <= blocks; ++b)
    for (auto p : {Perspective::C, Perspective::RL})
      for (auto l : {Lighting::natural, Lighting::artificial}) recs.push_back(tiny_record(b, p, l, 0.01f * (b % 50)));
  return make_dataset(std::move(recs));
}

}  // namespace

TEST_CASE("ingest of a fixture export yields 64*2*2 records") {
  const auto root = temp_dir("ingest64");
  FixtureSpec spec;
  spec.n_blocks = 64;
  spec.width = 32;
  spec.height = 16;
  const auto written = write_fixture_dataset(spec, root);
  const auto ds = ingest_dataset(root);
  CHECK(ds.size() == 256);
  CHECK(ds.n_blocks == 64);
  CHECK(ds.is_complete());
  CHECK(ds.manifest_digest == written.manifest_digest);

  // Same content through the directory scanner.
  fs::remove(root / "manifest.csv");
  const auto ds2 = ingest_dataset(root, {.layout = DatasetLayout::directory});
  CHECK(ds2.size() == 256);
  CHECK(ds2.manifest_digest == written.manifest_digest);
}

TEST_CASE("ingest errors") {
  SUBCASE("empty directory") {
    const auto root = temp_dir("empty");
    CHECK_THROWS_WITH_AS(ingest_dataset(root), doctest::Contains("no records"), IngestError);
  }
  SUBCASE("missing file named in the manifest") {
    const auto root = temp_dir("missing");
    std::ofstream(root / "manifest.csv") << "path,block_id,perspective,lighting\n0001/c_nat.png,1,c,nat\n";
    CHECK_THROWS_WITH_AS(ingest_dataset(root), doctest::Contains("0001/c_nat.png"), IngestError);
  }
  SUBCASE("duplicate key") {
    const auto root = temp_dir("dup");
    write_png(root / "a.png", Image::constant({3, 8, 8}, 0.5f));
    std::ofstream(root / "manifest.csv") << "path,block_id,perspective,lighting\na.png,1,c,nat\na.png,1,c,nat\n";
    CHECK_THROWS_AS(ingest_dataset(root), ValidationError);
  }
  SUBCASE("undecodable image") {
    const auto root = temp_dir("bad");
    fs::create_directories(root / "0001");
    std::ofstream(root / "0001" / "c_nat.png") << "not a png";
    CHECK_THROWS_AS(ingest_dataset(root), ImageFormatError);
  }
  SUBCASE("undersized image") {
    const auto root = temp_dir("small");
    write_png(root / "0001" / "c_nat.png", Image::constant({3, 4, 4}, 0.5f));
    CHECK_THROWS_AS(ingest_dataset(root), ValidationError);
  }
}

TEST_CASE("ingest tolerates other perspectives and can filter them") {
  const auto root = temp_dir("five");
  for (const char* p : {"c", "rl", "rr", "sl", "sr"})
    write_png(root / "0003" / (std::string(p) + "_art.png"), Image::constant({3, 8, 8}, 0.25f));
  CHECK(ingest_dataset(root).size() == 5);
  const auto only = ingest_dataset(root, {.perspectives = {Perspective::C, Perspective::RL}});
  CHECK(only.size() == 2);
  const auto [c, rl] = domain_views(only);
  CHECK(c.size() == 1);
  CHECK(rl.size() == 1);
}

TEST_CASE("image-stratified split reproduces 804/200 per class") {
  const auto ds = grid_dataset(502);
  REQUIRE(ds.size() == 2008);
  const auto [train, holdout] = split_dataset(ds, {.train_fraction = 0.8, .seed = 1, .stratify_by = StratifyBy::image});
  CHECK(train.size() == 1608);
  CHECK(holdout.size() == 400);
  const auto [tc, trl] = domain_views(train);
  const auto [hc, hrl] = domain_views(holdout);
  CHECK(tc.size() == 804);
  CHECK(trl.size() == 804);
  CHECK(hc.size() == 200);
  CHECK(hrl.size() == 200);
}

TEST_CASE("block-stratified split uses floor(f*N) blocks") {
  const auto ds = grid_dataset(64);
  const auto [train, holdout] = split_dataset(ds, {.train_fraction = 0.8, .seed = 2, .stratify_by = StratifyBy::block});
  CHECK(train.n_blocks == 51);
  CHECK(train.size() == 204);
  CHECK(holdout.size() == 52);
  const auto a = train.block_ids(), b = holdout.block_ids();
  std::vector<int> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  CHECK(both.empty());
}

TEST_CASE("split fraction 1.0 is the identity; empty train is an error") {
  const auto ds = grid_dataset(3);
  const auto [train, holdout] = split_dataset(ds, {.train_fraction = 1.0, .seed = 0, .stratify_by = StratifyBy::block});
  CHECK(train.manifest_digest == ds.manifest_digest);
  CHECK(holdout.empty());
  CHECK_THROWS_AS(split_dataset(ds, {.train_fraction = 0.2, .seed = 0, .stratify_by = StratifyBy::block}), ValidationError);
  CHECK_THROWS_AS(split_dataset(ds, {.train_fraction = 0.0}), ValidationError);
  CHECK_THROWS_AS(split_dataset(PerspectiveDataset{}, {}), ValidationError);
}

TEST_CASE("split is a deterministic partition (property)") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int blocks = 1 + static_cast<int>(rng() % 30);
    std::vector<ImageRecord> recs;
    for (int b = 1; b <= blocks; ++b)
      for (auto p : {Perspective::C, Perspective::RL, Perspective::SL})
        for (auto l : {Lighting::natural, Lighting::artificial})
          if (rng() % 4 != 0) recs.push_back(tiny_record(b, p, l, 0.001f * static_cast<float>(rng() % 997)));
    if (recs.empty()) continue;
    const auto ds = make_dataset(recs);
    const SplitSpec spec{.train_fraction = 0.3 + 0.7 * static_cast<double>(rng() % 1000) / 1000.0,
                         .seed = rng(),
                         .stratify_by = rng() % 2 ? StratifyBy::block : StratifyBy::image};
    std::pair<PerspectiveDataset, PerspectiveDataset> s1, s2;
    try {
      s1 = split_dataset(ds, spec);
    } catch (const ValidationError&) {
      continue;  // empty train side
    }
    s2 = split_dataset(ds, spec);
    CHECK(s1.first.manifest_digest == s2.first.manifest_digest);
    CHECK(s1.second.manifest_digest == s2.second.manifest_digest);
    std::multiset<std::string> keys;
    for (const auto* part : {&s1.first, &s1.second})
      for (const auto& r : part->records) keys.insert(record_key(r));
    CHECK(keys.size() == ds.size());
    for (const auto& r : ds.records) CHECK(keys.count(record_key(r)) == 1);
    if (spec.stratify_by == StratifyBy::block) {
      const auto a = s1.first.block_ids(), b = s1.second.block_ids();
      std::vector<int> both;
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
      CHECK(both.empty());
    }
  }
}

TEST_CASE("split manifests are byte-identical for the same seed") {
  const auto root = temp_dir("splitcsv");
  const auto ds = grid_dataset(10);
  const SplitSpec spec{.train_fraction = 0.8, .seed = 5, .stratify_by = StratifyBy::block};
  for (const char* name : {"a.csv", "b.csv"}) {
    const auto [tr, ho] = split_dataset(ds, spec);
    write_split_manifest(root / name, tr, ho, spec);
  }
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(slurp(root / "a.csv") == slurp(root / "b.csv"));
  CHECK(slurp(root / "a.csv").rfind("path,block_id,perspective,lighting,split\n", 0) == 0);
  const auto side = nlohmann::json::parse(slurp(root / "a.csv.json"));
  CHECK(side["split"]["stratify_by"] == "block");
  CHECK(side["n_train"] == 32);
}

TEST_CASE("resize_for_gan") {
  ImageRecord r = tiny_record(1, Perspective::C, Lighting::natural);
  r.pixels = Image(3, 640, 1088);
  r.normalization = Normalization::symmetric;
  const auto out = resize_for_gan(r, 1280, 640);
  CHECK(out.pixels.width() == 1280);
  CHECK(out.pixels.height() == 640);
  CHECK(out.normalization == Normalization::symmetric);
  CHECK_THROWS_AS(resize_for_gan(r, -1, 640), ValidationError);

  ImageRecord same = tiny_record(1, Perspective::C, Lighting::natural);
  same.pixels = generate_texture(3, 1, 16, 8);
  CHECK(resize_for_gan(same, 16, 8).pixels.matrix() == same.pixels.matrix());

  // Downscale keeps the mean; the oracle is the plain mean of the source.
  ImageRecord big = tiny_record(1, Perspective::C, Lighting::natural);
  big.pixels = generate_texture(5, 9, 256, 128);
  const auto small = resize_for_gan(big, 128, 64);
  CHECK(std::abs(mean(small.pixels) - mean(big.pixels)) < 0.02);
}

TEST_CASE("domain views are disjoint, ordered, and cover C/RL") {
  const auto ds = grid_dataset(64);
  const auto [c, rl] = domain_views(ds);
  CHECK(c.size() == 128);
  CHECK(rl.size() == 128);
  for (std::size_t i = 1; i < c.size(); ++i)
    CHECK(std::tie(c[i - 1].block_id, c[i - 1].lighting) < std::tie(c[i].block_id, c[i].lighting));
  for (const auto& r : c) CHECK(r.perspective == Perspective::C);
  for (const auto& r : rl) CHECK(r.perspective == Perspective::RL);

  std::vector<ImageRecord> only_c;
  for (const auto& r : ds.records)
    if (r.perspective == Perspective::C) only_c.push_back(r);
  const auto [c2, rl2] = domain_views(make_dataset(only_c));
  CHECK(c2.size() == 128);
  CHECK(rl2.empty());
}
