#include <doctest.h>

#include "pbgan/classifier.hpp"
#include "pbgan/fixture.hpp"

#include <filesystem>

using namespace pbgan;

TEST_CASE("reference layer table") {
  const auto& t = reference_layer_table();
  REQUIRE(t.size() == 10);
  CHECK(t[7].channels == 80 * 160 * 64);
  CHECK(t[7].channels == 819200);
  CHECK(t[8].weights == 104857600);
  CHECK(t[8].weights + t[8].biases == 104857728);

  ClassifierConfig cfg;
  CHECK(classifier_shape_plan(cfg) == t);
}

TEST_CASE("symbolic shapes at full size") {
  ClassifierConfig cfg;
  const auto m = build_classifier(cfg);
  const auto trace = m.net.trace_shapes({3, 640, 1280});
  // conv relu pool x3, flatten, dense relu dense
  REQUIRE(trace.size() == 13);
  CHECK(trace[0] == Shape{16, 640, 1280});
  CHECK(trace[2] == Shape{16, 320, 640});
  CHECK(trace[3] == Shape{32, 320, 640});
  CHECK(trace[5] == Shape{32, 160, 320});
  CHECK(trace[6] == Shape{64, 160, 320});
  CHECK(trace[8] == Shape{64, 80, 160});
  CHECK(trace[9] == Shape{819200, 1, 1});
  CHECK(trace[10] == Shape{128, 1, 1});
  CHECK(trace[12] == Shape{2, 1, 1});
  auto net = m.net;
  CHECK(net[10].parameter_count() == 819200LL * 128 + 128);
}

TEST_CASE("scaled input and config errors") {
  ClassifierConfig cfg;
  cfg.width = 128;
  cfg.height = 64;
  const auto plan = classifier_shape_plan(cfg);
  CHECK(plan[6].height == 8);
  CHECK(plan[6].width == 16);
  CHECK(plan[7].channels == 8 * 16 * 64);
  const auto m = build_classifier(cfg);
  ImageRecord zero;
  zero.pixels = Image(3, 64, 128);
  const auto c = classify(m, zero);
  CHECK(std::isfinite(c.logits[0]));
  CHECK(std::isfinite(c.logits[1]));

  ClassifierConfig bad = cfg;
  bad.width = 100;
  CHECK_THROWS_AS(build_classifier(bad), ConfigError);
  bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  ImageRecord wrong;
  wrong.pixels = Image(3, 64, 120);
  CHECK_THROWS_AS(classify(m, wrong), ShapeError);
}

TEST_CASE("decision rule") {
  CHECK(decide({2.0f, -1.0f}) == Perspective::C);
  CHECK(decide({0.0f, 0.0f}) == Perspective::C);
  CHECK(decide({-1.0f, 0.5f}) == Perspective::RL);
}

TEST_CASE("evaluation report arithmetic") {
  using P = Perspective;
  const auto all = make_eval_report("holdout", {{P::C, P::C}, {P::RL, P::RL}, {P::RL, P::RL}}, 0);
  CHECK(all.accuracy == 1.0);
  const auto half = make_eval_report("x", {{P::C, P::C}, {P::C, P::RL}, {P::RL, P::RL}, {P::RL, P::C}}, 0);
  CHECK(half.accuracy == 0.5);
  CHECK(half.confusion[0][1] == 1);
  CHECK(half.confusion[1][0] == 1);
  CHECK(half.per_class.at("c") == 0.5);
  for (const auto& r : {all, half}) {
    std::int64_t total = 0;
    for (auto& row : r.confusion) total += row[0] + row[1];
    CHECK(total == r.n);
  }
  CHECK_THROWS_AS(make_eval_report("empty", {}, 0), ValidationError);
}

TEST_CASE("training on the fixture") {
  FixtureSpec f;
  f.n_blocks = 12;
  f.width = 64;
  f.height = 32;
  const auto ds = generate_fixture_dataset(f);
  SplitSpec split;
  split.train_fraction = 0.75;
  split.seed = 2;
  const auto [train, hold] = split_dataset(ds, split);

  ClassifierConfig cfg;
  cfg.width = 64;
  cfg.height = 32;
  cfg.epochs = 3;
  cfg.seed = 5;

  auto only_c = train.records;
  std::erase_if(only_c, [](const auto& r) { return r.perspective != Perspective::C; });
  auto m0 = build_classifier(cfg);
  CHECK_THROWS_AS(train_classifier(m0, only_c), ValidationError);

  auto a = build_classifier(cfg);
  auto b = build_classifier(cfg);
  const auto ha = train_classifier(a, train.records);
  const auto hb = train_classifier(b, train.records);
  REQUIRE(ha.size() == 3);
  for (std::size_t i = 0; i < ha.size(); ++i) {
    CHECK(ha[i].loss == hb[i].loss);
    CHECK(ha[i].accuracy == hb[i].accuracy);
  }
  CHECK(ha.back().loss < ha.front().loss);

  const auto ra = evaluate_classifier(a, hold.records, "holdout");
  const auto rb = evaluate_classifier(b, hold.records, "holdout");
  CHECK(ra.accuracy == rb.accuracy);
  CHECK(ra.n == static_cast<std::int64_t>(hold.size()));

  const auto sub = evaluate_classifier(a, train.records, "subset", 5, 9);
  CHECK(sub.n == 5);
  CHECK(sub.seed == 9);

  const auto path = std::filesystem::temp_directory_path() / "pbgan_test_classifier.model";
  a.save(path);
  const auto back = ClassifierModel::load(path);
  CHECK(evaluate_classifier(back, hold.records, "holdout").accuracy == ra.accuracy);
  const auto c0 = classify(a, ImageRecord{.pixels = classifier_input(hold.records[0], cfg)});
  const auto c1 = classify(back, ImageRecord{.pixels = classifier_input(hold.records[0], cfg)});
  CHECK(c0.logits == c1.logits);
  std::filesystem::remove(path);
}
