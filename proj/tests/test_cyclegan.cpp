#include <doctest.h>

#include "pbgan/archive.hpp"
#include "pbgan/cyclegan.hpp"
#include "pbgan/fixture.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

using namespace pbgan;

namespace {

template <typename S>
Tensor<S> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<S> t(s);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(d(rng));
  return t;
}

GanConfig tiny_config() {
  GanConfig c;
  c.epochs = 2;
  c.n_residual_blocks = 1;
  c.width = 32;
  c.height = 32;
  c.generator_filters = 4;
  c.discriminator_filters = 4;
  c.pool_capacity = 3;
  c.lr_decay_start_epoch = 1;
  c.seed = 11;
  return c;
}

std::pair<std::vector<ImageRecord>, std::vector<ImageRecord>> tiny_views(int blocks = 3) {
  FixtureSpec f;
  f.n_blocks = blocks;
  f.width = 32;
  f.height = 32;
  return domain_views(generate_fixture_dataset(f));
}

double elementwise_mean_abs(const Image& a, const Image& b) {
  double s = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += std::abs(double(a.data()[i]) - double(b.data()[i]));
  return s / static_cast<double>(a.size());
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("pbgan_test_cyclegan_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("least-squares adversarial loss") {
  const Shape s{1, 5, 7};
  CHECK(adversarial_loss(Image::constant(s, 1.0f), true) == 0.0f);
  CHECK(adversarial_loss(Image::constant(s, 0.0f), true) == 1.0f);
  CHECK(adversarial_loss(Image::constant(s, 0.5f), true) == doctest::Approx(0.25));
  CHECK(adversarial_loss(Image::constant(s, 0.5f), false) == doctest::Approx(0.25));
  CHECK(adversarial_loss(Image::constant(s, 0.0f), false) == 0.0f);
}

TEST_CASE("cycle and identity losses") {
  const Shape s{3, 6, 8};
  const Image a = random_tensor<float>(s, 1);
  CHECK(cycle_loss(a, a, 10.0f) == 0.0f);
  CHECK(identity_loss(a, a, 5.0f) == 0.0f);

  Image b = a;
  b.matrix().array() += 0.1f;
  CHECK(cycle_loss(a, b, 10.0f) == doctest::Approx(1.0).epsilon(1e-5));
  Image c = a;
  c.matrix().array() -= 0.2f;
  CHECK(identity_loss(a, c, 5.0f) == doctest::Approx(1.0).epsilon(1e-5));

  const Image r = random_tensor<float>(s, 2);
  CHECK(cycle_loss(a, r, 10.0f) == doctest::Approx(10.0 * elementwise_mean_abs(a, r)).epsilon(1e-5));
  CHECK(identity_loss(a, r, 5.0f) == doctest::Approx(5.0 * elementwise_mean_abs(a, r)).epsilon(1e-5));
  CHECK_THROWS_AS((void)cycle_loss(a, Image(3, 6, 7), 10.0f), ShapeError);
  CHECK_THROWS_AS((void)identity_loss(a, Image(2, 6, 8), 5.0f), ShapeError);
}

TEST_CASE("image pool") {
  const Shape s{3, 2, 2};
  SUBCASE("below capacity stores and returns fresh") {
    ImagePool<float> pool(50, 1);
    const Image x = random_tensor<float>(s, 3);
    CHECK(pool.query(x).matrix() == x.matrix());
    CHECK(pool.stored().size() == 1);
  }
  SUBCASE("capacity zero passes through") {
    ImagePool<float> pool(0, 1);
    for (int i = 0; i < 10; ++i) {
      const Image x = random_tensor<float>(s, 10 + i);
      CHECK(pool.query(x).matrix() == x.matrix());
    }
    CHECK(pool.stored().empty());
  }
  SUBCASE("swap frequency on a full pool") {
    ImagePool<float> pool(50, 42);
    for (int i = 0; i < 50; ++i) pool.query(Image::constant(s, static_cast<float>(-i - 1)));
    int swaps = 0;
    for (int i = 0; i < 1000; ++i) {
      const Image fresh = Image::constant(s, static_cast<float>(i));
      const Image got = pool.query(fresh);
      if (got(0, 0, 0) != fresh(0, 0, 0)) ++swaps;
      CHECK(pool.stored().size() == 50);
    }
    CHECK(swaps / 1000.0 == doctest::Approx(0.5).epsilon(0.1));
  }
  SUBCASE("deterministic given the seed") {
    ImagePool<float> a(4, 9), b(4, 9);
    for (int i = 0; i < 40; ++i) {
      const Image x = Image::constant(s, static_cast<float>(i));
      CHECK(a.query(x)(0, 0, 0) == b.query(x)(0, 0, 0));
    }
  }
  CHECK_THROWS_AS(ImagePool<float>(-1, 0), ConfigError);
}

TEST_CASE("generator is shape preserving and bounded") {
  GanConfig cfg = tiny_config();
  for (auto [w, h] : {std::pair{32, 32}, {40, 24}, {64, 16}, {128, 64}}) {
    cfg.width = w;
    cfg.height = h;
    auto g = build_generator<float>(cfg);
    Rng rng(5);
    nn::initialize(g.parameters(), nn::InitScheme::normal_002, rng);
    const Image x = random_tensor<float>({3, h, w}, 7);
    const Image y = g.forward(x);
    CHECK(y.shape() == x.shape());
    CHECK(y.matrix().maxCoeff() <= 1.0f);
    CHECK(y.matrix().minCoeff() >= -1.0f);
    CHECK(all_finite(y));
  }
  cfg.width = 30;
  CHECK_THROWS_AS(build_generator<float>(cfg), ConfigError);
}

TEST_CASE("generator layout at default width") {
  GanConfig cfg;
  auto g = build_generator<float>(cfg);
  const auto trace = g.trace_shapes({3, 640, 1280});
  CHECK(trace.back() == Shape{3, 640, 1280});
  int residual = 0;
  std::int64_t block_params = -1;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i].kind() != "Residual") continue;
    ++residual;
    const auto n = g[i].parameter_count();
    if (block_params < 0) block_params = n;
    CHECK(n == block_params);
    CHECK(trace[i] == Shape{256, 160, 320});
  }
  CHECK(residual == 9);
  // Two 3x3 convs at 256 channels with biases.
  CHECK(block_params == 2 * (256 * 256 * 9 + 256));
}

TEST_CASE("discriminator patch map dims") {
  GanConfig cfg;
  // Exact conv arithmetic: 4x4 kernels, pad 1; strides 2, 2, 2, 1, 1.
  int w = 1280, h = 640;
  for (int s : {2, 2, 2}) {
    w = (w + 2 - 4) / s + 1;
    h = (h + 2 - 4) / s + 1;
  }
  w -= 2;
  h -= 2;
  CHECK(w == 158);
  CHECK(h == 78);
  CHECK(discriminator_output_shape(1280, 640) == Shape{1, h, w});
  const auto d = build_discriminator<float>(cfg);
  CHECK(d.output_shape({3, 640, 1280}) == discriminator_output_shape(1280, 640));

  cfg.width = 128;
  cfg.height = 64;
  CHECK(build_discriminator<float>(cfg).output_shape({3, 64, 128}) == Shape{1, 6, 14});
  cfg.width = 16;
  cfg.height = 16;
  CHECK_THROWS_AS(build_discriminator<float>(cfg), ConfigError);
}

TEST_CASE("discriminator responds to its input") {
  GanConfig cfg = tiny_config();
  cfg.width = 128;
  cfg.height = 64;
  auto d = build_discriminator<float>(cfg);
  Rng rng(3);
  nn::initialize(d.parameters(), nn::InitScheme::normal_002, rng);
  CHECK(all_finite(d.forward(Image(3, 64, 128))));
  FixtureSpec f;
  f.n_blocks = 2;
  const auto [c, rl] = domain_views(generate_fixture_dataset(f));
  const Image a = d.forward(c[0].pixels_as(Normalization::symmetric));
  const Image b = d.forward(c[2].pixels_as(Normalization::symmetric));
  CHECK((a.matrix() - b.matrix()).cwiseAbs().maxCoeff() > 0.0f);
}

TEST_CASE("combined generator objective gradient") {
  GanConfig cfg = tiny_config();
  cfg.generator_filters = 2;
  cfg.discriminator_filters = 2;
  Rng rng(17);
  auto nets = CycleGanNetworks<double>::build(cfg, rng);
  const auto real_c = random_tensor<double>({3, 32, 32}, 21);
  const auto real_rl = random_tensor<double>({3, 32, 32}, 22);
  const auto objective = [&] { return generator_pass(nets, cfg, real_c, real_rl, false).losses.total_G; };

  for (auto* net : nets.all()) net->zero_grad();
  const double before = generator_pass(nets, cfg, real_c, real_rl, true).losses.total_G;
  CHECK(before == doctest::Approx(objective()).epsilon(1e-12));

  SUBCASE("finite differences") {
    auto params = nets.gen_c_to_rl.named_parameters("G.");
    for (auto* p : nets.gen_rl_to_c.named_parameters("F.")) params.push_back(p);
    std::mt19937_64 pick(5);
    for (int k = 0; k < 8; ++k) {
      auto* p = params[pick() % params.size()];
      const Eigen::Index i = static_cast<Eigen::Index>(pick() % static_cast<std::uint64_t>(p->value.size()));
      const double orig = p->value.data()[i];
      // The objective is piecewise smooth (ReLU, L1); larger steps straddle kinks.
      const double h = 1e-6;
      p->value.data()[i] = orig + h;
      const double lp = objective();
      p->value.data()[i] = orig - h;
      const double lm = objective();
      p->value.data()[i] = orig;
      const double fd = (lp - lm) / (2 * h);
      const double an = p->grad.data()[i];
      const double rel = std::abs(fd - an) / std::max(1e-6, std::max(std::abs(fd), std::abs(an)));
      CAPTURE(p->name);
      CAPTURE(fd);
      CAPTURE(an);
      CHECK(rel < 1e-2);
    }
  }
  SUBCASE("small step decreases the objective") {
    for (auto* p : nets.generator_parameters()) p->value -= 1e-4 * p->grad;
    CHECK(objective() < before);
  }
}

TEST_CASE("config validation and schedule") {
  GanConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.lambda_identity == doctest::Approx(0.5 * cfg.lambda_cycle));
  CHECK(cfg.lr_factor(0) == 1.0);
  CHECK(cfg.lr_factor(99) == 1.0);
  CHECK(cfg.lr_factor(100) == 1.0);
  CHECK(cfg.lr_factor(150) == doctest::Approx(0.5));
  CHECK(cfg.lr_factor(199) == doctest::Approx(0.01));

  for (auto mutate : std::vector<std::function<void(GanConfig&)>>{
           [](GanConfig& c) { c.epochs = 0; }, [](GanConfig& c) { c.pool_capacity = -1; },
           [](GanConfig& c) { c.lambda_cycle = 0; }, [](GanConfig& c) { c.width = 1282; },
           [](GanConfig& c) { c.height = 642; }}) {
    GanConfig bad;
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
  const nlohmann::json j = tiny_config();
  const auto back = j.get<GanConfig>();
  CHECK(nlohmann::json(back) == j);
  CHECK(loss_csv_header() == "epoch,adv_G,adv_F,cycle,identity,disc_RL,disc_C,total_G");
}

TEST_CASE("training is deterministic and resumable") {
  const GanConfig cfg = tiny_config();
  const auto [c, rl] = tiny_views();

  std::vector<LossReport> streamed;
  TrainCallbacks cb;
  cb.on_epoch = [&](int, const LossReport& r, const CycleGanCheckpoint&) { streamed.push_back(r); };
  const auto a = train(cfg, c, rl, cb);
  const auto b = train(cfg, c, rl);
  REQUIRE(a.history.size() == 2);
  CHECK(streamed == a.history);
  CHECK(a.history == b.history);
  CHECK(a.digest() == b.digest());
  for (const auto& r : a.history) {
    CHECK(r.finite());
    CHECK(r.cycle >= 0);
    CHECK(r.identity >= 0);
  }
  CHECK(a.opt_generators.steps == 2 * 6);

  GanConfig first = cfg;
  first.epochs = 1;
  const auto half = train(first, c, rl);
  const auto dir = scratch("resume");
  half.save(dir / "half.ckpt");
  auto loaded = CycleGanCheckpoint::load(dir / "half.ckpt");
  CHECK(loaded.epoch == 1);
  CHECK(loaded.digest() == half.digest());
  const auto resumed = train(cfg, c, rl, {}, std::move(loaded));
  CHECK(resumed.history == a.history);
  CHECK(resumed.digest() == a.digest());
  std::filesystem::remove_all(dir);
}

TEST_CASE("training input errors") {
  const GanConfig cfg = tiny_config();
  const auto [c, rl] = tiny_views(1);
  CHECK_THROWS_AS(train(cfg, {}, rl), ConfigError);
  CHECK_THROWS_AS(train(cfg, c, {}), ConfigError);
  GanConfig other = cfg;
  other.width = 64;
  CHECK_THROWS_AS(train(other, c, rl), ConfigError);

  GanConfig exploding = cfg;
  exploding.learning_rate = 1e30;
  exploding.epochs = 3;
  exploding.lr_decay_start_epoch = 3;
  CHECK_THROWS_AS(train(exploding, c, rl), TrainingDivergence);
}

TEST_CASE("checkpoint file") {
  const GanConfig cfg = tiny_config();
  const auto ck = initialize_cyclegan(cfg);
  const auto dir = scratch("ckpt");
  ck.save(dir / "a.ckpt");
  const auto back = CycleGanCheckpoint::load(dir / "a.ckpt");
  CHECK(back.digest() == ck.digest());
  CHECK(nlohmann::json(back.config) == nlohmann::json(cfg));
  CHECK(back.rng_state == ck.rng_state);

  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  CHECK_THROWS_AS(CycleGanCheckpoint::load(dir / "junk.ckpt"), ArchiveError);
  CHECK_THROWS_AS(CycleGanCheckpoint::load(dir / "missing.ckpt"), ArchiveError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("translate") {
  const GanConfig cfg = tiny_config();
  const auto ck = initialize_cyclegan(cfg);
  const auto [c, rl] = tiny_views(1);
  const auto t1 = translate(ck, c[0], Direction::C_to_RL);
  const auto t2 = translate(ck, c[0], Direction::C_to_RL);
  CHECK(t1.pixels.matrix() == t2.pixels.matrix());
  CHECK(t1.pixels.shape() == c[0].pixels.shape());
  CHECK(t1.perspective == Perspective::RL);
  CHECK(t1.synthetic);
  CHECK(t1.block_id == c[0].block_id);
  CHECK(t1.normalization == Normalization::symmetric);
  CHECK(t1.pixels.matrix().cwiseAbs().maxCoeff() <= 1.0f);
  CHECK(translate(ck, rl[0], Direction::RL_to_C).perspective == Perspective::C);

  ImageRecord wrong = c[0];
  wrong.pixels = Image(3, 32, 36);
  CHECK_THROWS_AS(translate(ck, wrong, Direction::C_to_RL), ShapeError);
  CHECK(cycle_reconstruction_error(ck, c) > 0);
}
