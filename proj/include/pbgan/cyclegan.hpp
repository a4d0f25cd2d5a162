#pragma once

#include "pbgan/dataset.hpp"
#include "pbgan/errors.hpp"
#include "pbgan/nn/adam.hpp"
#include "pbgan/nn/losses.hpp"
#include "pbgan/nn/sequential.hpp"
#include "pbgan/util.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>

namespace pbgan {

/// Non-finite loss during training. Carries the iteration and components.
class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GanConfig {
  int epochs = 200;
  int n_residual_blocks = 9;
  double learning_rate = 0.0002;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double lambda_cycle = 10.0;
  double lambda_identity = 5.0;
  int pool_capacity = 50;
  int batch_size = 1;
  int width = 1280;
  int height = 640;
  int lr_decay_start_epoch = 100;
  std::uint64_t seed = 0;
  /// Channel width of the first generator / discriminator layer.
  int generator_filters = 64;
  int discriminator_filters = 64;
  /// Write a checkpoint every N epochs (0: final only).
  int checkpoint_interval = 0;

  void validate() const;
  /// Multiplier on learning_rate during 0-based `epoch`.
  [[nodiscard]] double lr_factor(int epoch) const;
};
void to_json(nlohmann::json& j, const GanConfig& c);
void from_json(const nlohmann::json& j, GanConfig& c);

struct LossReport {
  double adv_G = 0;
  double adv_F = 0;
  double cycle = 0;
  double identity = 0;
  double disc_RL = 0;
  double disc_C = 0;
  double total_G = 0;

  [[nodiscard]] bool finite() const;
  friend bool operator==(const LossReport&, const LossReport&) = default;
};
void to_json(nlohmann::json& j, const LossReport& r);
std::string loss_csv_header();
std::string loss_csv_row(int epoch, const LossReport& r);

// ---------------------------------------------------------------------------
// Networks

/// ResNet generator: c7s1-F, d2F, d4F, R4F x n, u2F, uF, c7s1-3, tanh.
/// F = generator_filters; instance norm throughout.
template <typename Scalar>
nn::Sequential<Scalar> build_generator(const GanConfig& cfg) {
  if (cfg.width % 4 != 0 || cfg.height % 4 != 0)
    throw ConfigError("generator dims must be divisible by 4, got " + std::to_string(cfg.width) + "x" +
                      std::to_string(cfg.height));
  if (cfg.width < 8 || cfg.height < 8) throw ConfigError("generator dims must be at least 8x8");
  using namespace nn;
  const int f = cfg.generator_filters;
  Sequential<Scalar> g;
  g.template emplace<ReflectionPad2d<Scalar>>(3);
  g.template emplace<Conv2d<Scalar>>(3, f, 7);
  g.template emplace<InstanceNorm2d<Scalar>>();
  g.template emplace<ReLU<Scalar>>();
  for (int m : {1, 2}) {
    g.template emplace<Conv2d<Scalar>>(f * m, f * m * 2, 3, 2, 1);
    g.template emplace<InstanceNorm2d<Scalar>>();
    g.template emplace<ReLU<Scalar>>();
  }
  for (int i = 0; i < cfg.n_residual_blocks; ++i) {
    Sequential<Scalar> body;
    body.template emplace<ReflectionPad2d<Scalar>>(1);
    body.template emplace<Conv2d<Scalar>>(4 * f, 4 * f, 3);
    body.template emplace<InstanceNorm2d<Scalar>>();
    body.template emplace<ReLU<Scalar>>();
    body.template emplace<ReflectionPad2d<Scalar>>(1);
    body.template emplace<Conv2d<Scalar>>(4 * f, 4 * f, 3);
    body.template emplace<InstanceNorm2d<Scalar>>();
    g.template emplace<Residual<Scalar>>(std::move(body));
  }
  for (int m : {4, 2}) {
    g.template emplace<ConvTranspose2d<Scalar>>(f * m, f * m / 2, 3, 2, 1, 1);
    g.template emplace<InstanceNorm2d<Scalar>>();
    g.template emplace<ReLU<Scalar>>();
  }
  g.template emplace<ReflectionPad2d<Scalar>>(3);
  g.template emplace<Conv2d<Scalar>>(f, 3, 7);
  g.template emplace<Tanh<Scalar>>();
  return g;
}

/// 70x70 PatchGAN: C64(s2) - C128(s2) - C256(s2) - C512(s1) - 1ch map, 4x4
/// kernels, leaky ReLU 0.2, instance norm after the first block, no sigmoid.
template <typename Scalar>
nn::Sequential<Scalar> build_discriminator(const GanConfig& cfg) {
  using namespace nn;
  const int f = cfg.discriminator_filters;
  Sequential<Scalar> d;
  d.template emplace<Conv2d<Scalar>>(3, f, 4, 2, 1);
  d.template emplace<LeakyReLU<Scalar>>(Scalar(0.2));
  int ch = f;
  for (int stride : {2, 2, 1}) {
    d.template emplace<Conv2d<Scalar>>(ch, ch * 2, 4, stride, 1);
    d.template emplace<InstanceNorm2d<Scalar>>();
    d.template emplace<LeakyReLU<Scalar>>(Scalar(0.2));
    ch *= 2;
  }
  d.template emplace<Conv2d<Scalar>>(ch, 1, 4, 1, 1);
  try {
    (void)d.output_shape({3, cfg.height, cfg.width});
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("discriminator input undersized: ") + e.what());
  }
  return d;
}

/// Patch map shape for a (width x height) input, from conv arithmetic.
Shape discriminator_output_shape(int width, int height);

// ---------------------------------------------------------------------------
// Losses

/// Least-squares adversarial loss: mean (pred - t)^2, t = 1 real / 0 fake.
template <typename Scalar>
Scalar adversarial_loss(const Tensor<Scalar>& pred_map, bool target_is_real) {
  return nn::mse_to_constant(pred_map, target_is_real ? Scalar(1) : Scalar(0)).value;
}

/// lambda * mean |original - reconstructed|
template <typename Scalar>
Scalar cycle_loss(const Tensor<Scalar>& original, const Tensor<Scalar>& reconstructed, Scalar lambda_cycle) {
  require_same_shape(original, reconstructed, "cycle_loss");
  return lambda_cycle * mean_abs_difference(original, reconstructed);
}

/// lambda * mean |original - same_domain_output|
template <typename Scalar>
Scalar identity_loss(const Tensor<Scalar>& original, const Tensor<Scalar>& same_domain_output, Scalar lambda_identity) {
  require_same_shape(original, same_domain_output, "identity_loss");
  return lambda_identity * mean_abs_difference(original, same_domain_output);
}

// ---------------------------------------------------------------------------
// History pool

/// Buffer of previously generated fakes shown to a discriminator. Below
/// capacity every fake is stored and returned; once full, each query
/// returns the fresh image with probability 0.5, otherwise swaps it for a
/// uniformly chosen stored one.
template <typename Scalar>
class ImagePool {
 public:
  ImagePool(int capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    if (capacity < 0) throw ConfigError("pool capacity must be >= 0");
  }

  Tensor<Scalar> query(const Tensor<Scalar>& fresh) {
    if (capacity_ == 0) return fresh;
    if (static_cast<int>(stored_.size()) < capacity_) {
      stored_.push_back(fresh);
      return fresh;
    }
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng_) < 0.5) return fresh;
    std::uniform_int_distribution<std::size_t> pick(0, stored_.size() - 1);
    const std::size_t slot = pick(rng_);
    Tensor<Scalar> old = std::move(stored_[slot]);
    stored_[slot] = fresh;
    return old;
  }

  [[nodiscard]] int capacity() const { return capacity_; }
  [[nodiscard]] const std::vector<Tensor<Scalar>>& stored() const { return stored_; }
  [[nodiscard]] const Rng& rng() const { return rng_; }
  void restore(std::vector<Tensor<Scalar>> stored, Rng rng) {
    if (static_cast<int>(stored.size()) > capacity_) throw ConfigError("pool restore exceeds capacity");
    stored_ = std::move(stored);
    rng_ = rng;
  }

 private:
  int capacity_;
  Rng rng_;
  std::vector<Tensor<Scalar>> stored_;
};

// ---------------------------------------------------------------------------
// Model

/// G1 = gen_c_to_rl, G2 = gen_rl_to_c, D1 = disc_rl, D2 = disc_c.
template <typename Scalar>
struct CycleGanNetworks {
  nn::Sequential<Scalar> gen_c_to_rl;
  nn::Sequential<Scalar> gen_rl_to_c;
  nn::Sequential<Scalar> disc_rl;
  nn::Sequential<Scalar> disc_c;

  static CycleGanNetworks build(const GanConfig& cfg, Rng& rng) {
    CycleGanNetworks n{build_generator<Scalar>(cfg), build_generator<Scalar>(cfg), build_discriminator<Scalar>(cfg),
                       build_discriminator<Scalar>(cfg)};
    for (auto* net : n.all()) nn::initialize(net->parameters(), nn::InitScheme::normal_002, rng);
    return n;
  }

  std::array<nn::Sequential<Scalar>*, 4> all() { return {&gen_c_to_rl, &gen_rl_to_c, &disc_rl, &disc_c}; }

  std::vector<nn::Parameter<Scalar>*> generator_parameters() {
    auto p = gen_c_to_rl.parameters();
    for (auto* q : gen_rl_to_c.parameters()) p.push_back(q);
    return p;
  }
};

template <typename Scalar>
struct GeneratorPass {
  LossReport losses;
  Tensor<Scalar> fake_rl;
  Tensor<Scalar> fake_c;
};

/// Evaluates the combined generator objective
///   adv(G1) + adv(G2) + cycle(C->RL->C) + cycle(RL->C->RL) + identity terms
/// on one (C, RL) pair. With `accumulate` set, adds scale * d(objective)
/// to the generator gradients. Discriminator gradients are polluted and
/// must be cleared before a discriminator update.
template <typename Scalar>
GeneratorPass<Scalar> generator_pass(CycleGanNetworks<Scalar>& nets, const GanConfig& cfg,
                                     const Tensor<Scalar>& real_c, const Tensor<Scalar>& real_rl, bool accumulate,
                                     Scalar scale = Scalar(1)) {
  using nn::Cache;
  Cache<Scalar> g_fwd, f_rec, f_fwd, g_rec, g_idt, f_idt, d_rl, d_c;
  const auto slot = [accumulate](Cache<Scalar>& c) { return accumulate ? &c : nullptr; };
  const auto lc = static_cast<Scalar>(cfg.lambda_cycle);
  const auto li = static_cast<Scalar>(cfg.lambda_identity);

  GeneratorPass<Scalar> out;
  out.fake_rl = nets.gen_c_to_rl.forward(real_c, slot(g_fwd));
  const Tensor<Scalar> rec_c = nets.gen_rl_to_c.forward(out.fake_rl, slot(f_rec));
  out.fake_c = nets.gen_rl_to_c.forward(real_rl, slot(f_fwd));
  const Tensor<Scalar> rec_rl = nets.gen_c_to_rl.forward(out.fake_c, slot(g_rec));

  const auto adv_g = nn::mse_to_constant(nets.disc_rl.forward(out.fake_rl, slot(d_rl)), Scalar(1));
  const auto adv_f = nn::mse_to_constant(nets.disc_c.forward(out.fake_c, slot(d_c)), Scalar(1));
  const auto cyc_c = nn::weighted_l1(rec_c, real_c, lc);
  const auto cyc_rl = nn::weighted_l1(rec_rl, real_rl, lc);

  std::optional<nn::LossGrad<Scalar>> idt_rl, idt_c;
  if (cfg.lambda_identity > 0) {
    idt_rl = nn::weighted_l1(nets.gen_c_to_rl.forward(real_rl, slot(g_idt)), real_rl, li);
    idt_c = nn::weighted_l1(nets.gen_rl_to_c.forward(real_c, slot(f_idt)), real_c, li);
  }

  auto& r = out.losses;
  r.adv_G = static_cast<double>(adv_g.value);
  r.adv_F = static_cast<double>(adv_f.value);
  r.cycle = static_cast<double>(cyc_c.value + cyc_rl.value);
  r.identity = idt_rl ? static_cast<double>(idt_rl->value + idt_c->value) : 0.0;
  r.total_G = r.adv_G + r.adv_F + r.cycle + r.identity;

  if (accumulate) {
    const auto scaled = [scale](const Tensor<Scalar>& g) { return Tensor<Scalar>(g.shape(), g.matrix() * scale); };
    Tensor<Scalar> d_fake_rl = nets.disc_rl.backward(scaled(adv_g.grad), d_rl);
    d_fake_rl.matrix() += nets.gen_rl_to_c.backward(scaled(cyc_c.grad), f_rec).matrix();
    nets.gen_c_to_rl.backward(d_fake_rl, g_fwd);

    Tensor<Scalar> d_fake_c = nets.disc_c.backward(scaled(adv_f.grad), d_c);
    d_fake_c.matrix() += nets.gen_c_to_rl.backward(scaled(cyc_rl.grad), g_rec).matrix();
    nets.gen_rl_to_c.backward(d_fake_c, f_fwd);

    if (idt_rl) {
      nets.gen_c_to_rl.backward(scaled(idt_rl->grad), g_idt);
      nets.gen_rl_to_c.backward(scaled(idt_c->grad), f_idt);
    }
  }
  return out;
}

/// 0.5 * (mse(D(real), 1) + mse(D(fake), 0)); accumulates scale * grad
/// into the discriminator. Returns the loss.
template <typename Scalar>
double discriminator_pass(nn::Sequential<Scalar>& disc, const Tensor<Scalar>& real, const Tensor<Scalar>& fake,
                          bool accumulate, Scalar scale = Scalar(1)) {
  nn::Cache<Scalar> cr, cf;
  const auto lr = nn::mse_to_constant(disc.forward(real, accumulate ? &cr : nullptr), Scalar(1), Scalar(0.5));
  const auto lf = nn::mse_to_constant(disc.forward(fake, accumulate ? &cf : nullptr), Scalar(0), Scalar(0.5));
  if (accumulate) {
    disc.backward(Tensor<Scalar>(lr.grad.shape(), lr.grad.matrix() * scale), cr);
    disc.backward(Tensor<Scalar>(lf.grad.shape(), lf.grad.matrix() * scale), cf);
  }
  return static_cast<double>(lr.value + lf.value);
}

// ---------------------------------------------------------------------------
// Training

struct OptimizerState {
  std::int64_t steps = 0;
  std::vector<Matrix<float>> first_moments;
  std::vector<Matrix<float>> second_moments;
};

struct CycleGanCheckpoint {
  GanConfig config;
  /// Completed epochs.
  int epoch = 0;
  CycleGanNetworks<float> networks;
  OptimizerState opt_generators;
  OptimizerState opt_disc_rl;
  OptimizerState opt_disc_c;
  std::vector<Image> pool_rl;
  std::vector<Image> pool_c;
  std::string pool_rl_rng;
  std::string pool_c_rng;
  std::string rng_state;
  std::vector<LossReport> history;

  void save(const std::filesystem::path& path) const;
  static CycleGanCheckpoint load(const std::filesystem::path& path);
  /// Digest of the generator weights plus config; identifies a trained model.
  [[nodiscard]] std::string digest() const;
};

struct TrainCallbacks {
  /// Called after each epoch with the epoch-averaged losses.
  std::function<void(int epoch, const LossReport&, const CycleGanCheckpoint&)> on_epoch;
  /// Called whenever a periodic checkpoint is due (see checkpoint_interval).
  std::function<void(const CycleGanCheckpoint&)> on_checkpoint;
};

/// Fresh, initialized checkpoint at epoch 0.
CycleGanCheckpoint initialize_cyclegan(const GanConfig& cfg);

/// Trains until config.epochs (continuing from `resume` when given; the
/// continued trajectory matches an uninterrupted run).
CycleGanCheckpoint train(const GanConfig& cfg, const std::vector<ImageRecord>& c_view,
                         const std::vector<ImageRecord>& rl_view, const TrainCallbacks& callbacks = {},
                         std::optional<CycleGanCheckpoint> resume = std::nullopt);

enum class Direction { C_to_RL, RL_to_C };

/// Deterministic inference. The input must already have the configured dims.
ImageRecord translate(const CycleGanCheckpoint& ckpt, const ImageRecord& img, Direction direction);

/// Mean |G2(G1(x)) - x| over C images in [-1,1] (the cycle term without lambda).
double cycle_reconstruction_error(const CycleGanCheckpoint& ckpt, const std::vector<ImageRecord>& c_images);

}  // namespace pbgan
