#include "pbgan/cyclegan.hpp"

#include "pbgan/archive.hpp"
#include "pbgan/log.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pbgan {

namespace {

constexpr std::string_view kCheckpointMagic = "PBGANCKP";

// Seed streams.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kPoolRlStream = 3;
constexpr std::uint64_t kPoolCStream = 4;

}  // namespace

void GanConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (n_residual_blocks < 0) throw ConfigError("n_residual_blocks must be >= 0");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1))
    throw ConfigError("adam betas must lie in [0, 1)");
  if (!(lambda_cycle > 0)) throw ConfigError("lambda_cycle must be > 0");
  if (!(lambda_identity >= 0)) throw ConfigError("lambda_identity must be >= 0");
  if (pool_capacity < 0) throw ConfigError("pool_capacity must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (width % 4 != 0 || height % 4 != 0 || width < 8 || height < 8)
    throw ConfigError("image dims must be divisible by 4 and at least 8, got " + std::to_string(width) + "x" +
                      std::to_string(height));
  if (lr_decay_start_epoch < 0 || lr_decay_start_epoch > epochs)
    throw ConfigError("lr_decay_start_epoch must lie in [0, epochs]");
  if (generator_filters < 1 || discriminator_filters < 1) throw ConfigError("filter counts must be >= 1");
  if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
}

double GanConfig::lr_factor(int epoch) const {
  if (epoch < lr_decay_start_epoch) return 1.0;
  const int span = epochs - lr_decay_start_epoch;
  if (span <= 0) return 1.0;
  return std::max(0.0, 1.0 - static_cast<double>(epoch - lr_decay_start_epoch) / span);
}

void to_json(nlohmann::json& j, const GanConfig& c) {
  j = {{"epochs", c.epochs},
       {"n_residual_blocks", c.n_residual_blocks},
       {"learning_rate", c.learning_rate},
       {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},
       {"lambda_cycle", c.lambda_cycle},
       {"lambda_identity", c.lambda_identity},
       {"pool_capacity", c.pool_capacity},
       {"batch_size", c.batch_size},
       {"width", c.width},
       {"height", c.height},
       {"lr_decay_start_epoch", c.lr_decay_start_epoch},
       {"seed", c.seed},
       {"generator_filters", c.generator_filters},
       {"discriminator_filters", c.discriminator_filters},
       {"checkpoint_interval", c.checkpoint_interval}};
}

void from_json(const nlohmann::json& j, GanConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.n_residual_blocks = j.value("n_residual_blocks", c.n_residual_blocks);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.lambda_cycle = j.value("lambda_cycle", c.lambda_cycle);
  c.lambda_identity = j.value("lambda_identity", c.lambda_identity);
  c.pool_capacity = j.value("pool_capacity", c.pool_capacity);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.lr_decay_start_epoch = j.value("lr_decay_start_epoch", c.lr_decay_start_epoch);
  c.seed = j.value("seed", c.seed);
  c.generator_filters = j.value("generator_filters", c.generator_filters);
  c.discriminator_filters = j.value("discriminator_filters", c.discriminator_filters);
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
}

bool LossReport::finite() const {
  for (double v : {adv_G, adv_F, cycle, identity, disc_RL, disc_C, total_G})
    if (!std::isfinite(v)) return false;
  return true;
}

void to_json(nlohmann::json& j, const LossReport& r) {
  j = {{"adv_G", r.adv_G}, {"adv_F", r.adv_F},     {"cycle", r.cycle},    {"identity", r.identity},
       {"disc_RL", r.disc_RL}, {"disc_C", r.disc_C}, {"total_G", r.total_G}};
}

static LossReport loss_report_from_json(const nlohmann::json& j) {
  return {j.at("adv_G"), j.at("adv_F"), j.at("cycle"), j.at("identity"), j.at("disc_RL"), j.at("disc_C"), j.at("total_G")};
}

std::string loss_csv_header() { return "epoch,adv_G,adv_F,cycle,identity,disc_RL,disc_C,total_G"; }

std::string loss_csv_row(int epoch, const LossReport& r) {
  std::ostringstream os;
  os.precision(9);
  os << epoch << ',' << r.adv_G << ',' << r.adv_F << ',' << r.cycle << ',' << r.identity << ',' << r.disc_RL << ','
     << r.disc_C << ',' << r.total_G;
  return os.str();
}

Shape discriminator_output_shape(int width, int height) {
  // 4x4 kernels, padding 1: three stride-2 layers then two stride-1 layers.
  const auto step = [](int n, int stride) { return (n + 2 - 4) / stride + 1; };
  for (int s : {2, 2, 2, 1, 1}) {
    width = step(width, s);
    height = step(height, s);
  }
  return {1, height, width};
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

std::vector<nn::Parameter<float>*> named(nn::Sequential<float>& net, const std::string& prefix) {
  return net.named_parameters(prefix + ".");
}

const char* const kNetNames[4] = {"gen_c_to_rl", "gen_rl_to_c", "disc_rl", "disc_c"};

void put_optimizer(TensorArchive& ar, const std::string& key, const OptimizerState& s) {
  for (std::size_t i = 0; i < s.first_moments.size(); ++i) {
    ar.put(key + "/m/" + std::to_string(i), s.first_moments[i]);
    ar.put(key + "/v/" + std::to_string(i), s.second_moments[i]);
  }
  ar.meta()["optimizers"][key] = {{"steps", s.steps}, {"count", s.first_moments.size()}};
}

OptimizerState get_optimizer(const TensorArchive& ar, const std::string& key) {
  OptimizerState s;
  const auto& m = ar.meta().at("optimizers").at(key);
  s.steps = m.at("steps");
  const std::size_t n = m.at("count");
  for (std::size_t i = 0; i < n; ++i) {
    s.first_moments.push_back(ar.matrix(key + "/m/" + std::to_string(i)));
    s.second_moments.push_back(ar.matrix(key + "/v/" + std::to_string(i)));
  }
  return s;
}

CycleGanNetworks<float> build_uninitialized(const GanConfig& cfg) {
  return {build_generator<float>(cfg), build_generator<float>(cfg), build_discriminator<float>(cfg),
          build_discriminator<float>(cfg)};
}

}  // namespace

void CycleGanCheckpoint::save(const std::filesystem::path& path) const {
  TensorArchive ar;
  ar.meta()["config"] = config;
  ar.meta()["epoch"] = epoch;
  ar.meta()["rng_state"] = rng_state;
  ar.meta()["pool_rl_rng"] = pool_rl_rng;
  ar.meta()["pool_c_rng"] = pool_c_rng;
  ar.meta()["pool_rl_size"] = pool_rl.size();
  ar.meta()["pool_c_size"] = pool_c.size();
  ar.meta()["history"] = history;
  auto nets = networks;
  auto all = nets.all();
  for (int k = 0; k < 4; ++k)
    for (auto* p : named(*all[k], kNetNames[k])) ar.put(p->name, p->value);
  put_optimizer(ar, "opt_generators", opt_generators);
  put_optimizer(ar, "opt_disc_rl", opt_disc_rl);
  put_optimizer(ar, "opt_disc_c", opt_disc_c);
  for (std::size_t i = 0; i < pool_rl.size(); ++i) ar.put("pool_rl/" + std::to_string(i), pool_rl[i]);
  for (std::size_t i = 0; i < pool_c.size(); ++i) ar.put("pool_c/" + std::to_string(i), pool_c[i]);
  ar.save(path, kCheckpointMagic);
}

CycleGanCheckpoint CycleGanCheckpoint::load(const std::filesystem::path& path) {
  const TensorArchive ar = TensorArchive::load(path, kCheckpointMagic);
  CycleGanCheckpoint ck;
  try {
    ck.config = ar.meta().at("config").get<GanConfig>();
    ck.config.validate();
    ck.epoch = ar.meta().at("epoch");
    ck.rng_state = ar.meta().at("rng_state");
    ck.pool_rl_rng = ar.meta().at("pool_rl_rng");
    ck.pool_c_rng = ar.meta().at("pool_c_rng");
    for (const auto& h : ar.meta().at("history")) ck.history.push_back(loss_report_from_json(h));
    ck.opt_generators = get_optimizer(ar, "opt_generators");
    ck.opt_disc_rl = get_optimizer(ar, "opt_disc_rl");
    ck.opt_disc_c = get_optimizer(ar, "opt_disc_c");
    const std::size_t n_rl = ar.meta().at("pool_rl_size");
    const std::size_t n_c = ar.meta().at("pool_c_size");
    for (std::size_t i = 0; i < n_rl; ++i) ck.pool_rl.push_back(ar.image("pool_rl/" + std::to_string(i)));
    for (std::size_t i = 0; i < n_c; ++i) ck.pool_c.push_back(ar.image("pool_c/" + std::to_string(i)));
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  if (ck.epoch < 0 || ck.epoch > ck.config.epochs)
    throw ArchiveError(path.string() + ": epoch " + std::to_string(ck.epoch) + " outside [0, epochs]");
  ck.networks = build_uninitialized(ck.config);
  auto all = ck.networks.all();
  for (int k = 0; k < 4; ++k)
    for (auto* p : named(*all[k], kNetNames[k])) ar.get_into(p->name, p->value);
  return ck;
}

std::string CycleGanCheckpoint::digest() const {
  Digest d;
  d.update(nlohmann::json(config).dump());
  auto nets = networks;
  for (auto* net : {&nets.gen_c_to_rl, &nets.gen_rl_to_c})
    for (auto* p : net->parameters()) d.update_array(p->value.data(), static_cast<std::size_t>(p->value.size()));
  return d.hex();
}

// ---------------------------------------------------------------------------
// Training

CycleGanCheckpoint initialize_cyclegan(const GanConfig& cfg) {
  cfg.validate();
  CycleGanCheckpoint ck;
  ck.config = cfg;
  Rng init(derive_seed(cfg.seed, kInitStream));
  ck.networks = CycleGanNetworks<float>::build(cfg, init);
  ck.rng_state = serialize_rng(Rng(derive_seed(cfg.seed, kShuffleStream)));
  ck.pool_rl_rng = serialize_rng(Rng(derive_seed(cfg.seed, kPoolRlStream)));
  ck.pool_c_rng = serialize_rng(Rng(derive_seed(cfg.seed, kPoolCStream)));
  return ck;
}

namespace {

nn::Adam<float> make_adam(std::vector<nn::Parameter<float>*> params, const GanConfig& cfg, const OptimizerState& s) {
  nn::Adam<float> opt(std::move(params), {.learning_rate = cfg.learning_rate,
                                          .beta1 = cfg.adam_beta1,
                                          .beta2 = cfg.adam_beta2,
                                          .epsilon = 1e-8});
  if (!s.first_moments.empty()) {
    if (s.first_moments.size() != opt.first_moments().size())
      throw ArchiveError("optimizer state does not match the network");
    opt.first_moments() = s.first_moments;
    opt.second_moments() = s.second_moments;
  }
  opt.set_steps(s.steps);
  return opt;
}

OptimizerState capture(const nn::Adam<float>& opt) {
  return {opt.steps(), opt.first_moments(), opt.second_moments()};
}

std::vector<Image> gan_inputs(const std::vector<ImageRecord>& view, const GanConfig& cfg, const char* what) {
  if (view.empty()) throw ConfigError(std::string(what) + " view is empty");
  std::vector<Image> out;
  out.reserve(view.size());
  for (const auto& r : view) {
    if (r.pixels.width() != cfg.width || r.pixels.height() != cfg.height || r.pixels.channels() != 3)
      throw ConfigError(std::string(what) + " image " + r.source_path + " is " + to_string(r.pixels.shape()) +
                        ", expected 3x" + std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
    out.push_back(r.pixels_as(Normalization::symmetric));
  }
  return out;
}

[[noreturn]] void diverged(int epoch, std::int64_t iteration, const LossReport& r) {
  std::ostringstream os;
  os << "non-finite loss at epoch " << epoch << " iteration " << iteration << ": " << nlohmann::json(r).dump();
  throw TrainingDivergence(os.str());
}

}  // namespace

CycleGanCheckpoint train(const GanConfig& cfg, const std::vector<ImageRecord>& c_view,
                         const std::vector<ImageRecord>& rl_view, const TrainCallbacks& callbacks,
                         std::optional<CycleGanCheckpoint> resume) {
  cfg.validate();
  const auto real_c = gan_inputs(c_view, cfg, "C");
  const auto real_rl = gan_inputs(rl_view, cfg, "RL");

  CycleGanCheckpoint ck = resume ? std::move(*resume) : initialize_cyclegan(cfg);
  if (resume) {
    nlohmann::json a = ck.config, b = cfg;
    a.erase("epochs");
    b.erase("epochs");
    a.erase("checkpoint_interval");
    b.erase("checkpoint_interval");
    if (a != b) throw ConfigError("resume checkpoint was trained with a different configuration");
    ck.config.epochs = cfg.epochs;
    ck.config.checkpoint_interval = cfg.checkpoint_interval;
    if (ck.epoch > cfg.epochs) throw ConfigError("checkpoint is already past the requested epoch count");
  }

  auto& nets = ck.networks;
  nn::Adam<float> opt_g = make_adam(nets.generator_parameters(), cfg, ck.opt_generators);
  nn::Adam<float> opt_drl = make_adam(nets.disc_rl.parameters(), cfg, ck.opt_disc_rl);
  nn::Adam<float> opt_dc = make_adam(nets.disc_c.parameters(), cfg, ck.opt_disc_c);
  ImagePool<float> pool_rl(cfg.pool_capacity, 0), pool_c(cfg.pool_capacity, 0);
  pool_rl.restore(ck.pool_rl, deserialize_rng(ck.pool_rl_rng));
  pool_c.restore(ck.pool_c, deserialize_rng(ck.pool_c_rng));
  Rng rng = deserialize_rng(ck.rng_state);

  const std::size_t n_c = real_c.size(), n_rl = real_rl.size();
  const std::size_t iterations = std::max(n_c, n_rl);
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const float scale = 1.0f / static_cast<float>(cfg.batch_size);

  for (int epoch = ck.epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate * cfg.lr_factor(epoch);
    for (auto* o : {&opt_g, &opt_drl, &opt_dc}) o->set_learning_rate(lr);

    std::vector<std::size_t> order_c(n_c), order_rl(n_rl);
    std::iota(order_c.begin(), order_c.end(), 0);
    std::iota(order_rl.begin(), order_rl.end(), 0);
    std::shuffle(order_c.begin(), order_c.end(), rng);
    std::shuffle(order_rl.begin(), order_rl.end(), rng);

    LossReport sum;
    for (std::size_t start = 0; start < iterations; start += batch) {
      const std::size_t end = std::min(iterations, start + batch);
      const float s = end - start == batch ? scale : 1.0f / static_cast<float>(end - start);
      std::vector<GeneratorPass<float>> passes;

      opt_g.zero_grad();
      for (std::size_t it = start; it < end; ++it)
        passes.push_back(generator_pass(nets, cfg, real_c[order_c[it % n_c]], real_rl[order_rl[it % n_rl]], true, s));
      opt_g.step();

      opt_drl.zero_grad();
      opt_dc.zero_grad();
      for (std::size_t it = start; it < end; ++it) {
        auto& p = passes[it - start];
        p.losses.disc_RL =
            discriminator_pass(nets.disc_rl, real_rl[order_rl[it % n_rl]], pool_rl.query(p.fake_rl), true, s);
        p.losses.disc_C = discriminator_pass(nets.disc_c, real_c[order_c[it % n_c]], pool_c.query(p.fake_c), true, s);
        if (!p.losses.finite()) diverged(epoch, static_cast<std::int64_t>(it), p.losses);
        sum.adv_G += p.losses.adv_G;
        sum.adv_F += p.losses.adv_F;
        sum.cycle += p.losses.cycle;
        sum.identity += p.losses.identity;
        sum.disc_RL += p.losses.disc_RL;
        sum.disc_C += p.losses.disc_C;
        sum.total_G += p.losses.total_G;
      }
      opt_drl.step();
      opt_dc.step();
    }

    const double n = static_cast<double>(iterations);
    LossReport avg{sum.adv_G / n, sum.adv_F / n, sum.cycle / n, sum.identity / n,
                   sum.disc_RL / n, sum.disc_C / n, sum.total_G / n};
    ck.history.push_back(avg);
    ck.epoch = epoch + 1;
    ck.opt_generators = capture(opt_g);
    ck.opt_disc_rl = capture(opt_drl);
    ck.opt_disc_c = capture(opt_dc);
    ck.pool_rl = pool_rl.stored();
    ck.pool_c = pool_c.stored();
    ck.pool_rl_rng = serialize_rng(pool_rl.rng());
    ck.pool_c_rng = serialize_rng(pool_c.rng());
    ck.rng_state = serialize_rng(rng);

    log_info("gan epoch ", ck.epoch, "/", cfg.epochs, " lr ", lr, " total_G ", avg.total_G, " cycle ", avg.cycle);
    if (callbacks.on_epoch) callbacks.on_epoch(ck.epoch, avg, ck);
    if (callbacks.on_checkpoint && cfg.checkpoint_interval > 0 && ck.epoch % cfg.checkpoint_interval == 0 &&
        ck.epoch < cfg.epochs)
      callbacks.on_checkpoint(ck);
  }
  return ck;
}

ImageRecord translate(const CycleGanCheckpoint& ckpt, const ImageRecord& img, Direction direction) {
  const auto& cfg = ckpt.config;
  if (img.pixels.channels() != 3 || img.pixels.width() != cfg.width || img.pixels.height() != cfg.height)
    throw ShapeError("translate: input is " + to_string(img.pixels.shape()) + ", model expects 3x" +
                     std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  const auto& net = direction == Direction::C_to_RL ? ckpt.networks.gen_c_to_rl : ckpt.networks.gen_rl_to_c;
  ImageRecord out;
  out.block_id = img.block_id;
  out.lighting = img.lighting;
  out.perspective = direction == Direction::C_to_RL ? Perspective::RL : Perspective::C;
  out.pixels = net.forward(img.pixels_as(Normalization::symmetric));
  out.normalization = Normalization::symmetric;
  out.source_path = img.source_path;
  out.synthetic = true;
  return out;
}

double cycle_reconstruction_error(const CycleGanCheckpoint& ckpt, const std::vector<ImageRecord>& c_images) {
  if (c_images.empty()) throw ConfigError("cycle_reconstruction_error needs at least one image");
  double total = 0;
  for (const auto& r : c_images) {
    const Image x = r.pixels_as(Normalization::symmetric);
    const Image rec = ckpt.networks.gen_rl_to_c.forward(ckpt.networks.gen_c_to_rl.forward(x));
    total += mean_abs_difference(x, rec);
  }
  return total / static_cast<double>(c_images.size());
}

}  // namespace pbgan
