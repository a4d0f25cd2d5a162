#include "pbgan/reid.hpp"

#include "pbgan/archive.hpp"
#include "pbgan/imgproc.hpp"
#include "pbgan/log.hpp"
#include "pbgan/nn/adam.hpp"
#include "pbgan/nn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace pbgan {

namespace {

constexpr std::string_view kBackendMagic = "PBGANRID";
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kAugmentStream = 3;

}  // namespace

void to_json(nlohmann::json& j, const AugmentOptions& a) {
  j = {{"corner_jitter", a.corner_jitter}, {"sigma_min", a.sigma_min}, {"sigma_max", a.sigma_max}};
}

void from_json(const nlohmann::json& j, AugmentOptions& a) {
  a.corner_jitter = j.value("corner_jitter", a.corner_jitter);
  a.sigma_min = j.value("sigma_min", a.sigma_min);
  a.sigma_max = j.value("sigma_max", a.sigma_max);
}

Image modified_preprocess(const Image& img, Rng& rng, const AugmentOptions& opts) {
  const double w = img.width() - 1.0, h = img.height() - 1.0;
  const std::array<Eigen::Vector2d, 4> corners = {Eigen::Vector2d(0, 0), Eigen::Vector2d(w, 0), Eigen::Vector2d(w, h),
                                                  Eigen::Vector2d(0, h)};
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::array<Eigen::Vector2d, 4> moved;
  for (int i = 0; i < 4; ++i) {
    const double dx = unit(rng) * opts.corner_jitter * img.width();
    const double dy = unit(rng) * opts.corner_jitter * img.height();
    moved[i] = corners[i] + Eigen::Vector2d(dx, dy);
  }
  std::uniform_real_distribution<double> sigma(opts.sigma_min, opts.sigma_max);
  const double s = opts.sigma_max > opts.sigma_min ? sigma(rng) : opts.sigma_min;
  const Image warped = warp_perspective(img, homography_from_points(moved, corners), img.width(), img.height());
  return gaussian_blur(warped, s);
}

Image center_crop_aspect(const Image& img, double ratio) {
  if (!(ratio > 0)) throw ConfigError("crop ratio must be positive");
  const int w = img.width(), h = img.height();
  const auto nw = static_cast<int>(std::lround(h * ratio));
  const auto nh = static_cast<int>(std::lround(w / ratio));
  if (nw == w || nh == h) return img;
  if (nw < w) {
    if (nw <= 0) throw ShapeError("center_crop_aspect: zero width");
    return crop(img, (w - nw) / 2, 0, nw, h);
  }
  if (nh <= 0) throw ShapeError("center_crop_aspect: zero height");
  return crop(img, 0, (h - nh) / 2, w, nh);
}

ImageRecord center_crop_aspect(const ImageRecord& img, double ratio) {
  ImageRecord out = img;
  out.pixels = center_crop_aspect(img.pixels, ratio);
  return out;
}

std::string to_tag(Metric m) { return m == Metric::cosine ? "cosine" : "euclidean"; }

Metric parse_metric(std::string_view tag) {
  if (tag == "cosine") return Metric::cosine;
  if (tag == "euclidean") return Metric::euclidean;
  throw ConfigError("unknown metric '" + std::string(tag) + "'");
}

// ---------------------------------------------------------------------------
// Backend

void BackendConfig::validate() const {
  if (width < 8 || height < 8) throw ConfigError("backend input dims must be at least 8x8");
  if (epochs < 1) throw ConfigError("backend epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("backend batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("backend learning_rate must be > 0");
  if (parts < 1) throw ConfigError("backend parts must be >= 1");
  if (channels.empty()) throw ConfigError("backend needs at least one conv stage");
  const int shrink = 1 << channels.size();
  if (height / shrink < parts || width / shrink < 1)
    throw ConfigError("backend input " + std::to_string(width) + "x" + std::to_string(height) + " too small for " +
                      std::to_string(channels.size()) + " stages and " + std::to_string(parts) + " parts");
  if (!(augment_options.corner_jitter >= 0 && augment_options.corner_jitter < 0.5))
    throw ConfigError("corner_jitter must lie in [0, 0.5)");
  if (!(augment_options.sigma_min >= 0 && augment_options.sigma_max >= augment_options.sigma_min))
    throw ConfigError("blur sigma range must satisfy 0 <= min <= max");
}

void to_json(nlohmann::json& j, const BackendConfig& c) {
  j = {{"width", c.width},   {"height", c.height},   {"epochs", c.epochs},
       {"learning_rate", c.learning_rate},           {"batch_size", c.batch_size},
       {"parts", c.parts},   {"channels", c.channels}, {"augment", c.augment},
       {"augment_options", c.augment_options},       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, BackendConfig& c) {
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.parts = j.value("parts", c.parts);
  c.channels = j.value("channels", c.channels);
  c.augment = j.value("augment", c.augment);
  if (j.contains("augment_options")) c.augment_options = j.at("augment_options").get<AugmentOptions>();
  c.seed = j.value("seed", c.seed);
}

namespace {

nn::Sequential<float> build_trunk(const BackendConfig& cfg) {
  nn::Sequential<float> t;
  int in = 3;
  for (int out : cfg.channels) {
    t.emplace<nn::Conv2d<float>>(in, out, 3, 1, 1);
    t.emplace<nn::ReLU<float>>();
    t.emplace<nn::MaxPool2d<float>>();
    in = out;
  }
  t.emplace<nn::StripePool<float>>(cfg.parts);
  return t;
}

nn::Sequential<float> build_head(const BackendConfig& cfg, int n_ids) {
  nn::Sequential<float> h;
  h.emplace<nn::Linear<float>>(cfg.channels.back() * cfg.parts, n_ids);
  return h;
}

Image standardize(Image x) {
  const double mu = x.matrix().mean();
  const double var = (x.matrix().array() - static_cast<float>(mu)).square().mean();
  x.matrix().array() = (x.matrix().array() - static_cast<float>(mu)) / static_cast<float>(std::sqrt(var) + 1e-6);
  return x;
}

Image resized_unit(const ImageRecord& img, const BackendConfig& cfg) {
  return resize_bilinear(img.pixels_as(Normalization::unit), cfg.width, cfg.height);
}

}  // namespace

Image backend_input(const ImageRecord& img, const BackendConfig& cfg) { return standardize(resized_unit(img, cfg)); }

StripeBackend::StripeBackend(BackendConfig cfg, nn::Sequential<float> trunk, nn::Sequential<float> head,
                             int n_identities)
    : cfg_(std::move(cfg)), trunk_(std::move(trunk)), head_(std::move(head)), n_identities_(n_identities) {}

int StripeBackend::embed_dim() const { return cfg_.channels.back() * cfg_.parts; }

Vector<float> StripeBackend::embed_input(const Image& input) const {
  if (input.width() != cfg_.width || input.height() != cfg_.height || input.channels() != 3)
    throw ShapeError("embed: input is " + to_string(input.shape()) + ", backend expects 3x" +
                     std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width));
  const Image f = trunk_.forward(input);
  Vector<float> v = f.flat();
  const float n = v.norm();
  if (n > 0) v /= n;
  else v.setConstant(1.0f / std::sqrt(static_cast<float>(v.size())));
  return v;
}

Vector<float> StripeBackend::embed(const ImageRecord& img) const { return embed_input(backend_input(img, cfg_)); }

void StripeBackend::save(const std::filesystem::path& path) const {
  TensorArchive ar;
  ar.meta()["config"] = cfg_;
  ar.meta()["n_identities"] = n_identities_;
  auto t = trunk_;
  auto h = head_;
  for (auto* p : t.named_parameters("trunk.")) ar.put(p->name, p->value);
  for (auto* p : h.named_parameters("head.")) ar.put(p->name, p->value);
  ar.save(path, kBackendMagic);
}

StripeBackend StripeBackend::load(const std::filesystem::path& path) {
  const auto ar = TensorArchive::load(path, kBackendMagic);
  const auto cfg = ar.meta().at("config").get<BackendConfig>();
  cfg.validate();
  const int n_ids = ar.meta().at("n_identities");
  StripeBackend b(cfg, build_trunk(cfg), build_head(cfg, n_ids), n_ids);
  for (auto* p : b.trunk_.named_parameters("trunk.")) ar.get_into(p->name, p->value);
  for (auto* p : b.head_.named_parameters("head.")) ar.get_into(p->name, p->value);
  return b;
}

BackendTraining train_backend(const std::vector<ImageRecord>& train_set, const BackendConfig& cfg) {
  cfg.validate();
  std::map<int, int> label_of;
  for (const auto& r : train_set) label_of.emplace(r.block_id, 0);
  if (label_of.size() < 2)
    throw ValidationError("re-id backend needs at least 2 identities, got " + std::to_string(label_of.size()));
  BackendTraining out;
  for (auto& [id, label] : label_of) {
    label = static_cast<int>(out.identities.size());
    out.identities.push_back(id);
  }

  auto trunk = build_trunk(cfg);
  auto head = build_head(cfg, static_cast<int>(label_of.size()));
  Rng init(derive_seed(cfg.seed, kInitStream));
  nn::initialize(trunk.parameters(), nn::InitScheme::glorot_uniform, init);
  nn::initialize(head.parameters(), nn::InitScheme::glorot_uniform, init);
  auto params = trunk.parameters();
  for (auto* p : head.parameters()) params.push_back(p);
  nn::Adam<float> opt(params, {.learning_rate = cfg.learning_rate});

  std::vector<Image> base;
  std::vector<int> labels;
  for (const auto& r : train_set) {
    base.push_back(resized_unit(r, cfg));
    labels.push_back(label_of.at(r.block_id));
  }
  Rng shuffle_rng(derive_seed(cfg.seed, kShuffleStream));
  Rng aug_rng(derive_seed(cfg.seed, kAugmentStream));
  std::vector<std::size_t> order(base.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const float scale = 1.0f / static_cast<float>(end - start);
      opt.zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const Image x = standardize(cfg.augment ? modified_preprocess(base[i], aug_rng, cfg.augment_options) : base[i]);
        nn::Cache<float> ct, ch;
        const Image feat = trunk.forward(x, &ct);
        const Image logits = head.forward(feat, &ch);
        auto ce = nn::softmax_cross_entropy(logits, labels[i]);
        if (!std::isfinite(ce.value)) throw ModelError("non-finite re-id loss at epoch " + std::to_string(epoch));
        loss += ce.value;
        ce.grad.matrix() *= scale;
        trunk.backward(head.backward(ce.grad, ch), ct);
      }
      opt.step();
    }
    out.epoch_loss.push_back(loss / static_cast<double>(order.size()));
    log_info("re-id backend epoch ", epoch, "/", cfg.epochs, " loss ", out.epoch_loss.back());
  }
  out.backend = std::make_unique<StripeBackend>(cfg, std::move(trunk), std::move(head),
                                                static_cast<int>(out.identities.size()));
  return out;
}

Matrix<float> embed_all(const EmbeddingBackend& backend, const std::vector<ImageRecord>& images) {
  Matrix<float> m(static_cast<Eigen::Index>(images.size()), backend.embed_dim());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Vector<float> v = backend.embed(images[i]);
    if (v.size() != backend.embed_dim()) throw ShapeError("backend returned a wrong-sized embedding");
    m.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  return m;
}

Matrix<double> distance_matrix(const Matrix<float>& queries, const Matrix<float>& gallery, Metric metric) {
  if (queries.cols() != gallery.cols())
    throw ShapeError("distance_matrix: embedding dims differ (" + std::to_string(queries.cols()) + " vs " +
                     std::to_string(gallery.cols()) + ")");
  const Matrix<double> q = queries.cast<double>();
  const Matrix<double> g = gallery.cast<double>();
  if (metric == Metric::cosine) {
    const Matrix<double> qn = q.rowwise().normalized();
    const Matrix<double> gn = g.rowwise().normalized();
    return (1.0 - (qn * gn.transpose()).array()).matrix();
  }
  Matrix<double> d(q.rows(), g.rows());
  for (Eigen::Index i = 0; i < q.rows(); ++i)
    for (Eigen::Index j = 0; j < g.rows(); ++j) d(i, j) = (q.row(i) - g.row(j)).norm();
  return d;
}

CmcResult cmc_ranked_accuracy(const Matrix<double>& dist, const std::vector<int>& query_ids,
                              const std::vector<int>& gallery_ids, int max_rank) {
  if (dist.rows() != static_cast<Eigen::Index>(query_ids.size()) ||
      dist.cols() != static_cast<Eigen::Index>(gallery_ids.size()))
    throw ShapeError("cmc: distance matrix does not match the id lists");
  if (max_rank < 1 || max_rank > static_cast<int>(gallery_ids.size()))
    throw ConfigError("cmc: max_rank must lie in [1, gallery size]");
  if (query_ids.empty()) throw ValidationError("cmc: no queries");
  CmcResult r;
  std::vector<std::int64_t> hits(static_cast<std::size_t>(max_rank), 0);
  std::vector<std::size_t> order(gallery_ids.size());
  for (std::size_t q = 0; q < query_ids.size(); ++q) {
    std::iota(order.begin(), order.end(), 0);
    const auto row = dist.row(static_cast<Eigen::Index>(q));
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return row(static_cast<Eigen::Index>(a)) < row(static_cast<Eigen::Index>(b));
    });
    const auto first = std::find_if(order.begin(), order.end(), [&](std::size_t g) { return gallery_ids[g] == query_ids[q]; });
    if (first == order.end()) {
      r.absent_queries.push_back(q);
      continue;
    }
    const auto pos = static_cast<std::size_t>(first - order.begin());
    for (std::size_t k = pos; k < hits.size(); ++k) ++hits[k];
  }
  for (auto h : hits) r.ranked_accuracy.push_back(static_cast<double>(h) / static_cast<double>(query_ids.size()));
  return r;
}

// ---------------------------------------------------------------------------
// Scenarios

std::string to_tag(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::c_to_rl: return "c_to_rl";
    case ScenarioKind::c_to_synthetic_rl: return "c_to_synthetic_rl";
    case ScenarioKind::rl_to_synthetic_rl: return "rl_to_synthetic_rl";
  }
  return "?";
}

ScenarioKind parse_scenario(std::string_view tag) {
  for (auto k : {ScenarioKind::c_to_rl, ScenarioKind::c_to_synthetic_rl, ScenarioKind::rl_to_synthetic_rl})
    if (tag == to_tag(k)) return k;
  throw ConfigError("unknown re-id scenario '" + std::string(tag) + "'");
}

std::string scenario_label(const ReIdScenario& s) { return to_tag(s.kind) + (s.modified ? "_modified" : "_plain"); }

void to_json(nlohmann::json& j, const ReIdReport& r) {
  j = {{"scenario", to_tag(r.scenario.kind)},
       {"modified", r.scenario.modified},
       {"ranks", r.ranks},
       {"n_queries", r.n_queries},
       {"n_gallery", r.n_gallery},
       {"n_gallery_identities", r.n_gallery_identities},
       {"absent_query_ids", r.absent_query_ids},
       {"metric", to_tag(r.metric)},
       {"seed", r.seed},
       {"backend", r.backend},
       {"preprocessing", r.preprocessing}};
}

ReIdReport report_from_json(const nlohmann::json& j) {
  ReIdReport r;
  r.scenario.kind = parse_scenario(j.at("scenario").get<std::string>());
  r.scenario.modified = j.at("modified");
  r.ranks = j.at("ranks").get<std::vector<double>>();
  r.n_queries = j.at("n_queries");
  r.n_gallery = j.value("n_gallery", std::int64_t{0});
  r.n_gallery_identities = j.value("n_gallery_identities", std::int64_t{0});
  r.absent_query_ids = j.value("absent_query_ids", std::vector<int>{});
  r.metric = parse_metric(j.at("metric").get<std::string>());
  r.seed = j.at("seed");
  r.backend = j.value("backend", std::string{});
  r.preprocessing = j.value("preprocessing", nlohmann::json::object());
  return r;
}

std::string cmc_csv_rows(const ReIdReport& r) {
  std::ostringstream os;
  os.precision(9);
  for (std::size_t k = 0; k < r.ranks.size(); ++k) os << k + 1 << ',' << r.ranks[k] << ',' << scenario_label(r.scenario) << '\n';
  return os.str();
}

std::pair<std::vector<ImageRecord>, std::vector<ImageRecord>> scenario_sets(const ReIdScenario& sc,
                                                                            const ReIdInputs& in, double crop_ratio) {
  const auto pick = [&](Perspective p) {
    std::vector<ImageRecord> out;
    for (const auto& r : in.originals)
      if (r.perspective == p && !r.synthetic) out.push_back(r);
    return out;
  };
  std::vector<ImageRecord> synthetic;
  for (const auto& r : in.synthetic) synthetic.push_back(sc.modified ? center_crop_aspect(r, crop_ratio) : r);
  switch (sc.kind) {
    case ScenarioKind::c_to_rl: return {pick(Perspective::C), pick(Perspective::RL)};
    case ScenarioKind::c_to_synthetic_rl: return {pick(Perspective::C), synthetic};
    case ScenarioKind::rl_to_synthetic_rl: return {pick(Perspective::RL), synthetic};
  }
  return {};
}

ReIdReport run_scenario(const ReIdScenario& sc, const ReIdInputs& in, const EmbeddingBackend& backend,
                        const ReIdOptions& opts) {
  auto [queries, gallery] = scenario_sets(sc, in, opts.synthetic_crop_ratio);
  if (queries.empty()) throw ValidationError("re-id scenario " + to_tag(sc.kind) + " has no queries");
  if (gallery.empty()) throw ValidationError("re-id scenario " + to_tag(sc.kind) + " has an empty gallery");
  std::set<std::pair<std::string, bool>> gallery_keys;
  for (const auto& g : gallery) gallery_keys.emplace(record_key(g), g.synthetic);
  for (const auto& q : queries)
    if (gallery_keys.count({record_key(q), q.synthetic}))
      throw ConfigError("query image " + record_key(q) + " also appears in the gallery");

  std::vector<int> qids, gids;
  for (const auto& q : queries) qids.push_back(q.block_id);
  for (const auto& g : gallery) gids.push_back(g.block_id);
  const auto dist = distance_matrix(embed_all(backend, queries), embed_all(backend, gallery), opts.metric);
  const int max_rank = std::min<int>(opts.max_rank, static_cast<int>(gallery.size()));
  const auto cmc = cmc_ranked_accuracy(dist, qids, gids, max_rank);

  ReIdReport r;
  r.scenario = sc;
  r.ranks = cmc.ranked_accuracy;
  r.n_queries = static_cast<std::int64_t>(queries.size());
  r.n_gallery = static_cast<std::int64_t>(gallery.size());
  r.n_gallery_identities = static_cast<std::int64_t>(std::set<int>(gids.begin(), gids.end()).size());
  for (auto q : cmc.absent_queries) r.absent_query_ids.push_back(qids[q]);
  r.metric = opts.metric;
  r.seed = opts.seed;
  r.backend = backend.name();
  r.preprocessing = {{"gallery", "both lighting variants per identity"},
                     {"synthetic_crop_ratio", sc.modified && sc.kind != ScenarioKind::c_to_rl
                                                  ? nlohmann::json(opts.synthetic_crop_ratio)
                                                  : nlohmann::json(nullptr)}};
  if (const auto* sb = dynamic_cast<const StripeBackend*>(&backend)) {
    r.preprocessing["train_augmentation"] = sb->config().augment;
    if (sb->config().augment) r.preprocessing["augment_options"] = sb->config().augment_options;
  }
  return r;
}

}  // namespace pbgan
