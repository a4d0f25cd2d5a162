#include "pbgan/classifier.hpp"

#include "pbgan/archive.hpp"
#include "pbgan/log.hpp"
#include "pbgan/nn/adam.hpp"
#include "pbgan/nn/losses.hpp"
#include "pbgan/util.hpp"

#include <algorithm>
#include <numeric>

namespace pbgan {

namespace {

constexpr std::string_view kModelMagic = "PBGANCLS";
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kSubsetStream = 3;

}  // namespace

void ClassifierConfig::validate() const {
  if (width < 8 || height < 8 || width % 8 != 0 || height % 8 != 0)
    throw ConfigError("classifier input dims must be positive multiples of 8, got " + std::to_string(width) + "x" +
                      std::to_string(height));
  if (epochs < 1) throw ConfigError("classifier epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("classifier batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("classifier learning_rate must be > 0");
}

void to_json(nlohmann::json& j, const ClassifierConfig& c) {
  j = {{"width", c.width},   {"height", c.height},         {"epochs", c.epochs},
       {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ClassifierConfig& c) {
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
}

const std::vector<LayerPlan>& reference_layer_table() {
  static const std::vector<LayerPlan> table = {
      {"Input", 640, 1280, 3, 0, 0},
      {"Conv2D", 640, 1280, 16, 3 * 3 * 3 * 16, 16},
      {"MaxPooling2D", 320, 640, 16, 0, 0},
      {"Conv2D", 320, 640, 32, 3 * 3 * 16 * 32, 32},
      {"MaxPooling2D", 160, 320, 32, 0, 0},
      {"Conv2D", 160, 320, 64, 3 * 3 * 32 * 64, 64},
      {"MaxPooling2D", 80, 160, 64, 0, 0},
      {"Flatten", 1, 1, 819200, 0, 0},
      {"Dense", 1, 1, 128, 819200LL * 128, 128},
      {"Dense", 1, 1, 2, 128 * 2, 2},
  };
  return table;
}

namespace {

// Conv / ReLU / pool x3 and flatten; returns the index of the layer that
// produces each table row from the first Conv2D through Flatten.
std::vector<std::size_t> append_feature_stages(nn::Sequential<float>& net) {
  std::vector<std::size_t> rows;
  int in = 3;
  for (int out : {16, 32, 64}) {
    net.emplace<nn::Conv2d<float>>(in, out, 3, 1, 1);
    rows.push_back(net.size() - 1);
    net.emplace<nn::ReLU<float>>();
    net.emplace<nn::MaxPool2d<float>>();
    rows.push_back(net.size() - 1);
    in = out;
  }
  net.emplace<nn::Flatten<float>>();
  rows.push_back(net.size() - 1);
  return rows;
}

}  // namespace

std::vector<LayerPlan> classifier_shape_plan(const ClassifierConfig& cfg) {
  cfg.validate();
  // The feature stages are small; tracing them runs the same shape rules as
  // the trained network without allocating the dense layers.
  nn::Sequential<float> features;
  const auto rows = append_feature_stages(features);
  const auto trace = features.trace_shapes({3, cfg.height, cfg.width});
  std::vector<LayerPlan> plan;
  plan.push_back({"Input", cfg.height, cfg.width, 3, 0, 0});
  for (std::size_t r = 0; r + 1 < rows.size(); ++r) {
    const Shape s = trace[rows[r]];
    auto& layer = features[rows[r]];
    std::int64_t weights = 0, biases = 0;
    for (auto* p : layer.parameters()) (p->role == nn::ParamRole::weight ? weights : biases) += p->count();
    plan.push_back({r % 2 == 0 ? "Conv2D" : "MaxPooling2D", s.height, s.width, s.channels, weights, biases});
  }
  const std::int64_t flat = trace[rows.back()].size();
  plan.push_back({"Flatten", 1, 1, static_cast<int>(flat), 0, 0});
  plan.push_back({"Dense", 1, 1, 128, flat * 128, 128});
  plan.push_back({"Dense", 1, 1, 2, 128 * 2, 2});
  return plan;
}

ClassifierModel build_classifier(const ClassifierConfig& cfg) {
  const auto plan = classifier_shape_plan(cfg);
  using namespace nn;
  ClassifierModel m{cfg, {}};
  auto& net = m.net;
  // Layer index in `net` of each table row after the input row.
  std::vector<std::size_t> row_layer = append_feature_stages(net);
  const int flat = plan[7].channels;
  net.emplace<Linear<float>>(flat, 128);
  row_layer.push_back(net.size() - 1);
  net.emplace<ReLU<float>>();
  net.emplace<Linear<float>>(128, 2);
  row_layer.push_back(net.size() - 1);

  const auto trace = net.trace_shapes({3, cfg.height, cfg.width});
  for (std::size_t r = 1; r < plan.size(); ++r) {
    const auto& want = plan[r];
    const std::size_t li = row_layer[r - 1];
    const Shape got = trace[li];
    const bool spatial = want.layer == "Conv2D" || want.layer == "MaxPooling2D";
    const Shape expected = spatial ? Shape{want.channels, want.height, want.width} : Shape{want.channels, 1, 1};
    auto params = net[li].parameters();
    std::int64_t weights = 0, biases = 0;
    for (auto* p : params) (p->role == ParamRole::weight ? weights : biases) += p->count();
    if (!(got == expected) || weights != want.weights || biases != want.biases)
      throw ModelError("layer " + std::to_string(r) + " (" + want.layer + ") yields " + to_string(got) + " with " +
                       std::to_string(weights) + "+" + std::to_string(biases) + " params, expected " +
                       to_string(expected) + " with " + std::to_string(want.weights) + "+" +
                       std::to_string(want.biases));
  }

  Rng rng(derive_seed(cfg.seed, kInitStream));
  initialize(net.parameters(), InitScheme::glorot_uniform, rng);
  return m;
}

void ClassifierModel::save(const std::filesystem::path& path) const {
  TensorArchive ar;
  ar.meta()["config"] = config;
  auto copy = net;
  for (auto* p : copy.named_parameters()) ar.put(p->name, p->value);
  ar.save(path, kModelMagic);
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& path) {
  const auto ar = TensorArchive::load(path, kModelMagic);
  ClassifierModel m = build_classifier(ar.meta().at("config").get<ClassifierConfig>());
  for (auto* p : m.net.named_parameters()) ar.get_into(p->name, p->value);
  return m;
}

Image classifier_input(const ImageRecord& img, const ClassifierConfig& cfg) {
  if (img.pixels.width() == cfg.width && img.pixels.height() == cfg.height) return img.pixels_as(Normalization::unit);
  return resize_for_gan(img, cfg.width, cfg.height).pixels_as(Normalization::unit);
}

std::vector<EpochStats> train_classifier(ClassifierModel& model, const std::vector<ImageRecord>& train_set) {
  const auto& cfg = model.config;
  cfg.validate();
  std::vector<Image> inputs;
  std::vector<int> labels;
  for (const auto& r : train_set) {
    if (r.perspective != Perspective::C && r.perspective != Perspective::RL) continue;
    inputs.push_back(classifier_input(r, cfg));
    labels.push_back(class_index(r.perspective));
  }
  const auto n_rl = std::count(labels.begin(), labels.end(), 1);
  if (n_rl == 0 || n_rl == static_cast<std::ptrdiff_t>(labels.size()))
    throw ValidationError("classifier training set must contain both C and RL images");

  nn::Adam<float> opt(model.net.parameters(), {.learning_rate = cfg.learning_rate, .epsilon = 1e-7});
  Rng rng(derive_seed(cfg.seed, kShuffleStream));
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochStats> history;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss = 0;
    std::int64_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const float scale = 1.0f / static_cast<float>(end - start);
      opt.zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        nn::Cache<float> cache;
        const auto logits = model.net.forward(inputs[i], &cache);
        auto ce = nn::softmax_cross_entropy(logits, labels[i]);
        if (!std::isfinite(ce.value)) throw ModelError("non-finite classifier loss at epoch " + std::to_string(epoch));
        loss += ce.value;
        const Eigen::Vector2f z(logits.data()[0], logits.data()[1]);
        if (class_index(decide(z)) == labels[i]) ++correct;
        ce.grad.matrix() *= scale;
        model.net.backward(ce.grad, cache);
      }
      opt.step();
    }
    const double n = static_cast<double>(order.size());
    history.push_back({epoch, loss / n, static_cast<double>(correct) / n});
    log_info("classifier epoch ", epoch, "/", cfg.epochs, " loss ", loss / n, " train accuracy ", correct / n);
  }
  return history;
}

Perspective decide(const Eigen::Vector2f& logits) {
  return logits[1] > logits[0] ? Perspective::RL : Perspective::C;
}

Classification classify(const ClassifierModel& model, const ImageRecord& img) {
  if (img.pixels.width() != model.config.width || img.pixels.height() != model.config.height ||
      img.pixels.channels() != 3)
    throw ShapeError("classify: image is " + to_string(img.pixels.shape()) + ", model expects 3x" +
                     std::to_string(model.config.height) + "x" + std::to_string(model.config.width));
  const auto logits = model.net.forward(img.pixels_as(Normalization::unit));
  Classification c;
  c.logits = {logits.data()[0], logits.data()[1]};
  c.label = decide(c.logits);
  return c;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"set", r.set},
       {"n", r.n},
       {"accuracy", r.accuracy},
       {"per_class", r.per_class},
       {"confusion", {{"labels", {"c", "rl"}}, {"counts", r.confusion}}},
       {"seed", r.seed}};
}

EvalReport make_eval_report(std::string set, const std::vector<std::pair<Perspective, Perspective>>& outcomes,
                            std::uint64_t seed) {
  if (outcomes.empty()) throw ValidationError("evaluation set '" + set + "' is empty");
  EvalReport r;
  r.set = std::move(set);
  r.seed = seed;
  r.n = static_cast<std::int64_t>(outcomes.size());
  std::int64_t correct = 0;
  for (const auto& [truth, pred] : outcomes) {
    ++r.confusion[class_index(truth)][class_index(pred)];
    if (truth == pred) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
  for (int c = 0; c < 2; ++c) {
    const auto row = r.confusion[c][0] + r.confusion[c][1];
    if (row > 0) r.per_class[to_tag(class_perspective(c))] = static_cast<double>(r.confusion[c][c]) / row;
  }
  return r;
}

EvalReport evaluate_classifier(const ClassifierModel& model, const std::vector<ImageRecord>& eval_set,
                               std::string set_name, std::optional<std::size_t> subset, std::uint64_t seed) {
  if (eval_set.empty()) throw ValidationError("evaluation set '" + set_name + "' is empty");
  std::vector<std::size_t> idx(eval_set.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (subset && *subset < idx.size()) {
    Rng rng(derive_seed(seed, kSubsetStream));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(*subset);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<std::pair<Perspective, Perspective>> outcomes;
  for (auto i : idx) {
    const auto& rec = eval_set[i];
    if (rec.perspective != Perspective::C && rec.perspective != Perspective::RL)
      throw ValidationError("classifier evaluates only C/RL records, got " + record_key(rec));
    ImageRecord in = rec;
    in.pixels = classifier_input(rec, model.config);
    in.normalization = Normalization::unit;
    outcomes.emplace_back(rec.perspective, classify(model, in).label);
  }
  return make_eval_report(std::move(set_name), outcomes, seed);
}

}  // namespace pbgan
