#pragma once

#include "pbgan/dataset.hpp"
#include "pbgan/errors.hpp"
#include "pbgan/nn/sequential.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace pbgan {

struct ClassifierConfig {
  int width = 1280;
  int height = 640;
  int epochs = 20;
  double learning_rate = 0.001;
  int batch_size = 8;
  std::uint64_t seed = 0;

  /// dims divisible by 8 (three 2x2 pools), epochs >= 1, batch >= 1.
  void validate() const;
};
void to_json(nlohmann::json& j, const ClassifierConfig& c);
void from_json(const nlohmann::json& j, ClassifierConfig& c);

/// One row of the layer table: output shape as (height, width, channels).
struct LayerPlan {
  std::string layer;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::int64_t weights = 0;
  std::int64_t biases = 0;

  friend bool operator==(const LayerPlan&, const LayerPlan&) = default;
};

/// Reference table at 640x1280x3: conv 16/32/64 (3x3, same, ReLU) each
/// followed by a 2x2 max pool, flatten (819,200), dense 128, dense 2.
const std::vector<LayerPlan>& reference_layer_table();

/// Expected table for the configured input: the reference rows scaled to
/// (height, width), computed without building a network.
std::vector<LayerPlan> classifier_shape_plan(const ClassifierConfig& cfg);

/// Class index order is fixed: 0 = C, 1 = RL.
constexpr int class_index(Perspective p) { return p == Perspective::RL ? 1 : 0; }
constexpr Perspective class_perspective(int i) { return i == 1 ? Perspective::RL : Perspective::C; }

struct ClassifierModel {
  ClassifierConfig config;
  nn::Sequential<float> net;

  void save(const std::filesystem::path& path) const;
  static ClassifierModel load(const std::filesystem::path& path);
};

/// Builds the network and checks every traced shape against
/// classifier_shape_plan; a mismatch raises ModelError naming the layer.
/// Glorot-uniform weights, zero biases.
ClassifierModel build_classifier(const ClassifierConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double loss = 0;
  double accuracy = 0;
};

/// Mini-batch Adam on softmax cross-entropy. Only C and RL records are
/// used; both must be present. Records are resized to the model input.
std::vector<EpochStats> train_classifier(ClassifierModel& model, const std::vector<ImageRecord>& train_set);

struct Classification {
  Perspective label = Perspective::C;
  Eigen::Vector2f logits = Eigen::Vector2f::Zero();
};

/// argmax over logits; ties go to C.
Perspective decide(const Eigen::Vector2f& logits);

/// Image must already have the model dims.
Classification classify(const ClassifierModel& model, const ImageRecord& img);

struct EvalReport {
  std::string set;
  std::int64_t n = 0;
  double accuracy = 0;
  /// Keyed by perspective tag.
  std::map<std::string, double> per_class;
  /// confusion[true][predicted], class order C, RL.
  std::array<std::array<std::int64_t, 2>, 2> confusion{};
  std::uint64_t seed = 0;
};
void to_json(nlohmann::json& j, const EvalReport& r);

/// Builds a report from (true, predicted) pairs.
EvalReport make_eval_report(std::string set, const std::vector<std::pair<Perspective, Perspective>>& outcomes,
                            std::uint64_t seed);

/// Scores the records (resized to the model input). With `subset` set and
/// smaller than the record count, a uniformly random subset of that size
/// is drawn with `seed`.
EvalReport evaluate_classifier(const ClassifierModel& model, const std::vector<ImageRecord>& eval_set,
                               std::string set_name, std::optional<std::size_t> subset = std::nullopt,
                               std::uint64_t seed = 0);

/// Model input: resized to (width, height), [0,1] range.
Image classifier_input(const ImageRecord& img, const ClassifierConfig& cfg);

}  // namespace pbgan
