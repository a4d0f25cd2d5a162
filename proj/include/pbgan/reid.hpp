#pragma once

#include "pbgan/dataset.hpp"
#include "pbgan/errors.hpp"
#include "pbgan/nn/sequential.hpp"
#include "pbgan/util.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>

namespace pbgan {

// ---------------------------------------------------------------------------
// Preprocessing

struct AugmentOptions {
  /// Each corner moves independently by up to this fraction of width/height.
  double corner_jitter = 0.05;
  double sigma_min = 0.5;
  double sigma_max = 1.5;
};
void to_json(nlohmann::json& j, const AugmentOptions& a);
void from_json(const nlohmann::json& j, AugmentOptions& a);

/// Random projective warp followed by a Gaussian blur; deterministic in rng.
Image modified_preprocess(const Image& img, Rng& rng, const AugmentOptions& opts = {});

/// Centre crop to width/height = ratio (width rounded, left margin gets the
/// smaller half of an odd remainder). Throws ShapeError on a zero dim.
Image center_crop_aspect(const Image& img, double ratio);
ImageRecord center_crop_aspect(const ImageRecord& img, double ratio);

// ---------------------------------------------------------------------------
// Embeddings

enum class Metric { cosine, euclidean };
std::string to_tag(Metric m);
Metric parse_metric(std::string_view tag);

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual int embed_dim() const = 0;
  /// L2-normalized feature vector.
  [[nodiscard]] virtual Vector<float> embed(const ImageRecord& img) const = 0;
};

struct BackendConfig {
  int width = 128;
  int height = 64;
  int epochs = 20;
  double learning_rate = 0.001;
  int batch_size = 8;
  int parts = 4;
  std::vector<int> channels = {16, 32, 64};
  /// Apply modified_preprocess to training images.
  bool augment = false;
  AugmentOptions augment_options;
  std::uint64_t seed = 0;

  void validate() const;
};
void to_json(nlohmann::json& j, const BackendConfig& c);
void from_json(const nlohmann::json& j, BackendConfig& c);

/// Conv trunk (3x3 conv, ReLU, 2x2 pool per stage) with horizontal stripe
/// pooling into `parts` parts. Inputs are resized to (width, height) and
/// standardized per image. Trained with an identity softmax head.
class StripeBackend : public EmbeddingBackend {
 public:
  StripeBackend(BackendConfig cfg, nn::Sequential<float> trunk, nn::Sequential<float> head, int n_identities);

  [[nodiscard]] std::string name() const override { return "stripe_cnn_p" + std::to_string(cfg_.parts); }
  [[nodiscard]] int embed_dim() const override;
  [[nodiscard]] Vector<float> embed(const ImageRecord& img) const override;
  /// Embedding of an already prepared input tensor; dims must match.
  [[nodiscard]] Vector<float> embed_input(const Image& input) const;

  [[nodiscard]] const BackendConfig& config() const { return cfg_; }
  [[nodiscard]] int n_identities() const { return n_identities_; }
  nn::Sequential<float>& trunk() { return trunk_; }
  nn::Sequential<float>& head() { return head_; }

  void save(const std::filesystem::path& path) const;
  static StripeBackend load(const std::filesystem::path& path);

 private:
  BackendConfig cfg_;
  nn::Sequential<float> trunk_;
  nn::Sequential<float> head_;
  int n_identities_;
};

/// Resize to the backend dims, [0,1], then zero mean / unit variance.
Image backend_input(const ImageRecord& img, const BackendConfig& cfg);

struct BackendTraining {
  std::unique_ptr<StripeBackend> backend;
  std::vector<double> epoch_loss;
  std::vector<int> identities;
};

/// Identity classification over block ids. Needs >= 2 identities.
BackendTraining train_backend(const std::vector<ImageRecord>& train_set, const BackendConfig& cfg);

/// Rows of the result are the embeddings, in input order.
Matrix<float> embed_all(const EmbeddingBackend& backend, const std::vector<ImageRecord>& images);

/// |Q| x |G|. Cosine distance is 1 - <q, g> after normalizing both.
Matrix<double> distance_matrix(const Matrix<float>& queries, const Matrix<float>& gallery, Metric metric);

// ---------------------------------------------------------------------------
// Ranking

struct CmcResult {
  /// ranked_accuracy[k-1] = fraction of queries hit within the top k.
  std::vector<double> ranked_accuracy;
  /// Query indices whose identity is missing from the gallery.
  std::vector<std::size_t> absent_queries;
};

/// Gallery sorted by ascending distance, ties by gallery index.
CmcResult cmc_ranked_accuracy(const Matrix<double>& dist, const std::vector<int>& query_ids,
                              const std::vector<int>& gallery_ids, int max_rank);

// ---------------------------------------------------------------------------
// Scenarios

enum class ScenarioKind { c_to_rl, c_to_synthetic_rl, rl_to_synthetic_rl };
std::string to_tag(ScenarioKind k);
ScenarioKind parse_scenario(std::string_view tag);

struct ReIdScenario {
  ScenarioKind kind = ScenarioKind::c_to_rl;
  bool modified = true;
};

struct ReIdInputs {
  /// Original C/RL records of the evaluation identities.
  std::vector<ImageRecord> originals;
  /// Synthetic RL records (collapsed items already removed).
  std::vector<ImageRecord> synthetic;
};

struct ReIdOptions {
  int max_rank = 5;
  Metric metric = Metric::cosine;
  double synthetic_crop_ratio = 1.7;
  std::uint64_t seed = 0;
};

struct ReIdReport {
  ReIdScenario scenario;
  std::vector<double> ranks;
  std::int64_t n_queries = 0;
  std::int64_t n_gallery = 0;
  std::int64_t n_gallery_identities = 0;
  std::vector<int> absent_query_ids;
  Metric metric = Metric::cosine;
  std::uint64_t seed = 0;
  std::string backend;
  nlohmann::json preprocessing;
};
void to_json(nlohmann::json& j, const ReIdReport& r);
ReIdReport report_from_json(const nlohmann::json& j);
/// `rank,accuracy,scenario` rows without header.
std::string cmc_csv_rows(const ReIdReport& r);
std::string scenario_label(const ReIdScenario& s);

/// Query and gallery sets for a scenario. Both lighting variants of each
/// identity go to the gallery. With `modified`, synthetic images are
/// centre-cropped to `crop_ratio`.
std::pair<std::vector<ImageRecord>, std::vector<ImageRecord>> scenario_sets(const ReIdScenario& sc,
                                                                            const ReIdInputs& in, double crop_ratio);

/// Throws ConfigError when a query image also appears in the gallery.
ReIdReport run_scenario(const ReIdScenario& sc, const ReIdInputs& in, const EmbeddingBackend& backend,
                        const ReIdOptions& opts = {});

}  // namespace pbgan
