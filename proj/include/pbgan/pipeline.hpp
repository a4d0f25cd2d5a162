#pragma once

#include "pbgan/classifier.hpp"
#include "pbgan/cyclegan.hpp"
#include "pbgan/fixture.hpp"
#include "pbgan/reid.hpp"
#include "pbgan/translate.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pbgan {

/// A stage input (dataset, checkpoint, synthetic set) is absent on disk.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReIdStageConfig {
  BackendConfig backend;
  std::vector<ScenarioKind> scenarios = {ScenarioKind::c_to_rl, ScenarioKind::c_to_synthetic_rl,
                                         ScenarioKind::rl_to_synthetic_rl};
  /// Run each scenario in these modes (true = modified).
  std::vector<bool> modes = {true, false};
  int max_rank = 5;
  Metric metric = Metric::cosine;
  double crop_ratio = 1.7;
  /// Train the backend on every identity instead of the training split only.
  bool identity_overlap = false;
};
void to_json(nlohmann::json& j, const ReIdStageConfig& c);
void from_json(const nlohmann::json& j, ReIdStageConfig& c);

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "pbgan-out";
  /// Empty: derived from the config digest.
  std::string run_id;
  /// Empty: `<out>/dataset`, where the fixture subcommand writes.
  std::filesystem::path dataset_root;
  /// Resize every image on ingest (width, height).
  std::optional<std::pair<int, int>> ingest_resize;
  FixtureSpec fixture;
  SplitSpec split;
  GanConfig gan;
  double collapse_threshold = 0.95;
  ClassifierConfig classifier;
  /// Synthetic evaluation subset; unset means the holdout size.
  std::optional<std::size_t> synthetic_subset;
  ReIdStageConfig reid;

  void validate() const;
  /// Digest of everything that shapes the run (fixture, out and run_id excluded).
  [[nodiscard]] std::string digest() const;
  [[nodiscard]] std::filesystem::path dataset_dir() const;
  [[nodiscard]] std::filesystem::path run_dir() const;
};
void to_json(nlohmann::json& j, const PipelineConfig& c);

/// Parses a config document. Nested sections without an explicit "seed"
/// take the global one.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
/// Re-applies the global seed to nested configs that did not set their own.
void set_global_seed(PipelineConfig& cfg, std::uint64_t seed, const nlohmann::json& source = {});

struct StageResult {
  std::string stage;
  bool skipped = false;
  std::string input_digest;
  double seconds = 0;
  std::vector<std::filesystem::path> outputs;
};

PerspectiveDataset cmd_fixture(const PipelineConfig& cfg);
StageResult cmd_train_gan(const PipelineConfig& cfg);
StageResult cmd_generate(const PipelineConfig& cfg);
StageResult cmd_filter(const PipelineConfig& cfg);
StageResult cmd_train_classifier(const PipelineConfig& cfg);
StageResult cmd_eval_classifier(const PipelineConfig& cfg);
StageResult cmd_eval_reid(const PipelineConfig& cfg);

/// Stage names in pipeline order.
const std::vector<std::string>& pipeline_stages();
StageResult run_stage(const std::string& name, const PipelineConfig& cfg);

/// Metric reports of a finished run, relative to the run directory.
std::vector<std::filesystem::path> report_files(const PipelineConfig& cfg);

/// Throws ValidationError unless ranks are non-empty, in [0,1] and non-decreasing.
void check_cmc_report(const ReIdReport& r);
/// SVG chart with one curve per report plus `<svg stem>.csv` merged data.
/// Returns the CSV path.
std::filesystem::path plot_cmc(const std::vector<ReIdReport>& reports, const std::filesystem::path& svg_path);

}  // namespace pbgan
