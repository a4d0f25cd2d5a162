#include "pbgan/log.hpp"
#include "pbgan/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <regex>

namespace fs = std::filesystem;
using namespace pbgan;

namespace {

enum Exit { ok = 0, usage = 2, missing = 3, runtime = 4 };

struct Globals {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> run_id;
  bool verbose = false;
};

PipelineConfig resolve(const Globals& g) {
  nlohmann::json raw = nlohmann::json::object();
  if (g.config) {
    std::ifstream in(*g.config);
    if (!in) throw ConfigError("cannot open config " + *g.config);
    raw = nlohmann::json::parse(in, nullptr, false);
    if (raw.is_discarded()) throw ConfigError("config is not valid JSON: " + *g.config);
  }
  auto cfg = pipeline_config_from_json(raw);
  if (g.seed) set_global_seed(cfg, *g.seed, raw);
  if (g.out) cfg.out = *g.out;
  if (g.run_id) cfg.run_id = *g.run_id;
  return cfg;
}

std::pair<int, int> parse_dims(const std::string& s) {
  static const std::regex re(R"((\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw ConfigError("dims must look like WIDTHxHEIGHT, got '" + s + "'");
  return {std::stoi(m[1]), std::stoi(m[2])};
}

void print_result(const StageResult& r, const PipelineConfig& cfg) {
  if (r.skipped)
    std::cout << r.stage << ": up-to-date, skipped (" << cfg.run_dir().string() << ")\n";
  else
    std::cout << r.stage << ": done in " << r.seconds << " s (" << cfg.run_dir().string() << ")\n";
}

std::vector<ReIdReport> read_reports(const std::vector<std::string>& paths) {
  std::vector<ReIdReport> out;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw MissingArtifact("missing report: " + p);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ValidationError("report is not valid JSON: " + p);
    try {
      if (j.is_array())
        for (const auto& item : j) out.push_back(report_from_json(item));
      else
        out.push_back(report_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("malformed report " + p + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perspective translation, classification and re-identification pipeline for pallet block images"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "JSON pipeline config")->envname("PBGAN_CONFIG");
  app.add_option("--seed", g.seed, "Global seed")->envname("PBGAN_SEED");
  app.add_option("--out", g.out, "Output root directory")->envname("PBGAN_OUT");
  app.add_option("--run-id", g.run_id, "Run directory name (default: config digest)")->envname("PBGAN_RUN_ID");
  app.add_flag("-v,--verbose", g.verbose, "Progress on stderr")->envname("PBGAN_VERBOSE");

  auto* fixture = app.add_subcommand("fixture", "Write a synthetic fixture dataset to <out>/dataset");
  std::optional<int> blocks;
  std::optional<std::string> dims;
  std::optional<double> angle;
  fixture->add_option("--blocks", blocks, "Number of blocks");
  fixture->add_option("--dims", dims, "Image size WIDTHxHEIGHT");
  fixture->add_option("--angle", angle, "RL rotation in degrees");

  std::vector<std::pair<std::string, CLI::App*>> stages;
  const std::map<std::string, std::string> help = {
      {"train-gan", "Train the CycleGAN on the training split"},
      {"generate", "Translate every C image to synthetic RL"},
      {"filter", "Flag collapsed synthetic images"},
      {"train-classifier", "Train the perspective classifier"},
      {"eval-classifier", "Score the classifier on holdout and synthetic images"},
      {"eval-reid", "Run the re-identification scenarios"}};
  for (const auto& name : pipeline_stages()) stages.emplace_back(name, app.add_subcommand(name, help.at(name)));
  std::optional<int> gan_epochs;
  stages[0].second->add_option("--epochs", gan_epochs, "Override gan.epochs");
  std::optional<double> threshold;
  stages[2].second->add_option("--threshold", threshold, "Override filter.threshold");

  auto* run_all = app.add_subcommand("run", "Run every stage in order");

  auto* plot = app.add_subcommand("plot-cmc", "Overlay CMC curves from re-id reports");
  std::vector<std::string> report_paths;
  std::string plot_out = "cmc.svg";
  plot->add_option("reports", report_paths, "Re-id report JSON files");
  plot->add_option("-o,--output", plot_out, "SVG path; the merged CSV goes next to it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return usage;
  }

  if (g.verbose) log_threshold() = LogLevel::info;

  try {
    auto cfg = resolve(g);
    if (blocks) cfg.fixture.n_blocks = *blocks;
    if (dims) std::tie(cfg.fixture.width, cfg.fixture.height) = parse_dims(*dims);
    if (angle) cfg.fixture.rotation_angle_deg = *angle;
    if (gan_epochs) cfg.gan.epochs = *gan_epochs;
    if (threshold) cfg.collapse_threshold = *threshold;

    if (*fixture) {
      const auto ds = cmd_fixture(cfg);
      std::cout << "fixture: " << ds.size() << " images, " << ds.n_blocks << " blocks, manifest digest "
                << ds.manifest_digest << " (" << cfg.dataset_dir().string() << ")\n";
      return ok;
    }
    if (*plot) {
      if (report_paths.empty()) throw ConfigError("plot-cmc needs at least one report file");
      const auto reports = read_reports(report_paths);
      const auto csv = plot_cmc(reports, plot_out);
      std::cout << "plot-cmc: " << reports.size() << " curves -> " << plot_out << ", " << csv.string() << '\n';
      return ok;
    }

    cfg.validate();
    if (*run_all) {
      for (const auto& name : pipeline_stages()) print_result(run_stage(name, cfg), cfg);
      return ok;
    }
    for (const auto& [name, sub] : stages)
      if (*sub) print_result(run_stage(name, cfg), cfg);
    return ok;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return usage;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return usage;
  } catch (const MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << '\n';
    return missing;
  } catch (const IngestError& e) {
    std::cerr << "ingest error: " << e.what() << '\n';
    return missing;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return runtime;
  }
}
