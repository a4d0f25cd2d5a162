#include "pbgan/pipeline.hpp"

#include "pbgan/log.hpp"
#include "pbgan/util.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace pbgan {

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MissingArtifact("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << text;
}

std::string file_digest(const fs::path& p) { return digest_of(read_file(p)); }

fs::path require(const fs::path& p, std::string_view what) {
  if (!fs::exists(p)) throw MissingArtifact("missing " + std::string(what) + ": " + p.string());
  return p;
}

std::string combine(std::initializer_list<std::string> parts) {
  Digest d;
  for (const auto& p : parts) d.update(p).update(std::string_view("\x1f", 1));
  return d.hex();
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

fs::path meta_path(const PipelineConfig& cfg, const std::string& stage) {
  return cfg.run_dir() / "meta" / (stage + ".json");
}

template <typename Fn>
StageResult staged(const PipelineConfig& cfg, const std::string& stage, const std::string& input_digest,
                   std::vector<fs::path> outputs, Fn&& body) {
  StageResult res{stage, false, input_digest, 0.0, outputs};
  const fs::path run = cfg.run_dir();
  const fs::path meta = meta_path(cfg, stage);
  if (fs::exists(meta)) {
    const auto j = nlohmann::json::parse(read_file(meta), nullptr, false);
    bool fresh = !j.is_discarded() && j.value("input_digest", "") == input_digest;
    for (const auto& o : outputs) fresh = fresh && fs::exists(run / o);
    if (fresh) {
      res.skipped = true;
      log_info(stage, ": up-to-date");
      return res;
    }
  }
  std::error_code ec;
  fs::create_directories(run / "meta", ec);
  if (ec) throw ConfigError("output directory not writable: " + run.string());
  nlohmann::json snapshot = cfg;
  write_file(run / "config.json", snapshot.dump(2) + "\n");

  const auto t0 = std::chrono::steady_clock::now();
  body(run);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::json out_list = nlohmann::json::array();
  for (const auto& o : outputs) out_list.push_back(o.generic_string());
  const nlohmann::json j = {{"stage", stage},
                            {"input_digest", input_digest},
                            {"config_digest", cfg.digest()},
                            {"seed", cfg.seed},
                            {"timings", {{"seconds", res.seconds}, {"finished_utc", utc_now()}}},
                            {"outputs", out_list}};
  write_file(meta, j.dump(2) + "\n");
  return res;
}

PerspectiveDataset load_dataset(const PipelineConfig& cfg) {
  const fs::path root = cfg.dataset_dir();
  if (!fs::exists(root)) throw MissingArtifact("dataset not found: " + root.string());
  IngestOptions opts;
  opts.resize_to = cfg.ingest_resize;
  opts.perspectives = {Perspective::C, Perspective::RL};
  return ingest_dataset(root, opts);
}

std::string json_digest(const nlohmann::json& j) { return digest_of(j.dump()); }

std::vector<ImageRecord> at_dims(const std::vector<ImageRecord>& in, int width, int height) {
  std::vector<ImageRecord> out;
  out.reserve(in.size());
  for (const auto& r : in)
    out.push_back(r.pixels.width() == width && r.pixels.height() == height ? r : resize_for_gan(r, width, height));
  return out;
}

nlohmann::json without_resume_keys(const GanConfig& c) {
  nlohmann::json j = c;
  j.erase("epochs");
  j.erase("checkpoint_interval");
  return j;
}

std::vector<ImageRecord> kept_synthetic(const fs::path& dir, double threshold) {
  return filter_collapsed(read_synthetic_set(dir), threshold).kept.kept_records();
}

std::string synthetic_digest(const fs::path& run) {
  const fs::path dir = run / "synthetic";
  require(dir / "synthetic.csv", "synthetic manifest");
  return combine({file_digest(dir / "synthetic.csv"), file_digest(dir / "synthetic.json")});
}

const fs::path kCheckpoint = "gan/checkpoint.bin";
const fs::path kCheckpointTag = "gan/checkpoint.json";
const fs::path kGanLosses = "reports/gan_losses.csv";
const fs::path kSplit = "gan/split.csv";
const fs::path kSyntheticCsv = "synthetic/synthetic.csv";
const fs::path kSyntheticJson = "synthetic/synthetic.json";
const fs::path kFilterJson = "reports/filter.json";
const fs::path kFilterCsv = "reports/filter.csv";
const fs::path kClassifierModel = "classifier/model.bin";
const fs::path kClassifierTraining = "reports/classifier_training.csv";
const fs::path kClassifierEvalJson = "reports/classifier_eval.json";
const fs::path kClassifierEvalCsv = "reports/classifier_eval.csv";
const fs::path kReidJson = "reports/reid.json";
const fs::path kReidCsv = "reports/reid.csv";

}  // namespace

// ---------------------------------------------------------------------------
// Config

void to_json(nlohmann::json& j, const ReIdStageConfig& c) {
  nlohmann::json scenarios = nlohmann::json::array();
  for (auto k : c.scenarios) scenarios.push_back(to_tag(k));
  nlohmann::json modes = nlohmann::json::array();
  for (bool m : c.modes) modes.push_back(m ? "modified" : "plain");
  j = {{"backend", c.backend},   {"scenarios", scenarios},         {"modes", modes},
       {"max_rank", c.max_rank}, {"metric", to_tag(c.metric)},     {"crop_ratio", c.crop_ratio},
       {"identity_overlap", c.identity_overlap}};
}

void from_json(const nlohmann::json& j, ReIdStageConfig& c) {
  if (j.contains("backend")) from_json(j.at("backend"), c.backend);
  if (j.contains("scenarios")) {
    c.scenarios.clear();
    for (const auto& s : j.at("scenarios")) c.scenarios.push_back(parse_scenario(s.get<std::string>()));
  }
  if (j.contains("modes")) {
    c.modes.clear();
    for (const auto& m : j.at("modes")) {
      const auto tag = m.get<std::string>();
      if (tag != "modified" && tag != "plain") throw ConfigError("re-id mode must be 'modified' or 'plain', got " + tag);
      c.modes.push_back(tag == "modified");
    }
  }
  c.max_rank = j.value("max_rank", c.max_rank);
  if (j.contains("metric")) c.metric = parse_metric(j.at("metric").get<std::string>());
  c.crop_ratio = j.value("crop_ratio", c.crop_ratio);
  c.identity_overlap = j.value("identity_overlap", c.identity_overlap);
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  nlohmann::json dataset = {{"root", c.dataset_root.generic_string()}};
  dataset["resize"] = c.ingest_resize ? nlohmann::json{c.ingest_resize->first, c.ingest_resize->second}
                                      : nlohmann::json(nullptr);
  nlohmann::json classifier = c.classifier;
  classifier["synthetic_subset"] = c.synthetic_subset ? nlohmann::json(*c.synthetic_subset) : nlohmann::json(nullptr);
  j = {{"seed", c.seed},
       {"out", c.out.generic_string()},
       {"run_id", c.run_id},
       {"dataset", dataset},
       {"fixture", c.fixture},
       {"split", c.split},
       {"gan", c.gan},
       {"filter", {{"threshold", c.collapse_threshold}}},
       {"classifier", classifier},
       {"reid", c.reid}};
}

void set_global_seed(PipelineConfig& cfg, std::uint64_t seed, const nlohmann::json& source) {
  cfg.seed = seed;
  const auto own = [&](std::initializer_list<const char*> path) {
    const nlohmann::json* node = &source;
    for (const char* key : path) {
      if (!node->is_object() || !node->contains(key)) return false;
      node = &node->at(key);
    }
    return node->contains("seed");
  };
  if (!own({"fixture"})) cfg.fixture.seed = seed;
  if (!own({"split"})) cfg.split.seed = seed;
  if (!own({"gan"})) cfg.gan.seed = seed;
  if (!own({"classifier"})) cfg.classifier.seed = seed;
  if (!own({"reid", "backend"})) cfg.reid.backend.seed = seed;
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"seed",   "out", "run_id",     "dataset", "fixture", "split",
                                              "gan",    "filter", "classifier", "reid"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown config section '" + key + "'");
  PipelineConfig c;
  try {
    c.out = j.value("out", c.out.string());
    c.run_id = j.value("run_id", c.run_id);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      c.dataset_root = d.value("root", std::string());
      if (d.contains("resize") && !d.at("resize").is_null())
        c.ingest_resize = std::pair{d.at("resize").at(0).get<int>(), d.at("resize").at(1).get<int>()};
    }
    if (j.contains("fixture")) from_json(j.at("fixture"), c.fixture);
    if (j.contains("split")) from_json(j.at("split"), c.split);
    if (j.contains("gan")) from_json(j.at("gan"), c.gan);
    if (j.contains("filter")) c.collapse_threshold = j.at("filter").value("threshold", c.collapse_threshold);
    if (j.contains("classifier")) {
      from_json(j.at("classifier"), c.classifier);
      const auto& s = j.at("classifier");
      if (s.contains("synthetic_subset") && !s.at("synthetic_subset").is_null())
        c.synthetic_subset = s.at("synthetic_subset").get<std::size_t>();
    }
    if (j.contains("reid")) from_json(j.at("reid"), c.reid);
    set_global_seed(c, j.value("seed", std::uint64_t{0}), j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
  return pipeline_config_from_json(j);
}

void PipelineConfig::validate() const {
  try {
    fixture.validate();
    split.validate();
    gan.validate();
    classifier.validate();
    reid.backend.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  if (!(collapse_threshold > 0.0 && collapse_threshold <= 1.0)) throw ConfigError("filter.threshold must lie in (0, 1]");
  if (ingest_resize && (ingest_resize->first < 8 || ingest_resize->second < 8))
    throw ConfigError("dataset.resize must be at least 8x8");
  if (synthetic_subset && *synthetic_subset == 0) throw ConfigError("classifier.synthetic_subset must be positive");
  if (reid.max_rank < 1) throw ConfigError("reid.max_rank must be >= 1");
  if (!(reid.crop_ratio > 0.0)) throw ConfigError("reid.crop_ratio must be positive");
  if (reid.scenarios.empty() || reid.modes.empty()) throw ConfigError("reid needs at least one scenario and mode");
  if (out.empty()) throw ConfigError("output directory is empty");
}

std::string PipelineConfig::digest() const {
  nlohmann::json j = *this;
  j.erase("out");
  j.erase("run_id");
  j.erase("fixture");
  return json_digest(j);
}

fs::path PipelineConfig::dataset_dir() const { return dataset_root.empty() ? out / "dataset" : dataset_root; }

fs::path PipelineConfig::run_dir() const { return out / "runs" / (run_id.empty() ? "run-" + digest().substr(0, 8) : run_id); }

// ---------------------------------------------------------------------------
// Stages

PerspectiveDataset cmd_fixture(const PipelineConfig& cfg) {
  try {
    cfg.fixture.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  const fs::path root = cfg.dataset_dir();
  if (fs::exists(root / "fixture.json")) {
    // Stale PNGs from a larger fixture would otherwise linger in the layout.
    for (const auto& e : fs::directory_iterator(root))
      if (e.is_directory()) fs::remove_all(e.path());
  } else if (fs::exists(root) && !fs::is_empty(root)) {
    throw ConfigError("refusing to write a fixture into non-empty " + root.string());
  }
  return write_fixture_dataset(cfg.fixture, root);
}

StageResult cmd_train_gan(const PipelineConfig& cfg) {
  const auto ds = load_dataset(cfg);
  const auto [train_set, holdout] = split_dataset(ds, cfg.split);
  const std::string data_digest = combine({ds.manifest_digest, json_digest(nlohmann::json(cfg.split))});
  const std::string input = combine({data_digest, json_digest(nlohmann::json(cfg.gan))});
  return staged(cfg, "train-gan", input, {kCheckpoint, kGanLosses, kSplit}, [&](const fs::path& run) {
    auto [c_view, rl_view] = domain_views(train_set);
    c_view = at_dims(c_view, cfg.gan.width, cfg.gan.height);
    rl_view = at_dims(rl_view, cfg.gan.width, cfg.gan.height);

    const auto save = [&](const CycleGanCheckpoint& ck) {
      fs::create_directories((run / kCheckpoint).parent_path());
      ck.save(run / kCheckpoint);
      write_file(run / kCheckpointTag, nlohmann::json{{"data_digest", data_digest}, {"epoch", ck.epoch}}.dump(2) + "\n");
    };

    std::optional<CycleGanCheckpoint> resume;
    if (fs::exists(run / kCheckpoint) && fs::exists(run / kCheckpointTag)) {
      const auto tag = nlohmann::json::parse(read_file(run / kCheckpointTag), nullptr, false);
      if (!tag.is_discarded() && tag.value("data_digest", "") == data_digest) {
        auto ck = CycleGanCheckpoint::load(run / kCheckpoint);
        if (without_resume_keys(ck.config) == without_resume_keys(cfg.gan) && ck.epoch < cfg.gan.epochs) {
          log_info("train-gan: resuming from epoch ", ck.epoch);
          resume = std::move(ck);
        }
      }
    }

    TrainCallbacks cb;
    cb.on_epoch = [](int epoch, const LossReport& r, const CycleGanCheckpoint&) {
      log_info("train-gan: epoch ", epoch, " cycle ", r.cycle, " total_G ", r.total_G);
    };
    cb.on_checkpoint = save;
    const auto final_ck = train(cfg.gan, c_view, rl_view, cb, std::move(resume));
    save(final_ck);

    std::ostringstream csv;
    csv << loss_csv_header() << '\n';
    for (std::size_t e = 0; e < final_ck.history.size(); ++e)
      csv << loss_csv_row(static_cast<int>(e) + 1, final_ck.history[e]) << '\n';
    write_file(run / kGanLosses, csv.str());
    write_split_manifest(run / kSplit, train_set, holdout, cfg.split);
  });
}

StageResult cmd_generate(const PipelineConfig& cfg) {
  const fs::path run = cfg.run_dir();
  require(run / kCheckpoint, "GAN checkpoint (run train-gan first)");
  const auto ds = load_dataset(cfg);
  const std::string input =
      combine({file_digest(run / kCheckpoint), ds.manifest_digest, std::to_string(cfg.collapse_threshold)});
  return staged(cfg, "generate", input, {kSyntheticCsv, kSyntheticJson}, [&](const fs::path& run_dir) {
    const auto ck = CycleGanCheckpoint::load(run_dir / kCheckpoint);
    const auto set = generate_synthetic_set(ck, domain_views(ds).first, cfg.collapse_threshold);
    fs::remove_all(run_dir / "synthetic");
    write_synthetic_set(set, run_dir / "synthetic");
  });
}

StageResult cmd_filter(const PipelineConfig& cfg) {
  const fs::path run = cfg.run_dir();
  const std::string input = combine({synthetic_digest(run), std::to_string(cfg.collapse_threshold)});
  return staged(cfg, "filter", input, {kFilterJson, kFilterCsv}, [&](const fs::path& run_dir) {
    const auto set = read_synthetic_set(run_dir / "synthetic");
    const auto res = filter_collapsed(set, cfg.collapse_threshold);
    nlohmann::json j = res;
    j["criterion"] = "mean 8x8-window SSIM between C input and synthetic output >= threshold";
    j["checkpoint_digest"] = set.checkpoint_digest;
    write_file(run_dir / kFilterJson, j.dump(2) + "\n");

    std::ostringstream csv;
    csv.precision(9);
    csv << "block_id,lighting,collapse_score,source_luminance,excluded\n";
    for (const auto& part : {res.kept, res.excluded})
      for (const auto& i : part.items)
        csv << i.source_block_id << ',' << to_tag(i.lighting) << ',' << i.collapse_score << ',' << i.source_luminance
            << ',' << (i.excluded ? 1 : 0) << '\n';
    write_file(run_dir / kFilterCsv, csv.str());
  });
}

StageResult cmd_train_classifier(const PipelineConfig& cfg) {
  const auto ds = load_dataset(cfg);
  const std::string input = combine({ds.manifest_digest, json_digest(nlohmann::json(cfg.split)),
                                     json_digest(nlohmann::json(cfg.classifier))});
  return staged(cfg, "train-classifier", input, {kClassifierModel, kClassifierTraining}, [&](const fs::path& run) {
    const auto train_set = split_dataset(ds, cfg.split).first;
    auto model = build_classifier(cfg.classifier);
    const auto history = train_classifier(model, train_set.records);
    fs::create_directories((run / kClassifierModel).parent_path());
    model.save(run / kClassifierModel);
    std::ostringstream csv;
    csv.precision(9);
    csv << "epoch,loss,accuracy\n";
    for (const auto& e : history) csv << e.epoch << ',' << e.loss << ',' << e.accuracy << '\n';
    write_file(run / kClassifierTraining, csv.str());
  });
}

StageResult cmd_eval_classifier(const PipelineConfig& cfg) {
  const fs::path run = cfg.run_dir();
  require(run / kClassifierModel, "classifier model (run train-classifier first)");
  const std::string synth = synthetic_digest(run);
  const auto ds = load_dataset(cfg);
  const std::string input =
      combine({file_digest(run / kClassifierModel), ds.manifest_digest, json_digest(nlohmann::json(cfg.split)), synth,
               std::to_string(cfg.collapse_threshold),
               cfg.synthetic_subset ? std::to_string(*cfg.synthetic_subset) : "holdout"});
  return staged(cfg, "eval-classifier", input, {kClassifierEvalJson, kClassifierEvalCsv}, [&](const fs::path& run_dir) {
    const auto model = ClassifierModel::load(run_dir / kClassifierModel);
    const auto holdout = split_dataset(ds, cfg.split).second;
    const auto hold_report = evaluate_classifier(model, holdout.records, "holdout", std::nullopt, cfg.classifier.seed);

    const auto synthetic = kept_synthetic(run_dir / "synthetic", cfg.collapse_threshold);
    nlohmann::json j = {{"holdout", hold_report}, {"split", cfg.split}};
    std::ostringstream csv;
    csv.precision(9);
    csv << "set,n,accuracy,accuracy_c,accuracy_rl\n";
    const auto row = [&](const EvalReport& r) {
      const auto cls = [&](const char* tag) { return r.per_class.count(tag) ? r.per_class.at(tag) : 0.0; };
      csv << r.set << ',' << r.n << ',' << r.accuracy << ',' << cls("c") << ',' << cls("rl") << '\n';
    };
    row(hold_report);
    if (synthetic.empty()) {
      j["synthetic"] = nullptr;
      j["synthetic_note"] = "no synthetic image survived the collapse filter";
    } else {
      const std::size_t subset = cfg.synthetic_subset.value_or(holdout.size());
      const auto syn_report = evaluate_classifier(model, synthetic, "synthetic", subset, cfg.classifier.seed);
      j["synthetic"] = syn_report;
      row(syn_report);
    }
    write_file(run_dir / kClassifierEvalJson, j.dump(2) + "\n");
    write_file(run_dir / kClassifierEvalCsv, csv.str());
  });
}

StageResult cmd_eval_reid(const PipelineConfig& cfg) {
  const fs::path run = cfg.run_dir();
  const std::string synth = synthetic_digest(run);
  const auto ds = load_dataset(cfg);
  const std::string input = combine({ds.manifest_digest, json_digest(nlohmann::json(cfg.split)),
                                     json_digest(nlohmann::json(cfg.reid)), synth,
                                     std::to_string(cfg.collapse_threshold)});
  std::vector<fs::path> outputs = {kReidJson, kReidCsv};
  for (bool m : cfg.reid.modes)
    for (auto k : cfg.reid.scenarios) outputs.push_back("reports/reid_" + scenario_label({k, m}) + ".json");
  return staged(cfg, "eval-reid", input, outputs, [&](const fs::path& run_dir) {
    SplitSpec by_block = cfg.split;
    by_block.stratify_by = StratifyBy::block;
    const auto [train_ids, eval_ids] = split_dataset(ds, by_block);
    const std::vector<ImageRecord>& backend_train = cfg.reid.identity_overlap ? ds.records : train_ids.records;

    ReIdInputs inputs;
    inputs.originals = eval_ids.records;
    const auto ids = eval_ids.block_ids();
    const std::set<int> eval_set(ids.begin(), ids.end());
    for (auto& r : kept_synthetic(run_dir / "synthetic", cfg.collapse_threshold))
      if (eval_set.count(r.block_id)) inputs.synthetic.push_back(std::move(r));

    ReIdOptions opts;
    opts.max_rank = cfg.reid.max_rank;
    opts.metric = cfg.reid.metric;
    opts.synthetic_crop_ratio = cfg.reid.crop_ratio;
    opts.seed = cfg.reid.backend.seed;

    nlohmann::json all = nlohmann::json::array();
    std::string csv = "rank,accuracy,scenario\n";
    for (bool modified : cfg.reid.modes) {
      BackendConfig bc = cfg.reid.backend;
      bc.augment = modified;
      const auto trained = train_backend(backend_train, bc);
      fs::create_directories(run_dir / "reid");
      trained.backend->save(run_dir / "reid" / (std::string(modified ? "backend_modified" : "backend_plain") + ".bin"));
      for (auto kind : cfg.reid.scenarios) {
        const ReIdScenario sc{kind, modified};
        auto report = run_scenario(sc, inputs, *trained.backend, opts);
        report.preprocessing["backend_identities"] = cfg.reid.identity_overlap ? "overlapping" : "disjoint";
        nlohmann::json j = report;
        write_file(run_dir / "reports" / ("reid_" + scenario_label(sc) + ".json"), j.dump(2) + "\n");
        all.push_back(j);
        csv += cmc_csv_rows(report);
      }
    }
    write_file(run_dir / kReidJson, all.dump(2) + "\n");
    write_file(run_dir / kReidCsv, csv);
  });
}

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> names = {"train-gan",        "generate",        "filter",
                                                 "train-classifier", "eval-classifier", "eval-reid"};
  return names;
}

StageResult run_stage(const std::string& name, const PipelineConfig& cfg) {
  if (name == "train-gan") return cmd_train_gan(cfg);
  if (name == "generate") return cmd_generate(cfg);
  if (name == "filter") return cmd_filter(cfg);
  if (name == "train-classifier") return cmd_train_classifier(cfg);
  if (name == "eval-classifier") return cmd_eval_classifier(cfg);
  if (name == "eval-reid") return cmd_eval_reid(cfg);
  throw ConfigError("unknown stage '" + name + "'");
}

std::vector<fs::path> report_files(const PipelineConfig& cfg) {
  std::vector<fs::path> files = {kGanLosses,          kSyntheticCsv,       kFilterJson,      kFilterCsv,
                                 kClassifierTraining, kClassifierEvalJson, kClassifierEvalCsv, kReidJson,
                                 kReidCsv};
  for (bool m : cfg.reid.modes)
    for (auto k : cfg.reid.scenarios) files.push_back("reports/reid_" + scenario_label({k, m}) + ".json");
  return files;
}

// ---------------------------------------------------------------------------
// CMC plot

void check_cmc_report(const ReIdReport& r) {
  const auto label = scenario_label(r.scenario);
  if (r.ranks.empty()) throw ValidationError("report " + label + " has no ranks");
  for (std::size_t k = 0; k < r.ranks.size(); ++k) {
    if (!(r.ranks[k] >= 0.0 && r.ranks[k] <= 1.0))
      throw ValidationError("report " + label + ": rank-" + std::to_string(k + 1) + " accuracy outside [0,1]");
    if (k > 0 && r.ranks[k] < r.ranks[k - 1])
      throw ValidationError("report " + label + ": ranked accuracy decreases at rank " + std::to_string(k + 1));
  }
}

fs::path plot_cmc(const std::vector<ReIdReport>& reports, const fs::path& svg_path) {
  if (reports.empty()) throw ConfigError("plot-cmc needs at least one report");
  for (const auto& r : reports) check_cmc_report(r);

  std::size_t max_rank = 1;
  for (const auto& r : reports) max_rank = std::max(max_rank, r.ranks.size());
  constexpr double W = 640, H = 420, left = 60, right = 200, top = 30, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  const auto px = [&](double rank) {
    return max_rank == 1 ? left + pw / 2 : left + pw * (rank - 1) / static_cast<double>(max_rank - 1);
  };
  const auto py = [&](double acc) { return top + ph * (1.0 - acc); };
  static constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                                           "#e377c2", "#7f7f7f"};

  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double acc = i / 5.0;
    svg << "<line x1=\"" << left << "\" y1=\"" << py(acc) << "\" x2=\"" << left + pw << "\" y2=\"" << py(acc)
        << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << left - 8 << "\" y=\"" << py(acc) + 4 << "\" text-anchor=\"end\">" << std::setprecision(1)
        << acc << std::setprecision(2) << "</text>\n";
  }
  for (std::size_t k = 1; k <= max_rank; ++k)
    svg << "<text x=\"" << px(static_cast<double>(k)) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << k
        << "</text>\n";
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">rank</text>\n";
  svg << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << top + ph / 2
      << ")\">ranked accuracy</text>\n";

  std::string csv = "rank,accuracy,scenario\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const char* color = colors[i % std::size(colors)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < r.ranks.size(); ++k)
      svg << (k ? " " : "") << px(static_cast<double>(k + 1)) << ',' << py(r.ranks[k]);
    svg << "\"/>\n";
    for (std::size_t k = 0; k < r.ranks.size(); ++k)
      svg << "<circle cx=\"" << px(static_cast<double>(k + 1)) << "\" cy=\"" << py(r.ranks[k]) << "\" r=\"3\" fill=\""
          << color << "\"/>\n";
    const double ly = top + 10 + 18.0 * static_cast<double>(i);
    svg << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 32 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\">" << scenario_label(r.scenario) << "</text>\n";
    csv += cmc_csv_rows(r);
  }
  svg << "</svg>\n";

  write_file(svg_path, svg.str());
  fs::path csv_path = svg_path;
  csv_path.replace_extension(".csv");
  write_file(csv_path, csv);
  return csv_path;
}

}  // namespace pbgan
