#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ediv/data.hpp"
#include "ediv/forge.hpp"
#include "ediv/lens.hpp"
#include "json.hpp"

namespace ediv::pipeline {

/// Invalid or unreadable configuration. Maps to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A pipeline stage failed. Maps to exit code 3.
struct StageError : std::runtime_error {
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage(std::move(stage)) {}
  std::string stage;
};

struct DatasetConfig {
  enum class Kind { synthetic, idx };
  Kind kind = Kind::synthetic;
  data::SyntheticSpec synthetic;
  // IDX input: training files plus either separate validation files or a tail split.
  std::filesystem::path images, labels, val_images, val_labels;
  std::size_t val_count = 0;
};

struct VizStage {
  lens::VizConfig config;
  std::optional<std::size_t> layer;  // defaults to the last convolution
  std::size_t channels = 0;          // 0 = every channel of the layer
};

struct SaliencyStage {
  lens::SaliencyConfig config;
  std::size_t max_images = 2000;
  std::size_t saved = 8;  // maps written to disk and tiled into the contact sheet
};

struct ExperimentConfig {
  DatasetConfig dataset;
  std::string model = "desk";
  forge::ParentConfig parent;
  forge::SnapshotConfig snapshot;
  forge::PruneTuneConfig prune_tune;
  VizStage viz;
  SaliencyStage saliency;
  std::filesystem::path output = "run";
  std::size_t workers = 0;  // 0 = EDIV_WORKERS or hardware concurrency

  /// Sets every stage seed from one base seed.
  void reseed(std::uint64_t seed);
  /// Throws ConfigError naming the first invalid field or missing path.
  void validate() const;
};

/// INI-style text: [section] headers and key = value lines, '#' or ';'
/// comments. Unknown sections or keys are errors. Relative paths resolve
/// against base_dir.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every result-affecting field in a fixed order; excludes output and workers.
nlohmann::ordered_json canonical(const ExperimentConfig& cfg);
/// "fnv1a64:<16 hex>" over canonical(cfg).dump().
std::string config_digest(const ExperimentConfig& cfg);

data::Split load_dataset(const DatasetConfig& cfg);
Network make_model(const std::string& preset, const data::Dataset& d);

/// One CSV row of the report.
struct Metric {
  std::string method;
  std::string metric;
  double mean = 0.0;
  std::optional<double> stderr_;  // absent for single-valued metrics
  std::size_t n = 0;
};

struct Summary {
  double mean = 0.0, stderr_ = 0.0;
  std::size_t n = 0;
};
/// Mean and standard error (sample standard deviation / sqrt(n)); stderr is 0 for n < 2.
Summary summarize(const std::vector<double>& values);

/// Result of a run: the report document and its flattened metric rows.
struct DiversityReport {
  nlohmann::ordered_json json;
  std::vector<Metric> metrics;
};

using Logger = forge::Logger;

/// Runs every stage and writes artifacts under cfg.output:
///   checkpoints/  parent, children, manifest.json
///   viz/<child>/<layer>_<channel>.png, viz/<child>/contact.png
///   saliency/<child>/<index>.png, saliency/contact.png
///   predictions/  val_probs.npy, val_labels.npy
///   report.json, report.csv (deterministic), run_log.json (timings)
/// A failing stage throws StageError; artifacts written so far remain.
DiversityReport run_experiment(const ExperimentConfig& cfg, const Logger& log = {});

/// A trained network entering the comparison. Children sharing `method` are
/// compared pairwise; methods appear in the report in first-member order.
struct Member {
  std::string name;
  std::string method;
  const Network* net = nullptr;
  std::string checkpoint;  // relative to the output directory; may be empty
};

/// The measurement half of run_experiment on caller-supplied networks:
/// accuracy, visualization, hashing, output metrics, saliency and report.
DiversityReport analyze_ensemble(const ExperimentConfig& cfg, const data::Split& split, const Network& parent,
                                 const std::vector<Member>& members, const Logger& log = {});

/// Flattens report.json back into metric rows.
std::vector<Metric> metrics_from_json(const nlohmann::ordered_json& report);
void write_report(const DiversityReport& report, const std::filesystem::path& dir);
std::string render_csv(const std::vector<Metric>& metrics);
/// Human-readable table of the rows.
std::string render_table(const std::vector<Metric>& metrics);

}  // namespace ediv::pipeline
