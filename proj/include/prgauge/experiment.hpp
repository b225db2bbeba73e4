#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "prgauge/cmi.hpp"
#include "prgauge/combine.hpp"
#include "prgauge/data.hpp"
#include "prgauge/prcurve.hpp"
#include "prgauge/scores.hpp"
#include "prgauge/train.hpp"

namespace prgauge {

inline constexpr int kConfigFormatVersion = 1;

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitPartial = 3, kExitMissing = 4 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string kind = "blobs";  // blobs | glyphs
  int num_classes = 4;
  int n = 800;  // train + test
  int dims = 16;        // blobs
  double spread = 1.0;  // blobs
  int size = 12;        // glyphs
  double test_fraction = 0.5;
};

struct ModelConfig {
  std::string arch = "mlp";  // mlp | convnet
  int width = 64;
  int channels = 8;  // convnet
};

/// Training defaults; any field also named as a corpus axis is overridden per cell.
struct TrainDefaults {
  int depth = 1;
  int width = 64;
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 30;
  double label_noise = 0.0;
  double weight_decay = 0.0;
  Optimizer optimizer = Optimizer::adam;
};

struct CorpusConfig {
  std::map<std::string, std::vector<nlohmann::json>> axes;
  TrainDefaults defaults;
  /// When non-empty every cell is trained once without augmentation and once per
  /// (level, perturbation) for the other levels.
  std::vector<AugmentLevel> augmentation_levels;
  std::vector<PerturbationSpec> augmentation_perturbations;
};

struct InvarianceConfig {
  std::vector<PerturbationSpec> perturbations;
  std::vector<std::string> measures = {"aug_subset", "mean_pr", "gi"};
  double train_floor = 0.8;
  int min_models = 6;
  double subset_fraction = 0.1;
};

struct TimingConfig {
  std::vector<int> n_batches = {4, 8, 16, 32};
  int repeats = 20;
  std::string measure = "gi_intra_l0";
  std::string model_id;  // empty: first trained model
  int cmi_repeats = 0;   // > 0 adds CMI spread per n_b across the whole corpus
};

struct RunConfig {
  int format_version = kConfigFormatVersion;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/default";
  DatasetConfig dataset;
  ModelConfig model;
  CorpusConfig corpus;
  std::vector<PerturbationSpec> perturbations;
  PrCurveOptions prcurve;
  /// Curves are scored on the labels each model was trained on (noisy when label noise is an
  /// axis) when true, else on the clean training labels.
  bool curves_on_training_labels = true;
  std::vector<std::string> measures;
  std::vector<std::string> combinations;
  PalMode pal_mode = PalMode::literal;
  double mixup_alpha = 0.5;
  CmiOptions cmi;
  InvarianceConfig invariance;
  TimingConfig timing;
};

RunConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);
/// Throws ConfigError when a measure or combination name does not resolve.
void validate_config(const RunConfig& config);

/// A measure name split into its statistic and the perturbation it reads.
struct MeasureRef {
  std::string stat;  // gi | pal | mean_pr | mixup | aug_subset | random
  std::optional<PerturbationKind> kind;
  int layer = 0;
};
MeasureRef parse_measure(const std::string& name);
Orientation measure_orientation(const MeasureRef& ref);

struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path train_data() const { return root / "data" / "train.prgd"; }
  std::filesystem::path test_data() const { return root / "data" / "test.prgd"; }
  std::filesystem::path manifest() const { return root / "corpus" / "manifest.json"; }
  std::filesystem::path model(const std::string& id) const { return root / "corpus" / "models" / (id + ".json"); }
  std::filesystem::path curve(const std::string& id, const PerturbationSpec& spec) const;
  std::filesystem::path scores() const { return root / "scores.csv"; }
  std::filesystem::path combined_scores() const { return root / "scores_combined.csv"; }
  std::filesystem::path cmi() const { return root / "cmi.json"; }
  std::filesystem::path cmi_table() const { return root / "cmi_table.txt"; }
  std::filesystem::path invariance() const { return root / "invariance.json"; }
  std::filesystem::path invariance_table() const { return root / "invariance_table.txt"; }
  std::filesystem::path invariance_scores() const { return root / "invariance_scores.csv"; }
  std::filesystem::path timing() const { return root / "timing.csv"; }
  std::filesystem::path sensitivity() const { return root / "sensitivity.csv"; }
  std::filesystem::path plots() const { return root / "plots"; }
  std::filesystem::path report_json() const { return root / "report.json"; }
  std::filesystem::path report_md() const { return root / "report.md"; }
};

struct CorpusCell {
  std::string id;
  std::map<std::string, std::string> hyperparams;  // categorical values keyed by axis
  AugmentRegime regime;
  std::uint64_t seed = 0;  // shared by every augmentation regime of one grid cell
  int depth = 1;
  int width = 64;
  TrainConfig train;
};

/// Every (grid cell, augmentation regime) model, sorted by id. Ids are a seeded permutation
/// of the model indices; regimes of one grid cell share `seed`.
std::vector<CorpusCell> expand_corpus(const RunConfig& config);
Network build_network(const RunConfig& config, const CorpusCell& cell, const Shape& input, int num_classes);

struct ManifestEntry {
  std::string id;
  std::map<std::string, std::string> hyperparams;
  std::string augmentation = "none";
  std::optional<PerturbationSpec> augmentation_perturbation;
  std::string status = "ok";  // ok | failed
  std::string error;
  std::uint64_t seed = 0;
  std::string cell_hash;
  std::string model_checksum;
  double train_acc = 0.0;
  double test_acc = 0.0;
  int epochs_run = 0;
};

struct Manifest {
  std::vector<ManifestEntry> models;

  std::vector<ModelRecord> records() const;  // ok entries only
  const ManifestEntry& entry(const std::string& id) const;
};

nlohmann::json manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const nlohmann::json& doc);
Manifest read_manifest(const std::filesystem::path& path);

struct LoadedSplits {
  Dataset train;
  Dataset test;
};
LoadedSplits load_splits(const RunPaths& paths);

/// Labels the PR curves of a model are evaluated on.
std::vector<int> curve_labels(const RunConfig& config, const CorpusCell& cell, const Dataset& train);

/// Value of a seeded-random baseline score for one model.
double random_score(std::uint64_t seed, const std::string& model_id);

int cmd_gen_data(const RunConfig& config, std::ostream& log);
int cmd_gen_corpus(const RunConfig& config, std::ostream& log);
int cmd_prcurve(const RunConfig& config, std::ostream& log);
int cmd_score(const RunConfig& config, std::ostream& log);
int cmd_combine(const RunConfig& config, std::ostream& log);
int cmd_cmi(const RunConfig& config, std::ostream& log);
int cmd_invariance(const RunConfig& config, std::ostream& log);
int cmd_timing(const RunConfig& config, std::ostream& log);
int cmd_plot(std::span<const std::filesystem::path> curves, const std::filesystem::path& output, std::ostream& log);
int cmd_report(const RunConfig& config, std::ostream& log);

/// Scores for every trained model and configured measure; Pal values that are undefined
/// (zero denominator) are left out.
std::vector<ScoreRow> compute_scores(const RunConfig& config, std::ostream& log);
std::vector<ScoreRow> combine_scores(const RunConfig& config, std::span<const ScoreRow> rows, std::ostream& log);

struct MeasureCmi {
  CmiReport report;
  std::size_t models = 0;
  double kendall_tau_gap = 0.0;
};
/// CMI of every measure present in `rows` against the corpus gaps.
std::vector<MeasureCmi> evaluate_cmi(std::span<const ModelRecord> records, std::span<const ScoreRow> rows,
                                     std::span<const std::string> measures, const CmiOptions& options);

struct InvarianceRow {
  std::string perturbation;
  std::string measure;
  double cmi = 0.0;
  std::size_t n = 0;
};
struct InvarianceResult {
  std::vector<InvarianceRow> rows;
  /// perturbation -> augmentation level -> mean Gi over qualifying models
  std::map<std::string, std::map<std::string, double>> mean_gi;
  std::vector<std::string> diagnostics;
  std::vector<ScoreRow> scores;  // model_id is "<id>@<perturbation>"
};
InvarianceResult run_invariance(const RunConfig& config, std::ostream& log);
nlohmann::json to_json(const InvarianceResult& result);
std::string format_invariance_table(const InvarianceResult& result);

struct TimingRow {
  int n_batches = 0;
  double mean_seconds = 0.0;
  double std_seconds = 0.0;
  std::string measure;
};
struct SensitivityRow {
  int n_batches = 0;
  std::string measure;  // the measure itself, or "cmi_<measure>"
  int repeats = 0;
  double mean_value = 0.0;
  double std_value = 0.0;
};
struct TimingResult {
  std::vector<TimingRow> timing;
  std::vector<SensitivityRow> sensitivity;
};
TimingResult run_timing(const RunConfig& config, std::ostream& log);
std::string timing_to_csv(std::span<const TimingRow> rows);
std::string sensitivity_to_csv(std::span<const SensitivityRow> rows);

}  // namespace prgauge
