#include "prgauge/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "prgauge/io.hpp"
#include "prgauge/model_io.hpp"
#include "prgauge/parallel.hpp"
#include "prgauge/plot.hpp"
#include "prgauge/random.hpp"
#include "prgauge/stats.hpp"

namespace prgauge {

using nlohmann::json;

std::filesystem::path RunPaths::curve(const std::string& id, const PerturbationSpec& spec) const {
  return root / "curves" / (id + "__" + spec.label() + ".csv");
}

namespace {

constexpr int kManifestVersion = 1;

std::string file_checksum(const std::filesystem::path& path) { return hex64(fnv1a64(read_text_file(path))); }

const PerturbationSpec& spec_for(const RunConfig& config, const MeasureRef& ref) {
  for (const auto& s : config.perturbations) {
    if (s.kind == *ref.kind && s.layer == ref.layer) return s;
  }
  throw ConfigError("no perturbation configured for " + to_string(*ref.kind) + " at layer " + std::to_string(ref.layer));
}

std::string cell_hash(const RunConfig& config, const CorpusCell& cell) {
  json doc = {{"format", kManifestVersion},
              {"dataset", config_to_json(config)["dataset"]},
              {"arch", config.model.arch},
              {"channels", config.model.channels},
              {"depth", cell.depth},
              {"width", cell.width},
              {"seed", cell.seed},
              {"optimizer", to_string(cell.train.optimizer)},
              {"learning_rate", cell.train.learning_rate},
              {"batch_size", cell.train.batch_size},
              {"epochs", cell.train.epochs},
              {"label_noise", cell.train.label_noise_fraction},
              {"weight_decay", cell.train.weight_decay},
              {"augmentation", to_string(cell.regime.level)}};
  if (cell.regime.level != AugmentLevel::none) doc["augmentation_perturbation"] = cell.regime.perturbation;
  return hex64(fnv1a64(doc.dump()));
}

Dataset with_labels(const Dataset& data, std::vector<int> labels) {
  Dataset out = data;
  out.labels = std::move(labels);
  return out;
}

/// Cells of the configured corpus that trained successfully, in canonical order.
std::vector<CorpusCell> trained_cells(const RunConfig& config, const Manifest& manifest, std::ostream& log) {
  std::vector<CorpusCell> out;
  for (auto& cell : expand_corpus(config)) {
    auto it = std::find_if(manifest.models.begin(), manifest.models.end(),
                           [&](const ManifestEntry& e) { return e.id == cell.id; });
    if (it == manifest.models.end()) {
      log << "warning: " << cell.id << " is not in the manifest; rerun gen-corpus\n";
      continue;
    }
    if (it->status == "ok") out.push_back(std::move(cell));
  }
  if (out.empty()) throw std::runtime_error("corpus has no trained models");
  return out;
}

Network load_network(const RunPaths& paths, const std::string& id) { return load_model(paths.model(id)).network; }

double curve_statistic(const std::string& stat, const PrCurve& curve, const RunConfig& config, bool* defined) {
  if (defined) *defined = true;
  if (stat == "gi") return gi_score(curve);
  if (stat == "mean_pr") return mean_pr_accuracy(curve);
  if (stat == "mixup") return point_score(curve, config.mixup_alpha);
  if (stat == "pal") {
    const auto v = pal_score(curve, config.pal_mode);
    if (!v) {
      if (defined) *defined = false;
      return 0.0;
    }
    return *v;
  }
  throw std::invalid_argument("measure '" + stat + "' is not a curve statistic");
}

PrCurveOptions curve_options(const RunConfig& config, std::uint64_t seed, int n_batches = 0) {
  PrCurveOptions opts = config.prcurve;
  opts.seed = seed;
  if (n_batches > 0) opts.n_batches = n_batches;
  return opts;
}

std::uint64_t curve_seed(const RunConfig& config, const std::string& id, const PerturbationSpec& spec) {
  return derive_seed(config.seed, {fnv1a64(id), fnv1a64(spec.label())});
}

}  // namespace

std::vector<ModelRecord> Manifest::records() const {
  std::vector<ModelRecord> out;
  for (const auto& e : models) {
    if (e.status == "ok") out.push_back({e.id, e.hyperparams, e.train_acc, e.test_acc});
  }
  return out;
}

const ManifestEntry& Manifest::entry(const std::string& id) const {
  for (const auto& e : models) {
    if (e.id == id) return e;
  }
  throw std::invalid_argument("manifest has no model '" + id + "'");
}

json manifest_to_json(const Manifest& manifest) {
  json models = json::array();
  for (const auto& e : manifest.models) {
    json aug = {{"level", e.augmentation}};
    if (e.augmentation_perturbation) aug["perturbation"] = *e.augmentation_perturbation;
    json row = {{"id", e.id},
                {"hyperparams", e.hyperparams},
                {"augmentation", aug},
                {"status", e.status},
                {"seed", e.seed},
                {"cell_hash", e.cell_hash}};
    if (e.status == "ok") {
      row["model_checksum"] = e.model_checksum;
      row["train_acc"] = e.train_acc;
      row["test_acc"] = e.test_acc;
      row["gap"] = e.train_acc - e.test_acc;
      row["epochs_run"] = e.epochs_run;
    } else {
      row["error"] = e.error;
    }
    models.push_back(std::move(row));
  }
  return {{"format_version", kManifestVersion}, {"models", models}};
}

Manifest manifest_from_json(const json& doc) {
  if (doc.value("format_version", 0) != kManifestVersion) throw std::invalid_argument("manifest: unsupported format_version");
  Manifest m;
  for (const auto& row : doc.at("models")) {
    ManifestEntry e;
    e.id = row.at("id").get<std::string>();
    e.hyperparams = row.at("hyperparams").get<std::map<std::string, std::string>>();
    e.augmentation = row.at("augmentation").at("level").get<std::string>();
    if (row["augmentation"].contains("perturbation")) {
      e.augmentation_perturbation = row["augmentation"]["perturbation"].get<PerturbationSpec>();
    }
    e.status = row.at("status").get<std::string>();
    e.seed = row.at("seed").get<std::uint64_t>();
    e.cell_hash = row.at("cell_hash").get<std::string>();
    if (e.status == "ok") {
      e.model_checksum = row.at("model_checksum").get<std::string>();
      e.train_acc = row.at("train_acc").get<double>();
      e.test_acc = row.at("test_acc").get<double>();
      e.epochs_run = row.value("epochs_run", 0);
    } else {
      e.error = row.value("error", std::string());
    }
    m.models.push_back(std::move(e));
  }
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return manifest_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed manifest (" + e.what() + ")");
  }
}

LoadedSplits load_splits(const RunPaths& paths) {
  return {read_dataset(paths.train_data()), read_dataset(paths.test_data())};
}

std::vector<int> curve_labels(const RunConfig& config, const CorpusCell& cell, const Dataset& train) {
  if (!config.curves_on_training_labels) return train.labels;
  return training_labels(train.labels, train.num_classes, cell.train);
}

double random_score(std::uint64_t seed, const std::string& model_id) {
  Rng rng = make_rng(seed, {fnv1a64("random"), fnv1a64(model_id)});
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

Network build_network(const RunConfig& config, const CorpusCell& cell, const Shape& input, int num_classes) {
  const std::uint64_t init_seed = derive_seed(cell.seed, {1});
  if (config.model.arch == "convnet") {
    const std::vector<ConvSpec> convs(static_cast<std::size_t>(cell.depth), ConvSpec{config.model.channels, 3, 1});
    const std::vector<int> hidden = {cell.width};
    return make_convnet(input, convs, hidden, num_classes, init_seed);
  }
  const std::vector<int> hidden(static_cast<std::size_t>(cell.depth), cell.width);
  return make_mlp(input, hidden, num_classes, init_seed);
}

int cmd_gen_data(const RunConfig& config, std::ostream& log) {
  const RunPaths paths{config.output_dir};
  const auto& d = config.dataset;
  const std::uint64_t seed = derive_seed(config.seed, {fnv1a64("dataset")});
  const Dataset all = d.kind == "glyphs" ? gen_glyphs(d.num_classes, d.n, d.size, seed)
                                         : gen_blobs(d.num_classes, d.n, d.dims, d.spread, seed);
  const TrainTestSplit split = split_dataset(all, d.test_fraction, derive_seed(seed, {1}));
  write_dataset(paths.train_data(), split.train);
  write_dataset(paths.test_data(), split.test);
  log << "dataset " << d.kind << ": " << split.train.size() << " train / " << split.test.size() << " test samples, shape "
      << all.shape.str() << ", " << d.num_classes << " classes -> " << paths.train_data().parent_path().string() << "\n";
  return kExitOk;
}

int cmd_gen_corpus(const RunConfig& config, std::ostream& log) {
  const RunPaths paths{config.output_dir};
  const LoadedSplits data = load_splits(paths);
  const std::vector<CorpusCell> cells = expand_corpus(config);

  Manifest previous;
  if (std::filesystem::exists(paths.manifest())) {
    try {
      previous = read_manifest(paths.manifest());
    } catch (const std::exception& e) {
      log << "warning: ignoring unreadable manifest (" << e.what() << ")\n";
    }
  }

  std::vector<ManifestEntry> entries(cells.size());
  std::vector<char> reused(cells.size(), 0);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string hash = cell_hash(config, cells[i]);
    for (const auto& e : previous.models) {
      if (e.id != cells[i].id || e.status != "ok" || e.cell_hash != hash) continue;
      const auto model_path = paths.model(e.id);
      if (std::filesystem::exists(model_path) && file_checksum(model_path) == e.model_checksum) {
        entries[i] = e;
        reused[i] = 1;
      }
    }
  }

  parallel_for(cells.size(), [&](std::size_t i) {
    if (reused[i]) return;
    const CorpusCell& cell = cells[i];
    ManifestEntry& e = entries[i];
    e.id = cell.id;
    e.hyperparams = cell.hyperparams;
    e.augmentation = to_string(cell.regime.level);
    if (cell.regime.level != AugmentLevel::none) e.augmentation_perturbation = cell.regime.perturbation;
    e.seed = cell.seed;
    e.cell_hash = cell_hash(config, cell);
    try {
      const Network init = build_network(config, cell, data.train.shape, data.train.num_classes);
      TrainHooks hooks;
      if (cell.regime.level != AugmentLevel::none) {
        hooks.augment = [&](Matrix& batch, Rng& rng) { augment(batch, data.train.shape, cell.regime, rng); };
      }
      TrainResult result = train(init, data.train.inputs, data.train.labels, cell.train, hooks);
      result.network.round_to_float();
      if (!result.network.all_finite()) throw TrainingDiverged("non-finite weights after training");

      Matrix train_inputs = data.train.inputs;
      Rng aug_rng = make_rng(cell.seed, {3});
      augment(train_inputs, data.train.shape, cell.regime, aug_rng);
      e.train_acc = accuracy(result.network, train_inputs, result.labels);
      e.test_acc = accuracy(result.network, data.test.inputs, data.test.labels);
      e.epochs_run = static_cast<int>(result.log.size());

      json hp = json(cell.hyperparams);
      hp["augmentation"] = to_string(cell.regime.level);
      save_model(paths.model(cell.id), {result.network, cell.seed, hp});
      e.model_checksum = file_checksum(paths.model(cell.id));
      e.status = "ok";
    } catch (const std::exception& ex) {
      e.status = "failed";
      e.error = ex.what();
    }
  });

  Manifest manifest{entries};
  write_text_file(paths.manifest(), manifest_to_json(manifest).dump(1) + "\n");

  std::size_t ok = 0, failed = 0, skipped = 0;
  double gap_min = 1.0, gap_max = -1.0, train_min = 1.0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    skipped += reused[i];
    if (entries[i].status != "ok") {
      ++failed;
      log << "cell " << entries[i].id << " failed: " << entries[i].error << "\n";
      continue;
    }
    ++ok;
    const double gap = entries[i].train_acc - entries[i].test_acc;
    gap_min = std::min(gap_min, gap);
    gap_max = std::max(gap_max, gap);
    train_min = std::min(train_min, entries[i].train_acc);
  }
  log << "corpus: " << ok << " trained (" << skipped << " reused), " << failed << " failed";
  if (ok > 0) log << "; gap range [" << gap_min << ", " << gap_max << "], lowest train accuracy " << train_min;
  log << "\n";
  return failed > 0 ? kExitPartial : kExitOk;
}

int cmd_prcurve(const RunConfig& config, std::ostream& log) {
  const RunPaths paths{config.output_dir};
  if (config.perturbations.empty()) throw ConfigError("config lists no perturbations");
  const Manifest manifest = read_manifest(paths.manifest());
  const LoadedSplits data = load_splits(paths);
  const std::vector<CorpusCell> cells = trained_cells(config, manifest, log);
  const std::size_t n_specs = config.perturbations.size();
  parallel_for(cells.size() * n_specs, [&](std::size_t task) {
    const CorpusCell& cell = cells[task / n_specs];
    const PerturbationSpec& spec = config.perturbations[task % n_specs];
    const Network net = load_network(paths, cell.id);
    const Dataset train = with_labels(data.train, curve_labels(config, cell, data.train));
    const PrCurve curve = build_pr_curve(net, train, spec, curve_options(config, curve_seed(config, cell.id, spec)), cell.id);
    write_curve_csv(paths.curve(cell.id, spec), curve);
  });
  log << "wrote " << cells.size() * n_specs << " PR curves to " << (paths.root / "curves").string() << "\n";
  return kExitOk;
}

std::vector<ScoreRow> compute_scores(const RunConfig& config, std::ostream& log) {
  const RunPaths paths{config.output_dir};
  if (config.measures.empty()) throw ConfigError("config lists no measures");
  const Manifest manifest = read_manifest(paths.manifest());
  const std::vector<CorpusCell> cells = trained_cells(config, manifest, log);
  std::vector<MeasureRef> refs;
  bool needs_data = false;
  for (const auto& m : config.measures) {
    refs.push_back(parse_measure(m));
    needs_data = needs_data || refs.back().stat == "aug_subset";
  }
  std::optional<LoadedSplits> data;
  if (needs_data) data = load_splits(paths);

  std::vector<std::vector<std::optional<ScoreRow>>> slots(cells.size(), std::vector<std::optional<ScoreRow>>(refs.size()));
  parallel_for(cells.size(), [&](std::size_t c) {
    const CorpusCell& cell = cells[c];
    for (std::size_t m = 0; m < refs.size(); ++m) {
      const MeasureRef& ref = refs[m];
      const Orientation orientation = measure_orientation(ref);
      double value = 0.0;
      if (ref.stat == "random") {
        value = random_score(config.seed, cell.id);
      } else if (ref.stat == "aug_subset") {
        const PerturbationSpec& spec = spec_for(config, ref);
        const Dataset train = with_labels(data->train, curve_labels(config, cell, data->train));
        value = augmented_subset_accuracy(load_network(paths, cell.id), train, spec, config.invariance.subset_fraction,
                                          derive_seed(curve_seed(config, cell.id, spec), {fnv1a64("aug_subset")}));
      } else {
        const PrCurve curve = read_curve_csv(paths.curve(cell.id, spec_for(config, ref)));
        bool defined = true;
        value = curve_statistic(ref.stat, curve, config, &defined);
        if (!defined) continue;
      }
      slots[c][m] = ScoreRow{cell.id, {config.measures[m], value, orientation}};
    }
  });
  std::vector<ScoreRow> rows;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t m = 0; m < refs.size(); ++m) {
      if (slots[c][m]) {
        rows.push_back(*slots[c][m]);
      } else {
        log << "note: " << config.measures[m] << " is undefined for " << cells[c].id << " (zero denominator); left out\n";
      }
    }
  }
  return rows;
}

int cmd_score(const RunConfig& config, std::ostream& log) {
  const RunPaths paths{config.output_dir};
  const std::vector<ScoreRow> rows = compute_scores(config, log);
  write_text_file(paths.scores(), scores_to_csv(rows));
  log << "wrote " << rows.size() << " scores to " << paths.scores().string() << "\n";
  return kExitOk;
}

std::vector<ScoreRow> combine_scores(const RunConfig& config, std::span<const ScoreRow> rows, std::ostream& log) {
  std::vector<ScoreRow> out(rows.begin(), rows.end());
  for (const auto& text : config.combinations) {
    const CombinationSpec spec = CombinationSpec::parse(text);
    std::vector<std::string> excluded;
    const ScoreMatrix matrix = score_matrix(rows, spec.measures, &excluded);
    for (const auto& id : excluded) log << "note: " << id << " lacks a measure of " << text << "; left out\n";
    const std::vector<double> values = combine(matrix, spec);
    const Orientation orientation = matrix.column(spec.measures.front()).orientation.value_or(Orientation::higher_better);
    for (std::size_t r = 0; r < values.size(); ++r) out.push_back({matrix.model_ids[r], {text, values[r], orientation}});
  }
  return out;
}

int cmd_combine(const RunConfig& config, std::ostream& log) {
  const RunPaths paths{config.output_dir};
  const std::vector<ScoreRow> rows = scores_from_csv(read_text_file(paths.scores()), paths.scores().string());
  const std::vector<ScoreRow> combined = combine_scores(config, rows, log);
  write_text_file(paths.combined_scores(), scores_to_csv(combined));
  log << "added " << config.combinations.size() << " combination column(s) -> " << paths.combined_scores().string()
      << "\n";
  return kExitOk;
}

std::vector<MeasureCmi> evaluate_cmi(std::span<const ModelRecord> records, std::span<const ScoreRow> rows,
                                     std::span<const std::string> measures, const CmiOptions& options) {
  std::vector<MeasureCmi> out(measures.size());
  parallel_for(measures.size(), [&](std::size_t m) {
    std::map<std::string, double> by_model;
    for (const auto& row : rows) {
      if (row.measure.name == measures[m]) by_model[row.model_id] = row.measure.value;
    }
    std::vector<ModelRecord> subset;
    std::vector<double> values, gaps;
    for (const auto& r : records) {
      auto it = by_model.find(r.id);
      if (it == by_model.end()) continue;
      subset.push_back(r);
      values.push_back(it->second);
      gaps.push_back(r.gap());
    }
    if (subset.size() < 2) throw std::runtime_error("measure '" + measures[m] + "' has fewer than two scored models");
    out[m].report = cmi_score(subset, values, options, measures[m]);
    out[m].models = subset.size();
    out[m].kendall_tau_gap = kendall_tau(values, gaps);
  });
  return out;
}

int cmd_cmi(const RunConfig& config, std::ostream& log) {
  const RunPaths paths{config.output_dir};
  const Manifest manifest = read_manifest(paths.manifest());
  const auto score_path = config.combinations.empty() ? paths.scores() : paths.combined_scores();
  const std::vector<ScoreRow> rows = scores_from_csv(read_text_file(score_path), score_path.string());
  std::vector<std::string> measures = config.measures;
  measures.insert(measures.end(), config.combinations.begin(), config.combinations.end());
  const std::vector<ModelRecord> records = manifest.records();
  const std::vector<MeasureCmi> results = evaluate_cmi(records, rows, measures, config.cmi);

  json reports = json::array();
  std::vector<CmiReport> table;
  for (const auto& r : results) {
    json j = to_json(r.report);
    j["models"] = r.models;
    j["kendall_tau_gap"] = r.kendall_tau_gap;
    reports.push_back(std::move(j));
    table.push_back(r.report);
    for (const auto& d : r.report.diagnostics) log << r.report.measure << ": " << d << "\n";
  }
  write_text_file(paths.cmi(), json({{"format_version", 1}, {"models", records.size()}, {"measures", reports}}).dump(1) + "\n");
  const std::string text = format_cmi_table(table, "synthetic");
  write_text_file(paths.cmi_table(), text);
  log << text;
  return kExitOk;
}

InvarianceResult run_invariance(const RunConfig& config, std::ostream& log) {
  const RunPaths paths{config.output_dir};
  const auto& inv = config.invariance;
  if (inv.perturbations.empty()) throw ConfigError("config lists no invariance perturbations");
  const Manifest manifest = read_manifest(paths.manifest());
  const LoadedSplits data = load_splits(paths);
  const std::vector<CorpusCell> cells = trained_cells(config, manifest, log);

  InvarianceResult result;
  for (const auto& spec : inv.perturbations) {
    const std::string pname = to_string(spec.kind);
    Matrix test_inputs = data.test.inputs;
    Rng test_rng = make_rng(config.seed, {fnv1a64("invariance-test"), fnv1a64(spec.label())});
    augment(test_inputs, data.test.shape, {AugmentLevel::full, spec}, test_rng);

    std::vector<const CorpusCell*> members;
    for (const auto& cell : cells) {
      if (cell.regime.level == AugmentLevel::none || cell.regime.perturbation.kind == spec.kind) members.push_back(&cell);
    }
    struct Slot {
      bool qualifies = false;
      ModelRecord record;
      std::map<std::string, double> values;
    };
    std::vector<Slot> slots(members.size());
    parallel_for(members.size(), [&](std::size_t i) {
      const CorpusCell& cell = *members[i];
      const ManifestEntry& entry = manifest.entry(cell.id);
      if (entry.train_acc < inv.train_floor) return;
      const Network net = load_network(paths, cell.id);
      Slot& s = slots[i];
      s.qualifies = true;
      s.record = {cell.id, cell.hyperparams, entry.train_acc, accuracy(net, test_inputs, data.test.labels)};
      const Dataset train = with_labels(data.train, curve_labels(config, cell, data.train));
      const std::uint64_t seed = curve_seed(config, cell.id, spec);
      const PrCurve curve = build_pr_curve(net, train, spec, curve_options(config, seed), cell.id);
      for (const auto& m : inv.measures) {
        if (m == "gi") s.values[m] = gi_score(curve);
        if (m == "mean_pr") s.values[m] = mean_pr_accuracy(curve);
        if (m == "pal") {
          const auto v = pal_score(curve, config.pal_mode);
          if (v) s.values[m] = *v;
        }
        if (m == "aug_subset") {
          s.values[m] = augmented_subset_accuracy(net, train, spec, inv.subset_fraction,
                                                  derive_seed(seed, {fnv1a64("aug_subset")}));
        }
      }
    });

    std::vector<ModelRecord> records;
    std::vector<const Slot*> qualifying;
    std::size_t below_floor = 0;
    std::map<std::string, std::vector<double>> gi_by_level;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (!slots[i].qualifies) {
        ++below_floor;
        continue;
      }
      records.push_back(slots[i].record);
      qualifying.push_back(&slots[i]);
      if (slots[i].values.count("gi")) gi_by_level[to_string(members[i]->regime.level)].push_back(slots[i].values.at("gi"));
      for (const auto& [m, v] : slots[i].values) {
        result.scores.push_back({members[i]->id + "@" + pname,
                                 {m, v, m == "gi" || m == "pal" ? Orientation::lower_better : Orientation::higher_better}});
      }
    }
    if (below_floor > 0) {
      result.diagnostics.push_back(pname + ": " + std::to_string(below_floor) + " model(s) below the train-accuracy floor " +
                                   format_double(inv.train_floor) + " excluded");
    }
    if (static_cast<int>(records.size()) < inv.min_models) {
      throw std::runtime_error("invariance: only " + std::to_string(records.size()) + " models reach train accuracy " +
                               format_double(inv.train_floor) + " for " + pname + " (need " +
                               std::to_string(inv.min_models) + ")");
    }
    for (const auto& [level, values] : gi_by_level) result.mean_gi[pname][level] = mean(values);
    for (const auto& m : inv.measures) {
      std::vector<ModelRecord> recs;
      std::vector<double> values;
      for (const Slot* s : qualifying) {
        auto it = s->values.find(m);
        if (it == s->values.end()) continue;
        recs.push_back(s->record);
        values.push_back(it->second);
      }
      if (recs.size() < 2) {
        result.diagnostics.push_back(pname + ": " + m + " is defined for fewer than two models");
        continue;
      }
      const CmiReport report = cmi_score(recs, values, config.cmi, m);
      for (const auto& d : report.diagnostics) result.diagnostics.push_back(pname + "/" + m + ": " + d);
      result.rows.push_back({pname, m, report.cmi, recs.size()});
    }
    log << "invariance " << pname << ": " << records.size() << " qualifying models\n";
  }
  return result;
}

json to_json(const InvarianceResult& result) {
  json rows = json::array();
  for (const auto& r : result.rows) rows.push_back({{"perturbation", r.perturbation}, {"measure", r.measure}, {"cmi", r.cmi}, {"n", r.n}});
  return {{"format_version", 1}, {"rows", rows}, {"mean_gi", result.mean_gi}, {"diagnostics", result.diagnostics}};
}

std::string format_invariance_table(const InvarianceResult& result) {
  std::vector<std::string> perturbations, measures;
  for (const auto& r : result.rows) {
    if (std::find(perturbations.begin(), perturbations.end(), r.perturbation) == perturbations.end()) perturbations.push_back(r.perturbation);
    if (std::find(measures.begin(), measures.end(), r.measure) == measures.end()) measures.push_back(r.measure);
  }
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-12s", "measure");
  out << buf;
  for (const auto& p : perturbations) {
    std::snprintf(buf, sizeof buf, "  %18s", p.c_str());
    out << buf;
  }
  out << "\n" << std::string(12 + 20 * perturbations.size(), '-') << "\n";
  for (const auto& m : measures) {
    std::snprintf(buf, sizeof buf, "%-12s", m.c_str());
    out << buf;
    for (const auto& p : perturbations) {
      std::string cell = "-";
      for (const auto& r : result.rows) {
        if (r.perturbation == p && r.measure == m) {
          std::snprintf(buf, sizeof buf, "%.2f (n=%zu)", 100.0 * r.cmi, r.n);
          cell = buf;
        }
      }
      std::snprintf(buf, sizeof buf, "  %18s", cell.c_str());
      out << buf;
    }
    out << "\n";
  }
  for (const auto& [p, levels] : result.mean_gi) {
    out << "mean gi, " << p << ":";
    for (const auto& [level, v] : levels) {
      std::snprintf(buf, sizeof buf, " %s=%.4f", level.c_str(), v);
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

int cmd_invariance(const RunConfig& config, std::ostream& log) {
  const RunPaths paths{config.output_dir};
  InvarianceResult result;
  try {
    result = run_invariance(config, log);
  } catch (const ConfigError&) {
    throw;
  } catch (const MissingPrerequisite&) {
    throw;
  } catch (const std::runtime_error& e) {
    if (std::string(e.what()).rfind("invariance: only", 0) == 0) {
      log << "error: " << e.what() << "\n";
      return kExitPartial;
    }
    throw;
  }
  write_text_file(paths.invariance(), to_json(result).dump(1) + "\n");
  write_text_file(paths.invariance_scores(), scores_to_csv(result.scores));
  const std::string table = format_invariance_table(result);
  write_text_file(paths.invariance_table(), table);
  for (const auto& d : result.diagnostics) log << d << "\n";
  log << table;
  return kExitOk;
}

TimingResult run_timing(const RunConfig& config, std::ostream& log) {
  const RunPaths paths{config.output_dir};
  const Manifest manifest = read_manifest(paths.manifest());
  const LoadedSplits data = load_splits(paths);
  const std::vector<CorpusCell> cells = trained_cells(config, manifest, log);
  const MeasureRef ref = parse_measure(config.timing.measure);
  const PerturbationSpec& spec = spec_for(config, ref);

  const CorpusCell* target = &cells.front();
  if (!config.timing.model_id.empty()) {
    auto it = std::find_if(cells.begin(), cells.end(), [&](const CorpusCell& c) { return c.id == config.timing.model_id; });
    if (it == cells.end()) throw ConfigError("timing.model_id '" + config.timing.model_id + "' is not a trained model");
    target = &*it;
  }
  const Network net = load_network(paths, target->id);
  const Dataset train = with_labels(data.train, curve_labels(config, *target, data.train));

  TimingResult result;
  for (int nb : config.timing.n_batches) {
    std::vector<double> seconds, values;
    for (int r = 0; r < config.timing.repeats; ++r) {
      const std::uint64_t seed = derive_seed(config.seed, {fnv1a64("timing"), static_cast<std::uint64_t>(nb),
                                                           static_cast<std::uint64_t>(r)});
      const auto start = std::chrono::steady_clock::now();
      const PrCurve curve = build_pr_curve(net, train, spec, curve_options(config, seed, nb), target->id);
      const auto stop = std::chrono::steady_clock::now();
      seconds.push_back(std::chrono::duration<double>(stop - start).count());
      values.push_back(curve_statistic(ref.stat, curve, config, nullptr));
    }
    result.timing.push_back({nb, mean(seconds), stddev(seconds), config.timing.measure});
    result.sensitivity.push_back({nb, config.timing.measure, config.timing.repeats, mean(values), stddev(values)});
    log << "n_b=" << nb << ": " << mean(seconds) << " s per curve, " << config.timing.measure << " std "
        << stddev(values) << "\n";
  }

  if (config.timing.cmi_repeats > 0) {
    const std::vector<ModelRecord> all_records = manifest.records();
    for (int nb : config.timing.n_batches) {
      std::vector<double> cmis;
      for (int r = 0; r < config.timing.cmi_repeats; ++r) {
        std::vector<double> values(cells.size());
        parallel_for(cells.size(), [&](std::size_t i) {
          const Network model = load_network(paths, cells[i].id);
          const Dataset labelled = with_labels(data.train, curve_labels(config, cells[i], data.train));
          const std::uint64_t seed = derive_seed(config.seed, {fnv1a64("timing-cmi"), static_cast<std::uint64_t>(nb),
                                                               static_cast<std::uint64_t>(r), fnv1a64(cells[i].id)});
          const PrCurve curve = build_pr_curve(model, labelled, spec, curve_options(config, seed, nb), cells[i].id);
          values[i] = curve_statistic(ref.stat, curve, config, nullptr);
        });
        std::vector<ModelRecord> records;
        for (const auto& cell : cells) {
          records.push_back({cell.id, cell.hyperparams, manifest.entry(cell.id).train_acc, manifest.entry(cell.id).test_acc});
        }
        cmis.push_back(cmi_score(records, values, config.cmi, config.timing.measure).cmi);
      }
      result.sensitivity.push_back({nb, "cmi_" + config.timing.measure, config.timing.cmi_repeats, mean(cmis), stddev(cmis)});
      log << "n_b=" << nb << ": CMI std " << stddev(cmis) << "\n";
    }
  }
  return result;
}

std::string timing_to_csv(std::span<const TimingRow> rows) {
  std::ostringstream out;
  out << "n_b,mean_seconds,std_seconds,measure\n";
  for (const auto& r : rows) {
    out << r.n_batches << ',' << format_double(r.mean_seconds) << ',' << format_double(r.std_seconds) << ',' << r.measure
        << '\n';
  }
  return out.str();
}

std::string sensitivity_to_csv(std::span<const SensitivityRow> rows) {
  std::ostringstream out;
  out << "n_b,measure,repeats,mean_value,std_value\n";
  for (const auto& r : rows) {
    out << r.n_batches << ',' << r.measure << ',' << r.repeats << ',' << format_double(r.mean_value) << ','
        << format_double(r.std_value) << '\n';
  }
  return out.str();
}

int cmd_timing(const RunConfig& config, std::ostream& log) {
  const RunPaths paths{config.output_dir};
  const TimingResult result = run_timing(config, log);
  write_text_file(paths.timing(), timing_to_csv(result.timing));
  write_text_file(paths.sensitivity(), sensitivity_to_csv(result.sensitivity));
  return kExitOk;
}

int cmd_plot(std::span<const std::filesystem::path> curve_paths, const std::filesystem::path& output, std::ostream& log) {
  if (curve_paths.empty()) throw ConfigError("plot: need at least one curve file");
  std::vector<PrCurve> curves;
  for (const auto& p : curve_paths) curves.push_back(read_curve_csv(p));
  write_text_file(output, render_curves_svg(curves));
  log << "wrote " << output.string() << "\n";
  return kExitOk;
}

namespace {

json csv_rows(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  json rows = json::array();
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split(line, ',');
    if (header.empty()) {
      header = fields;
      continue;
    }
    json row = json::object();
    for (std::size_t i = 0; i < header.size() && i < fields.size(); ++i) row[header[i]] = fields[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

int cmd_report(const RunConfig& config, std::ostream& log) {
  const RunPaths paths{config.output_dir};
  const Manifest manifest = read_manifest(paths.manifest());
  // the report lives inside output_dir, so the path itself is left out to keep copies comparable
  json embedded = config_to_json(config);
  embedded.erase("output_dir");
  json report = {{"format_version", 1}, {"config", embedded}};

  std::size_t ok = 0, failed = 0;
  double gap_min = 1.0, gap_max = -1.0, train_min = 1.0;
  for (const auto& e : manifest.models) {
    if (e.status != "ok") {
      ++failed;
      continue;
    }
    ++ok;
    gap_min = std::min(gap_min, e.train_acc - e.test_acc);
    gap_max = std::max(gap_max, e.train_acc - e.test_acc);
    train_min = std::min(train_min, e.train_acc);
  }
  report["corpus"] = {{"models", ok}, {"failed", failed}, {"manifest", manifest_to_json(manifest)}};
  if (ok > 0) {
    report["corpus"]["gap_min"] = gap_min;
    report["corpus"]["gap_max"] = gap_max;
    report["corpus"]["train_acc_min"] = train_min;
  }

  std::ostringstream md;
  md << "# prgauge run report\n\n";
  md << "Output directory: `" << config.output_dir.generic_string() << "`, seed " << config.seed << ".\n\n";
  md << "## Corpus\n\n" << ok << " trained models, " << failed << " failed.";
  if (ok > 0) md << " Gap range " << format_double(gap_min) << " to " << format_double(gap_max) << "; lowest train accuracy " << format_double(train_min) << ".";
  md << "\n\n";

  const auto score_path = std::filesystem::exists(paths.combined_scores()) ? paths.combined_scores() : paths.scores();
  if (std::filesystem::exists(score_path)) {
    report["scores"] = scores_to_json(scores_from_csv(read_text_file(score_path), score_path.string()));
  }
  if (std::filesystem::exists(paths.cmi())) {
    report["cmi"] = json::parse(read_text_file(paths.cmi()));
    md << "## CMI (percent)\n\n```\n" << read_text_file(paths.cmi_table()) << "```\n\n";
    md << "| measure | models | Kendall tau vs gap |\n|---|---|---|\n";
    for (const auto& m : report["cmi"]["measures"]) {
      md << "| " << m["measure"].get<std::string>() << " | " << m["models"].get<std::size_t>() << " | "
         << format_double(m["kendall_tau_gap"].get<double>()) << " |\n";
    }
    md << "\n";
  }
  if (std::filesystem::exists(paths.invariance())) {
    report["invariance"] = json::parse(read_text_file(paths.invariance()));
    md << "## Invariance (CMI percent, n models)\n\n```\n" << read_text_file(paths.invariance_table()) << "```\n\n";
  }
  if (std::filesystem::exists(paths.sensitivity())) {
    report["sensitivity"] = csv_rows(read_text_file(paths.sensitivity()));
    md << "## Sensitivity to the number of batches\n\n```\n" << read_text_file(paths.sensitivity()) << "```\n\n";
  }
  if (std::filesystem::exists(paths.timing())) {
    // wall-clock numbers stay out of report.json so it remains reproducible
    md << "## Timing (wall clock)\n\n```\n" << read_text_file(paths.timing()) << "```\n";
  }
  write_text_file(paths.report_json(), report.dump(1) + "\n");
  write_text_file(paths.report_md(), md.str());
  log << "wrote " << paths.report_json().string() << " and " << paths.report_md().string() << "\n";
  return kExitOk;
}

}  // namespace prgauge
