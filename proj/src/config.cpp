#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "prgauge/experiment.hpp"
#include "prgauge/io.hpp"
#include "prgauge/random.hpp"

namespace prgauge {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("config: unknown field '" + where + "." + key + "'");
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: field '" + where + "." + key + "' has the wrong type (" + e.what() + ")");
  }
}

std::vector<PerturbationSpec> read_specs(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError("config: '" + where + "' must be an array of perturbation specs");
  std::vector<PerturbationSpec> out;
  for (const auto& entry : j) {
    try {
      out.push_back(entry.get<PerturbationSpec>());
      out.back().validate();
    } catch (const std::exception& e) {
      throw ConfigError("config: " + where + ": " + e.what());
    }
  }
  return out;
}

json specs_to_json(const std::vector<PerturbationSpec>& specs) {
  json out = json::array();
  for (const auto& s : specs) out.push_back(s);
  return out;
}

constexpr const char* kAxes[] = {"batch_size", "depth", "epochs", "label_noise", "learning_rate", "optimizer",
                                 "weight_decay", "width"};

const std::pair<const char*, PerturbationKind> kKindTokens[] = {
    {"intra", PerturbationKind::mixup_intra},         {"inter", PerturbationKind::mixup_inter},
    {"noise", PerturbationKind::gaussian_noise},      {"rotate", PerturbationKind::rotate},
    {"translate_h", PerturbationKind::translate_h},   {"translate_v", PerturbationKind::translate_v},
    {"color_jitter", PerturbationKind::color_jitter},
};

const PerturbationSpec* find_spec(const std::vector<PerturbationSpec>& specs, PerturbationKind kind, int layer) {
  for (const auto& s : specs) {
    if (s.kind == kind && s.layer == layer) return &s;
  }
  return nullptr;
}

}  // namespace

RunConfig config_from_json(const json& doc) {
  check_keys(doc, "config",
             {"format_version", "seed", "output_dir", "dataset", "model", "corpus", "perturbations", "prcurve",
              "curves_on_training_labels", "measures", "combinations", "pal_mode", "mixup_alpha", "cmi", "invariance",
              "timing", "description"});
  RunConfig c;
  read(doc, "format_version", c.format_version, "config");
  if (c.format_version != kConfigFormatVersion) {
    throw ConfigError("config: unsupported format_version " + std::to_string(c.format_version));
  }
  if (!doc.contains("seed")) throw ConfigError("config: 'seed' is required");
  read(doc, "seed", c.seed, "config");
  std::string output_dir = c.output_dir.string();
  read(doc, "output_dir", output_dir, "config");
  c.output_dir = output_dir;

  if (doc.contains("dataset")) {
    const json& d = doc["dataset"];
    check_keys(d, "dataset", {"kind", "num_classes", "n", "dims", "spread", "size", "test_fraction"});
    read(d, "kind", c.dataset.kind, "dataset");
    read(d, "num_classes", c.dataset.num_classes, "dataset");
    read(d, "n", c.dataset.n, "dataset");
    read(d, "dims", c.dataset.dims, "dataset");
    read(d, "spread", c.dataset.spread, "dataset");
    read(d, "size", c.dataset.size, "dataset");
    read(d, "test_fraction", c.dataset.test_fraction, "dataset");
  }
  if (doc.contains("model")) {
    const json& m = doc["model"];
    check_keys(m, "model", {"arch", "width", "channels"});
    read(m, "arch", c.model.arch, "model");
    read(m, "width", c.model.width, "model");
    read(m, "channels", c.model.channels, "model");
  }
  c.corpus.defaults.width = c.model.width;
  if (doc.contains("corpus")) {
    const json& k = doc["corpus"];
    check_keys(k, "corpus", {"axes", "defaults", "augmentation"});
    if (k.contains("axes")) {
      if (!k["axes"].is_object()) throw ConfigError("config: 'corpus.axes' must be an object");
      for (const auto& [axis, values] : k["axes"].items()) {
        if (std::none_of(std::begin(kAxes), std::end(kAxes), [&](const char* a) { return axis == a; })) {
          throw ConfigError("config: unknown corpus axis '" + axis + "'");
        }
        if (!values.is_array() || values.empty()) {
          throw ConfigError("config: corpus axis '" + axis + "' needs a non-empty array of values");
        }
        c.corpus.axes[axis] = values.get<std::vector<json>>();
      }
    }
    if (k.contains("defaults")) {
      const json& d = k["defaults"];
      check_keys(d, "corpus.defaults", {"depth", "width", "learning_rate", "batch_size", "epochs", "label_noise",
                                        "weight_decay", "optimizer"});
      auto& t = c.corpus.defaults;
      read(d, "depth", t.depth, "corpus.defaults");
      read(d, "width", t.width, "corpus.defaults");
      read(d, "learning_rate", t.learning_rate, "corpus.defaults");
      read(d, "batch_size", t.batch_size, "corpus.defaults");
      read(d, "epochs", t.epochs, "corpus.defaults");
      read(d, "label_noise", t.label_noise, "corpus.defaults");
      read(d, "weight_decay", t.weight_decay, "corpus.defaults");
      std::string opt = to_string(t.optimizer);
      read(d, "optimizer", opt, "corpus.defaults");
      try {
        t.optimizer = optimizer_from_string(opt);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
    }
    if (k.contains("augmentation")) {
      const json& a = k["augmentation"];
      check_keys(a, "corpus.augmentation", {"levels", "perturbations"});
      std::vector<std::string> levels;
      read(a, "levels", levels, "corpus.augmentation");
      for (const auto& l : levels) {
        try {
          c.corpus.augmentation_levels.push_back(augment_level_from_string(l));
        } catch (const std::exception& e) {
          throw ConfigError(std::string("config: ") + e.what());
        }
      }
      if (a.contains("perturbations")) {
        c.corpus.augmentation_perturbations = read_specs(a["perturbations"], "corpus.augmentation.perturbations");
      }
    }
  }
  if (doc.contains("perturbations")) c.perturbations = read_specs(doc["perturbations"], "perturbations");
  if (doc.contains("prcurve")) {
    const json& p = doc["prcurve"];
    check_keys(p, "prcurve", {"n_points", "n_batches", "batch_size"});
    read(p, "n_points", c.prcurve.n_points, "prcurve");
    read(p, "n_batches", c.prcurve.n_batches, "prcurve");
    read(p, "batch_size", c.prcurve.batch_size, "prcurve");
  }
  read(doc, "curves_on_training_labels", c.curves_on_training_labels, "config");
  read(doc, "measures", c.measures, "config");
  read(doc, "combinations", c.combinations, "config");
  std::string pal_mode = to_string(c.pal_mode);
  read(doc, "pal_mode", pal_mode, "config");
  try {
    c.pal_mode = pal_mode_from_string(pal_mode);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  read(doc, "mixup_alpha", c.mixup_alpha, "config");
  if (doc.contains("cmi")) {
    check_keys(doc["cmi"], "cmi", {"max_subset_size"});
    read(doc["cmi"], "max_subset_size", c.cmi.max_subset_size, "cmi");
  }
  if (doc.contains("invariance")) {
    const json& v = doc["invariance"];
    check_keys(v, "invariance", {"perturbations", "measures", "train_floor", "min_models", "subset_fraction"});
    if (v.contains("perturbations")) c.invariance.perturbations = read_specs(v["perturbations"], "invariance.perturbations");
    read(v, "measures", c.invariance.measures, "invariance");
    read(v, "train_floor", c.invariance.train_floor, "invariance");
    read(v, "min_models", c.invariance.min_models, "invariance");
    read(v, "subset_fraction", c.invariance.subset_fraction, "invariance");
  }
  if (doc.contains("timing")) {
    const json& t = doc["timing"];
    check_keys(t, "timing", {"n_batches", "repeats", "measure", "model_id", "cmi_repeats"});
    read(t, "n_batches", c.timing.n_batches, "timing");
    read(t, "repeats", c.timing.repeats, "timing");
    read(t, "measure", c.timing.measure, "timing");
    read(t, "model_id", c.timing.model_id, "timing");
    read(t, "cmi_repeats", c.timing.cmi_repeats, "timing");
  }
  validate_config(c);
  return c;
}

json config_to_json(const RunConfig& c) {
  json axes = json::object();
  for (const auto& [axis, values] : c.corpus.axes) axes[axis] = values;
  std::vector<std::string> levels;
  for (auto l : c.corpus.augmentation_levels) levels.push_back(to_string(l));
  const auto& t = c.corpus.defaults;
  return {{"format_version", c.format_version},
          {"seed", c.seed},
          {"output_dir", c.output_dir.generic_string()},
          {"dataset",
           {{"kind", c.dataset.kind},
            {"num_classes", c.dataset.num_classes},
            {"n", c.dataset.n},
            {"dims", c.dataset.dims},
            {"spread", c.dataset.spread},
            {"size", c.dataset.size},
            {"test_fraction", c.dataset.test_fraction}}},
          {"model", {{"arch", c.model.arch}, {"width", c.model.width}, {"channels", c.model.channels}}},
          {"corpus",
           {{"axes", axes},
            {"defaults",
             {{"depth", t.depth},
              {"width", t.width},
              {"learning_rate", t.learning_rate},
              {"batch_size", t.batch_size},
              {"epochs", t.epochs},
              {"label_noise", t.label_noise},
              {"weight_decay", t.weight_decay},
              {"optimizer", to_string(t.optimizer)}}},
            {"augmentation", {{"levels", levels}, {"perturbations", specs_to_json(c.corpus.augmentation_perturbations)}}}}},
          {"perturbations", specs_to_json(c.perturbations)},
          {"prcurve",
           {{"n_points", c.prcurve.n_points}, {"n_batches", c.prcurve.n_batches}, {"batch_size", c.prcurve.batch_size}}},
          {"curves_on_training_labels", c.curves_on_training_labels},
          {"measures", c.measures},
          {"combinations", c.combinations},
          {"pal_mode", to_string(c.pal_mode)},
          {"mixup_alpha", c.mixup_alpha},
          {"cmi", {{"max_subset_size", c.cmi.max_subset_size}}},
          {"invariance",
           {{"perturbations", specs_to_json(c.invariance.perturbations)},
            {"measures", c.invariance.measures},
            {"train_floor", c.invariance.train_floor},
            {"min_models", c.invariance.min_models},
            {"subset_fraction", c.invariance.subset_fraction}}},
          {"timing",
           {{"n_batches", c.timing.n_batches},
            {"repeats", c.timing.repeats},
            {"measure", c.timing.measure},
            {"model_id", c.timing.model_id},
            {"cmi_repeats", c.timing.cmi_repeats}}}};
}

RunConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

MeasureRef parse_measure(const std::string& name) {
  MeasureRef ref;
  if (name == "random") {
    ref.stat = "random";
    return ref;
  }
  auto parse_layer = [&](const std::string& text) {
    if (text.empty() || !std::all_of(text.begin(), text.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
      throw ConfigError("unknown measure '" + name + "'");
    }
    return std::stoi(text);
  };
  if (name.rfind("mixup_l", 0) == 0) {
    ref.stat = "mixup";
    ref.kind = PerturbationKind::mixup_intra;
    ref.layer = parse_layer(name.substr(7));
    return ref;
  }
  for (const char* prefix : {"mean_pr_", "aug_subset_", "gi_", "pal_"}) {
    const std::string p = prefix;
    if (name.rfind(p, 0) != 0) continue;
    const std::string rest = name.substr(p.size());
    const auto pos = rest.rfind("_l");
    if (pos == std::string::npos) break;
    const std::string token = rest.substr(0, pos);
    for (const auto& [t, kind] : kKindTokens) {
      if (token == t) ref.kind = kind;
    }
    if (!ref.kind) break;
    ref.stat = p.substr(0, p.size() - 1);
    ref.layer = parse_layer(rest.substr(pos + 2));
    return ref;
  }
  throw ConfigError("unknown measure '" + name + "'");
}

Orientation measure_orientation(const MeasureRef& ref) {
  return ref.stat == "gi" || ref.stat == "pal" ? Orientation::lower_better : Orientation::higher_better;
}

void validate_config(const RunConfig& c) {
  const auto& d = c.dataset;
  if (d.kind != "blobs" && d.kind != "glyphs") throw ConfigError("config: dataset.kind must be 'blobs' or 'glyphs'");
  if (d.num_classes < 2) throw ConfigError("config: dataset.num_classes must be >= 2");
  if (d.n < 4) throw ConfigError("config: dataset.n must be >= 4");
  if (!(d.test_fraction > 0.0 && d.test_fraction < 1.0)) throw ConfigError("config: dataset.test_fraction must lie in (0, 1)");
  if (c.model.arch != "mlp" && c.model.arch != "convnet") throw ConfigError("config: model.arch must be 'mlp' or 'convnet'");
  if (c.model.arch == "convnet" && d.kind != "glyphs") throw ConfigError("config: convnet needs an image dataset");
  if (c.prcurve.n_points < 2 || c.prcurve.n_batches < 1 || c.prcurve.batch_size < 2) {
    throw ConfigError("config: prcurve needs n_points >= 2, n_batches >= 1, batch_size >= 2");
  }
  if (c.cmi.max_subset_size < 1) throw ConfigError("config: cmi.max_subset_size must be >= 1");

  const bool images = d.kind == "glyphs";
  auto check_modality = [&](const PerturbationSpec& s, const std::string& where) {
    if (s.requires_image() && !images) {
      throw ConfigError("config: " + where + ": " + to_string(s.kind) + " needs an image dataset");
    }
  };
  std::set<std::string> labels;
  for (const auto& s : c.perturbations) {
    check_modality(s, "perturbations");
    if (!labels.insert(s.label()).second) throw ConfigError("config: duplicate perturbation '" + s.label() + "'");
  }
  for (const auto& s : c.corpus.augmentation_perturbations) {
    check_modality(s, "corpus.augmentation");
    if (s.is_mixup()) throw ConfigError("config: corpus.augmentation: mixup is not a per-sample augmentation");
  }
  const bool any_augmented = std::any_of(c.corpus.augmentation_levels.begin(), c.corpus.augmentation_levels.end(),
                                         [](AugmentLevel l) { return l != AugmentLevel::none; });
  if (any_augmented && c.corpus.augmentation_perturbations.empty()) {
    throw ConfigError("config: corpus.augmentation lists levels but no perturbations");
  }

  std::set<std::string> measures;
  for (const auto& name : c.measures) {
    const MeasureRef ref = parse_measure(name);
    if (!measures.insert(name).second) throw ConfigError("config: duplicate measure '" + name + "'");
    if (!ref.kind) continue;
    if (ref.stat == "aug_subset") {
      PerturbationSpec probe{*ref.kind, 0.0, 0.5, ref.layer, RangeClosure::closed};
      if (probe.is_mixup()) throw ConfigError("config: measure '" + name + "' needs a per-sample perturbation");
    }
    const PerturbationSpec* spec = find_spec(c.perturbations, *ref.kind, ref.layer);
    if (!spec) {
      throw ConfigError("config: measure '" + name + "' needs a '" + to_string(*ref.kind) + "' perturbation at layer " +
                        std::to_string(ref.layer));
    }
    if (ref.stat == "pal" && spec->signed_range()) {
      throw ConfigError("config: measure '" + name + "': Pal is not defined for signed-range perturbations");
    }
    if (ref.stat == "mixup") {
      const auto grid = spec->grid(c.prcurve.n_points);
      if (std::none_of(grid.begin(), grid.end(), [&](double a) { return std::abs(a - c.mixup_alpha) <= 1e-12; })) {
        throw ConfigError("config: mixup_alpha " + format_double(c.mixup_alpha) + " is not on the intra-class grid");
      }
    }
  }
  for (const auto& text : c.combinations) {
    CombinationSpec spec;
    try {
      spec = CombinationSpec::parse(text);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (spec.label() != text) throw ConfigError("config: combination '" + text + "' is not in canonical form");
    for (const auto& m : spec.measures) {
      if (!measures.count(m)) throw ConfigError("config: combination '" + text + "' uses unlisted measure '" + m + "'");
    }
    if ((spec.method == CombineMethod::prod || spec.method == CombineMethod::prod_avg) && spec.measures.size() != 2) {
      throw ConfigError("config: combination '" + text + "' takes exactly two measures");
    }
  }

  const MeasureRef timing = parse_measure(c.timing.measure);
  if (timing.stat != "gi" && timing.stat != "pal" && timing.stat != "mean_pr" && timing.stat != "mixup") {
    throw ConfigError("config: timing.measure must be read from a PR curve");
  }
  if (c.timing.repeats < 1 || c.timing.n_batches.empty() || c.timing.cmi_repeats < 0) {
    throw ConfigError("config: timing needs repeats >= 1, cmi_repeats >= 0 and at least one n_batches value");
  }
  for (int nb : c.timing.n_batches) {
    if (nb < 1) throw ConfigError("config: timing.n_batches values must be >= 1");
  }

  for (const auto& s : c.invariance.perturbations) check_modality(s, "invariance.perturbations");
  for (const auto& m : c.invariance.measures) {
    if (m != "aug_subset" && m != "mean_pr" && m != "gi" && m != "pal") {
      throw ConfigError("config: unknown invariance measure '" + m + "'");
    }
    if (m == "pal") {
      for (const auto& s : c.invariance.perturbations) {
        if (s.signed_range()) {
          throw ConfigError("config: invariance: Pal is refused for " + s.label() +
                            ", whose range spans both signs of the magnitude");
        }
      }
    }
  }
  if (!(c.invariance.train_floor >= 0.0 && c.invariance.train_floor <= 1.0)) {
    throw ConfigError("config: invariance.train_floor must lie in [0, 1]");
  }
  if (!(c.invariance.subset_fraction > 0.0 && c.invariance.subset_fraction <= 1.0)) {
    throw ConfigError("config: invariance.subset_fraction must lie in (0, 1]");
  }
  if (c.invariance.min_models < 2) throw ConfigError("config: invariance.min_models must be >= 2");
}

std::vector<CorpusCell> expand_corpus(const RunConfig& c) {
  std::vector<std::pair<std::string, std::vector<json>>> axes(c.corpus.axes.begin(), c.corpus.axes.end());
  std::size_t total = 1;
  for (const auto& [axis, values] : axes) total *= values.size();

  std::vector<AugmentLevel> levels = c.corpus.augmentation_levels;
  if (levels.empty()) levels = {AugmentLevel::none};

  std::vector<CorpusCell> cells;
  for (std::size_t index = 0; index < total; ++index) {
    CorpusCell base;
    TrainDefaults t = c.corpus.defaults;
    std::size_t rest = index;
    std::vector<std::size_t> picks(axes.size());
    for (std::size_t a = axes.size(); a-- > 0;) {
      picks[a] = rest % axes[a].second.size();
      rest /= axes[a].second.size();
    }
    std::string key;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const std::string& axis = axes[a].first;
      const json& value = axes[a].second[picks[a]];
      base.hyperparams[axis] = value.is_string() ? value.get<std::string>() : value.dump();
      key += axis + "=" + base.hyperparams[axis] + ";";
      try {
        if (axis == "depth") t.depth = value.get<int>();
        if (axis == "width") t.width = value.get<int>();
        if (axis == "learning_rate") t.learning_rate = value.get<double>();
        if (axis == "batch_size") t.batch_size = value.get<int>();
        if (axis == "epochs") t.epochs = value.get<int>();
        if (axis == "label_noise") t.label_noise = value.get<double>();
        if (axis == "weight_decay") t.weight_decay = value.get<double>();
        if (axis == "optimizer") t.optimizer = optimizer_from_string(value.get<std::string>());
      } catch (const std::exception& e) {
        throw ConfigError("config: corpus axis '" + axis + "' value " + value.dump() + ": " + e.what());
      }
    }
    if (t.depth < 1 || t.width < 1) throw ConfigError("config: depth and width must be >= 1");
    base.seed = derive_seed(c.seed, {fnv1a64(key)});
    base.depth = t.depth;
    base.width = t.width;
    base.train = {t.optimizer, t.learning_rate, t.batch_size, t.epochs, derive_seed(base.seed, {2}), t.label_noise,
                  t.weight_decay};
    try {
      base.train.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }

    for (AugmentLevel level : levels) {
      if (level == AugmentLevel::none) {
        cells.push_back(base);
        continue;
      }
      for (const auto& p : c.corpus.augmentation_perturbations) {
        CorpusCell cell = base;
        cell.regime = {level, p};
        cells.push_back(std::move(cell));
      }
    }
  }
  // Ids come from a seeded permutation so that the canonical lower-id-first pair
  // orientation carries no information about the grid position.
  std::vector<std::size_t> numbers(cells.size());
  std::iota(numbers.begin(), numbers.end(), 0);
  Rng rng = make_rng(c.seed, {fnv1a64("model-ids")});
  std::shuffle(numbers.begin(), numbers.end(), rng);
  const int digits = std::max(3, static_cast<int>(std::to_string(cells.size() - 1).size()));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "m%0*zu", digits, numbers[i]);
    cells[i].id = id;
  }
  std::sort(cells.begin(), cells.end(), [](const CorpusCell& a, const CorpusCell& b) { return a.id < b.id; });
  return cells;
}

}  // namespace prgauge
