#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "prgauge/experiment.hpp"
#include "prgauge/io.hpp"
#include "prgauge/plot.hpp"
#include "support/cmi_oracle.hpp"

using namespace prgauge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "prgauge_test_experiment" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json tiny_config_json() {
  return json::parse(R"({
    "format_version": 1,
    "seed": 99,
    "output_dir": "unused",
    "dataset": {"kind": "blobs", "num_classes": 3, "n": 180, "dims": 4, "spread": 0.8, "test_fraction": 0.5},
    "model": {"arch": "mlp", "width": 12},
    "corpus": {"axes": {"depth": [1, 2], "label_noise": [0.0, 0.3]},
               "defaults": {"batch_size": 16, "epochs": 8, "learning_rate": 0.01}},
    "perturbations": [{"kind": "mixup_intra", "min": 0.0, "max": 0.5, "layer": 0, "closure": "closed"}],
    "prcurve": {"n_points": 11, "n_batches": 2, "batch_size": 16},
    "measures": ["gi_intra_l0", "pal_intra_l0", "mixup_l0", "random"],
    "combinations": ["avg_rank:gi_intra_l0+pal_intra_l0"],
    "timing": {"n_batches": [1, 2], "repeats": 2, "measure": "gi_intra_l0"}
  })");
}

RunConfig tiny_config(const fs::path& out) {
  RunConfig c = config_from_json(tiny_config_json());
  c.output_dir = out;
  return c;
}

void run_pipeline(const RunConfig& c) {
  std::ostringstream log;
  ASSERT_EQ(cmd_gen_data(c, log), kExitOk);
  ASSERT_EQ(cmd_gen_corpus(c, log), kExitOk);
  ASSERT_EQ(cmd_prcurve(c, log), kExitOk);
  ASSERT_EQ(cmd_score(c, log), kExitOk);
  ASSERT_EQ(cmd_combine(c, log), kExitOk);
  ASSERT_EQ(cmd_cmi(c, log), kExitOk);
  ASSERT_EQ(cmd_timing(c, log), kExitOk);
  ASSERT_EQ(cmd_report(c, log), kExitOk);
}

std::vector<fs::path> artifacts(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".csv" || ext == ".json") && e.path().filename() != "timing.csv") {
      out.push_back(fs::relative(e.path(), root));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PRGAUGE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_json(const fs::path& path, const json& doc) { write_text_file(path, doc.dump(2)); }

// Minimal XML well-formedness: balanced tags, quoted attributes, single root.
bool well_formed_xml(const std::string& text, std::string* why) {
  std::vector<std::string> stack;
  std::size_t pos = 0;
  int roots = 0;
  while ((pos = text.find('<', pos)) != std::string::npos) {
    const std::size_t end = text.find('>', pos);
    if (end == std::string::npos) return *why = "unterminated tag", false;
    std::string tag = text.substr(pos + 1, end - pos - 1);
    pos = end + 1;
    if (tag.starts_with("?") || tag.starts_with("!")) continue;
    if (std::count(tag.begin(), tag.end(), '"') % 2 != 0) return *why = "unbalanced quotes in <" + tag + ">", false;
    if (tag.starts_with("/")) {
      const std::string name = tag.substr(1);
      if (stack.empty() || stack.back() != name) return *why = "mismatched </" + name + ">", false;
      stack.pop_back();
      continue;
    }
    const std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
    if (stack.empty()) ++roots;
    if (!tag.ends_with("/")) stack.push_back(name);
  }
  if (!stack.empty()) return *why = "unclosed <" + stack.back() + ">", false;
  if (roots != 1) return *why = "expected one root element", false;
  return true;
}

}  // namespace

TEST(Config, RejectsBadDocuments) {
  auto expect_error = [](json doc) { EXPECT_THROW(config_from_json(doc), ConfigError) << doc.dump(); };
  json doc = tiny_config_json();
  doc["colour"] = "blue";
  expect_error(doc);
  doc = tiny_config_json();
  doc.erase("seed");
  expect_error(doc);
  doc = tiny_config_json();
  doc["measures"].push_back("gi_rotate_l0");
  expect_error(doc);
  doc = tiny_config_json();
  doc["combinations"] = {"avg_rank:gi_intra_l0+mixup_l9"};
  expect_error(doc);
  doc = tiny_config_json();
  doc["corpus"]["axes"]["momentum"] = {0.9};
  expect_error(doc);
  doc = tiny_config_json();
  doc["dataset"] = {{"kind", "glyphs"}, {"size", 8}};
  doc["perturbations"].push_back({{"kind", "rotate"}, {"min", -180}, {"max", 179}, {"layer", 0}, {"closure", "closed"}});
  doc["measures"].push_back("pal_rotate_l0");
  expect_error(doc);
  doc = tiny_config_json();
  doc["format_version"] = 7;
  expect_error(doc);
  EXPECT_NO_THROW(config_from_json(tiny_config_json()));
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"generalization.json", "invariance.json"}) {
    EXPECT_NO_THROW(load_config(fs::path(PRGAUGE_SOURCE_DIR) / "configs" / name)) << name;
  }
}

TEST(Corpus, GridCountsAndUniqueIds) {
  json doc = tiny_config_json();
  doc["corpus"]["axes"] = {{"depth", {1, 2}}, {"learning_rate", {0.01, 0.1}}, {"label_noise", {0.0, 0.1, 0.2}}};
  const auto cells = expand_corpus(config_from_json(doc));
  EXPECT_EQ(cells.size(), 12u);
  std::set<std::string> ids, keys;
  for (const auto& c : cells) {
    ids.insert(c.id);
    keys.insert(json(c.hyperparams).dump());
  }
  EXPECT_EQ(ids.size(), 12u);
  EXPECT_EQ(keys.size(), 12u);
  EXPECT_TRUE(std::is_sorted(cells.begin(), cells.end(), [](auto& a, auto& b) { return a.id < b.id; }));
}

TEST(Corpus, AugmentationRegimesMultiplyCells) {
  const RunConfig c = load_config(fs::path(PRGAUGE_SOURCE_DIR) / "configs" / "invariance.json");
  const auto cells = expand_corpus(c);
  // 8 grid cells x (none + 2 levels x 3 perturbations)
  EXPECT_EQ(cells.size(), 56u);
  std::map<std::uint64_t, int> per_seed;
  for (const auto& cell : cells) ++per_seed[cell.seed];
  EXPECT_EQ(per_seed.size(), 8u);
  for (const auto& [seed, n] : per_seed) EXPECT_EQ(n, 7);
}

TEST(Pipeline, DeterministicResumableAndComplete) {
  const RunConfig a = tiny_config(fresh_dir("run_a"));
  const RunConfig b = tiny_config(fresh_dir("run_b"));
  run_pipeline(a);
  run_pipeline(b);
  const auto files = artifacts(a.output_dir);
  EXPECT_EQ(files, artifacts(b.output_dir));
  for (const char* expected : {"scores.csv", "scores_combined.csv", "cmi.json", "sensitivity.csv", "report.json",
                               "corpus/manifest.json"}) {
    EXPECT_TRUE(std::find(files.begin(), files.end(), fs::path(expected)) != files.end()) << expected;
  }
  for (const auto& f : files) {
    EXPECT_EQ(read_text_file(a.output_dir / f), read_text_file(b.output_dir / f)) << f;
  }
  EXPECT_EQ(read_text_file(a.output_dir / "data" / "train.prgd"), read_text_file(b.output_dir / "data" / "train.prgd"));

  const Manifest m = read_manifest(RunPaths{a.output_dir}.manifest());
  EXPECT_EQ(m.models.size(), 4u);
  std::ostringstream log;
  ASSERT_EQ(cmd_gen_corpus(a, log), kExitOk);
  EXPECT_NE(log.str().find("(4 reused)"), std::string::npos) << log.str();
  EXPECT_EQ(read_text_file(RunPaths{a.output_dir}.manifest()), read_text_file(RunPaths{b.output_dir}.manifest()));

  // combination adds exactly one column per model
  const auto scores = scores_from_csv(read_text_file(RunPaths{a.output_dir}.scores()));
  const auto combined = scores_from_csv(read_text_file(RunPaths{a.output_dir}.combined_scores()));
  std::set<std::string> with_pal;
  for (const auto& r : scores) {
    if (r.measure.name == "pal_intra_l0") with_pal.insert(r.model_id);
  }
  EXPECT_EQ(combined.size(), scores.size() + with_pal.size());

  const std::string timing = read_text_file(RunPaths{a.output_dir}.timing());
  EXPECT_TRUE(timing.starts_with("n_b,mean_seconds,std_seconds,measure\n")) << timing;
}

TEST(Pipeline, IdealizedCurveScoresZeroGi) {
  const RunConfig c = tiny_config(fresh_dir("ideal"));
  std::ostringstream log;
  ASSERT_EQ(cmd_gen_data(c, log), kExitOk);
  ASSERT_EQ(cmd_gen_corpus(c, log), kExitOk);
  ASSERT_EQ(cmd_prcurve(c, log), kExitOk);
  const RunPaths paths{c.output_dir};
  const std::string id = read_manifest(paths.manifest()).models.front().id;
  const auto spec = c.perturbations.front();
  PrCurve ideal = make_curve(spec.grid(11), std::vector<double>(11, 1.0), spec);
  ideal.model_id = id;
  write_curve_csv(paths.curve(id, spec), ideal);
  ASSERT_EQ(cmd_score(c, log), kExitOk);
  bool found = false;
  for (const auto& r : scores_from_csv(read_text_file(paths.scores()))) {
    if (r.model_id == id && r.measure.name == "gi_intra_l0") {
      EXPECT_EQ(r.measure.value, 0.0);
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(Pipeline, MissingPrerequisiteNamesTheFile) {
  const RunConfig c = tiny_config(fresh_dir("missing"));
  std::ostringstream log;
  try {
    cmd_prcurve(c, log);
    FAIL() << "expected MissingPrerequisite";
  } catch (const MissingPrerequisite& e) {
    EXPECT_NE(std::string(e.what()).find("manifest.json"), std::string::npos) << e.what();
  }
  EXPECT_THROW(cmd_cmi(c, log), MissingPrerequisite);
}

TEST(Pipeline, DivergedCellIsPartialFailure) {
  json doc = tiny_config_json();
  doc["corpus"]["axes"] = {{"learning_rate", {0.01, 1e300}}};
  doc["corpus"]["defaults"]["optimizer"] = "sgd";
  RunConfig c = config_from_json(doc);
  c.output_dir = fresh_dir("diverged");
  std::ostringstream log;
  ASSERT_EQ(cmd_gen_data(c, log), kExitOk);
  EXPECT_EQ(cmd_gen_corpus(c, log), kExitPartial);
  const Manifest m = read_manifest(RunPaths{c.output_dir}.manifest());
  EXPECT_EQ(m.records().size(), 1u);
  EXPECT_EQ(m.models.size(), 2u);
}

TEST(CmiCommand, ToyManifestMatchesOracle) {
  const fs::path fixture = fs::path(PRGAUGE_SOURCE_DIR) / "tests" / "fixtures" / "toy";
  RunConfig c = load_config(fixture / "config.json");
  c.output_dir = fresh_dir("toy_cmi");
  fs::create_directories(c.output_dir / "corpus");
  fs::copy_file(fixture / "manifest.json", RunPaths{c.output_dir}.manifest());
  fs::copy_file(fixture / "scores.csv", RunPaths{c.output_dir}.scores());
  std::ostringstream log;
  ASSERT_EQ(cmd_cmi(c, log), kExitOk);
  const json out = json::parse(read_text_file(RunPaths{c.output_dir}.cmi()));
  EXPECT_EQ(out.at("models"), 10);

  // oracle input rebuilt straight from the fixture files
  const json manifest = json::parse(read_text_file(fixture / "manifest.json"));
  std::map<std::string, std::map<std::string, double>> values;
  for (const auto& r : scores_from_csv(read_text_file(fixture / "scores.csv"))) values[r.measure.name][r.model_id] = r.measure.value;
  for (const auto& report : out.at("measures")) {
    const std::string measure = report.at("measure");
    std::vector<oracle::Model> models;
    for (const auto& m : manifest.at("models")) {
      if (m.at("status") != "ok") continue;
      models.push_back({m.at("id"),
                        {m.at("hyperparams").at("depth"), m.at("hyperparams").at("learning_rate")},
                        m.at("train_acc").get<double>() - m.at("test_acc").get<double>(),
                        values.at(measure).at(m.at("id"))});
    }
    EXPECT_NEAR(report.at("cmi").get<double>(), oracle::cmi(models, 2), 1e-12) << measure;
  }
  EXPECT_NE(read_text_file(RunPaths{c.output_dir}.cmi_table()).find("gi_intra_l0"), std::string::npos);
}

TEST(Plot, WellFormedSvgWithGiRegion) {
  const fs::path dir = fresh_dir("plot");
  std::vector<fs::path> files;
  const std::vector<std::vector<double>> accs = {std::vector<double>(11, 1.0),
                                                 {1, .95, .9, .8, .7, .6, .5, .45, .4, .35, .3},
                                                 {1, .6, .4, .3, .25, .2, .18, .15, .12, .1, .1}};
  for (std::size_t i = 0; i < accs.size(); ++i) {
    PrCurve c = make_curve(PerturbationSpec::mixup_intra(0).grid(11), accs[i]);
    c.model_id = "c" + std::to_string(i);
    files.push_back(dir / (c.model_id + ".csv"));
    write_curve_csv(files.back(), c);
    const double gi = gi_score(c);
    const double area = polygon_area(gi_region(c));
    if (gi > 0) EXPECT_NEAR(area, 0.5 * gi, 0.02 * 0.5 * gi);
  }
  std::ostringstream log;
  ASSERT_EQ(cmd_plot(files, dir / "curves.svg", log), kExitOk);
  const std::string svg = read_text_file(dir / "curves.svg");
  std::string why;
  EXPECT_TRUE(well_formed_xml(svg, &why)) << why;
  EXPECT_NE(svg.find("stroke-dasharray"), std::string::npos);
  const std::regex attr(R"re(data-area="([0-9.e+-]+)" data-gi="([0-9.e+-]+)")re");
  int regions = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), attr); it != std::sregex_iterator(); ++it) {
    const double area = std::stod((*it)[1]), gi = std::stod((*it)[2]);
    EXPECT_NEAR(area, 0.5 * gi, 0.02 * 0.5 * gi + 1e-9);
    ++regions;
  }
  EXPECT_EQ(regions, 3);
  // rendering twice is byte-identical
  ASSERT_EQ(cmd_plot(files, dir / "again.svg", log), kExitOk);
  EXPECT_EQ(read_text_file(dir / "again.svg"), svg);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = fresh_dir("cli");
  json doc = tiny_config_json();
  doc["output_dir"] = (dir / "run").string();
  write_json(dir / "ok.json", doc);
  doc["measures"].push_back("nonsense");
  write_json(dir / "bad.json", doc);
  const std::string ok = (dir / "ok.json").string(), bad = (dir / "bad.json").string();

  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("score -c " + bad), kExitConfig);
  EXPECT_EQ(run_cli("score -c " + ok), kExitMissing);
  EXPECT_EQ(run_cli("frobnicate"), kExitConfig);
  EXPECT_EQ(run_cli("cmi -c " + ok + " --max-subset-size 0"), kExitConfig);
  EXPECT_EQ(run_cli("gen-data -c " + ok), kExitOk);
  EXPECT_TRUE(fs::exists(dir / "run" / "data" / "train.prgd"));
  EXPECT_EQ(run_cli("gen-data -c " + ok + " --seed 5 -o " + (dir / "other").string()), kExitOk);
  EXPECT_NE(read_text_file(dir / "run" / "data" / "train.prgd"), read_text_file(dir / "other" / "data" / "train.prgd"));

  write_text_file(dir / "broken.csv", "# prgauge pr-curve v1\nalpha,norm_alpha,accuracy,kept_count\n0,0,1,1\n1,1,oops,1\n");
  EXPECT_EQ(run_cli("plot " + (dir / "broken.csv").string() + " -o " + (dir / "x.svg").string()), kExitConfig);
}
