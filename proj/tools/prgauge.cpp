#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prgauge/experiment.hpp"
#include "prgauge/io.hpp"

namespace {

using prgauge::RunConfig;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string output;
  std::optional<int> max_subset_size;
};

RunConfig resolve(const Common& c) {
  RunConfig config = prgauge::load_config(c.config);
  if (c.seed) config.seed = *c.seed;
  if (!c.output.empty()) config.output_dir = c.output;
  if (c.max_subset_size) {
    if (*c.max_subset_size < 1) throw prgauge::ConfigError("--max-subset-size must be >= 1");
    config.cmi.max_subset_size = *c.max_subset_size;
  }
  return config;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const prgauge::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return prgauge::kExitConfig;
  } catch (const prgauge::MissingPrerequisite& e) {
    std::cerr << "error: " << e.what() << "\n";
    return prgauge::kExitMissing;
  } catch (const prgauge::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return prgauge::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perturbation-response generalization measures on self-trained model corpora"};
  app.require_subcommand(1);

  using Command = int (*)(const RunConfig&, std::ostream&);
  const std::vector<std::tuple<const char*, const char*, Command>> commands = {
      {"gen-data", "Generate the synthetic dataset and its train/test split", prgauge::cmd_gen_data},
      {"gen-corpus", "Train every corpus cell (resumable)", prgauge::cmd_gen_corpus},
      {"prcurve", "Build PR curves for every model and perturbation", prgauge::cmd_prcurve},
      {"score", "Compute the configured measures into scores.csv", prgauge::cmd_score},
      {"combine", "Append combined measures to the score table", prgauge::cmd_combine},
      {"cmi", "CMI of every measure against the generalization gap", prgauge::cmd_cmi},
      {"invariance", "Invariance experiment over augmentation regimes", prgauge::cmd_invariance},
      {"timing", "PR-curve runtime and score spread versus number of batches", prgauge::cmd_timing},
      {"report", "Bundle all artifacts into report.json and report.md", prgauge::cmd_report},
  };

  Common common;
  std::function<int()> selected;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", common.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Override the configured seed");
    sub->add_option("-o,--output", common.output, "Override the configured output directory");
    if (std::string(name) == "cmi") {
      sub->add_option("--max-subset-size", common.max_subset_size, "Largest conditioning subset besides the full set");
    }
    const Command command = fn;
    sub->callback([&, command] { selected = [&, command] { return command(resolve(common), std::cout); }; });
  }

  std::vector<std::string> curves;
  std::string svg;
  CLI::App* plot = app.add_subcommand("plot", "Render PR and PCD curves to a two-panel SVG");
  plot->add_option("curves", curves, "PR curve CSV files")->required();
  plot->add_option("-o,--output", svg, "SVG file to write")->required();
  plot->callback([&] {
    selected = [&] {
      std::vector<std::filesystem::path> paths(curves.begin(), curves.end());
      return prgauge::cmd_plot(paths, svg, std::cout);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : prgauge::kExitConfig;
  }
  return guarded(selected);
}
