#include "prgauge/cmi.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace prgauge {

namespace {

int sign_of_difference(double a, double b) {
  const double d = a - b;
  return d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
}

double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

}  // namespace

PairSigns pair_signs(std::span<const ModelRecord> group, std::span<const double> values) {
  if (group.size() != values.size()) throw std::invalid_argument("pair_signs: records/values length mismatch");
  std::vector<std::size_t> order(group.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return group[a].id < group[b].id; });
  PairSigns out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const std::size_t f = order[i], g = order[j];
      const int vg = sign_of_difference(group[f].gap(), group[g].gap());
      const int vm = sign_of_difference(values[f], values[g]);
      if (vg == 0 || vm == 0) {
        ++out.ties;
        continue;
      }
      out.pairs.push_back({vg, vm});
    }
  }
  return out;
}

SubsetResult conditional_mi(std::span<const ModelRecord> records, std::span<const double> values,
                            std::span<const std::string> axes) {
  if (records.size() != values.size()) throw std::invalid_argument("conditional_mi: records/values length mismatch");
  SubsetResult result;
  result.axes.assign(axes.begin(), axes.end());

  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::string key;
    for (const auto& axis : axes) {
      auto it = records[i].hyperparams.find(axis);
      if (it == records[i].hyperparams.end()) {
        throw std::invalid_argument("model '" + records[i].id + "' lacks hyperparameter '" + axis + "'");
      }
      key += (key.empty() ? "" : ",") + axis + "=" + it->second;
    }
    groups[key].push_back(i);
  }

  for (const auto& [key, members] : groups) {
    std::vector<ModelRecord> group;
    std::vector<double> group_values;
    for (auto i : members) {
      group.push_back(records[i]);
      group_values.push_back(values[i]);
    }
    GroupStats stats;
    stats.key = key;
    stats.models = members.size();
    const PairSigns signs = pair_signs(group, group_values);
    stats.pairs = signs.pairs.size();
    stats.ties = signs.ties;
    result.tied_pairs += signs.ties;
    for (const auto& p : signs.pairs) ++stats.counts[(p.gap_sign > 0 ? 2 : 0) + (p.measure_sign > 0 ? 1 : 0)];
    if (stats.pairs > 0) {
      const double n = static_cast<double>(stats.pairs);
      double joint[2][2], pg[2] = {0, 0}, pm[2] = {0, 0};
      for (int g = 0; g < 2; ++g) {
        for (int m = 0; m < 2; ++m) {
          joint[g][m] = static_cast<double>(stats.counts[2 * g + m]) / n;
          pg[g] += joint[g][m];
          pm[m] += joint[g][m];
        }
      }
      for (int g = 0; g < 2; ++g) {
        for (int m = 0; m < 2; ++m) {
          if (joint[g][m] > 0.0) stats.mutual_information += joint[g][m] * std::log(joint[g][m] / (pg[g] * pm[m]));
        }
      }
      stats.gap_entropy = 0.0 - (plogp(pg[0]) + plogp(pg[1]));
      ++result.contributing_groups;
    } else {
      ++result.skipped_groups;
    }
    result.groups.push_back(std::move(stats));
  }

  if (result.contributing_groups > 0) {
    const double pc = 1.0 / static_cast<double>(result.contributing_groups);
    for (const auto& g : result.groups) {
      if (g.pairs == 0) continue;
      result.mutual_information += pc * g.mutual_information;
      result.gap_entropy += pc * g.gap_entropy;
    }
  }
  if (result.contributing_groups == 0 || !(result.gap_entropy > 0.0)) {
    result.degenerate = true;
    result.normalized = 0.0;
  } else {
    result.normalized = result.mutual_information / result.gap_entropy;
  }
  return result;
}

std::vector<std::string> corpus_axes(std::span<const ModelRecord> records) {
  if (records.empty()) throw std::invalid_argument("corpus is empty");
  std::vector<std::string> axes;
  for (const auto& [axis, value] : records.front().hyperparams) axes.push_back(axis);
  for (const auto& r : records) {
    if (r.hyperparams.size() != axes.size() ||
        !std::all_of(axes.begin(), axes.end(), [&](const std::string& a) { return r.hyperparams.count(a) > 0; })) {
      throw std::invalid_argument("model '" + r.id + "' does not carry every hyperparameter axis of the corpus");
    }
  }
  return axes;
}

bool in_default_family(const SubsetResult& subset, std::size_t axis_count, int max_subset_size) {
  return static_cast<int>(subset.axes.size()) <= max_subset_size || subset.axes.size() == axis_count;
}

CmiReport cmi_score(std::span<const ModelRecord> records, std::span<const double> values, const CmiOptions& options,
                    const std::string& measure) {
  if (options.max_subset_size < 1) throw std::invalid_argument("cmi: max_subset_size must be >= 1");
  const std::vector<std::string> axes = corpus_axes(records);
  if (axes.empty()) throw std::invalid_argument("cmi: corpus has no hyperparameter axes");
  if (axes.size() > 20) throw std::invalid_argument("cmi: too many hyperparameter axes");
  CmiReport report;
  report.measure = measure;
  report.max_subset_size = options.max_subset_size;

  std::vector<std::vector<std::string>> subsets;
  for (std::uint32_t mask = 1; mask < (1u << axes.size()); ++mask) {
    std::vector<std::string> subset;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      if (mask & (1u << a)) subset.push_back(axes[a]);
    }
    subsets.push_back(std::move(subset));
  }
  std::stable_sort(subsets.begin(), subsets.end(), [](const auto& a, const auto& b) {
    return a.size() != b.size() ? a.size() < b.size() : a < b;
  });

  double best = std::numeric_limits<double>::infinity();
  double best_all = std::numeric_limits<double>::infinity();
  for (const auto& subset : subsets) {
    SubsetResult r = conditional_mi(records, values, subset);
    if (!r.degenerate) {
      best_all = std::min(best_all, r.normalized);
      if (in_default_family(r, axes.size(), options.max_subset_size)) best = std::min(best, r.normalized);
    }
    report.subsets.push_back(std::move(r));
  }
  if (std::isinf(best)) {
    report.cmi = 0.0;
    report.diagnostics.push_back(
        "all conditioning subsets are degenerate (hyperparameters determine every gap ordering or no pairs exist); "
        "CMI reported as 0");
  } else {
    report.cmi = best;
  }
  report.cmi_all_subsets = std::isinf(best_all) ? 0.0 : best_all;
  std::size_t degenerate = 0;
  for (const auto& r : report.subsets) degenerate += r.degenerate ? 1 : 0;
  if (degenerate > 0 && !std::isinf(best)) {
    report.diagnostics.push_back(std::to_string(degenerate) + " degenerate subset(s) excluded from the minimum");
  }
  return report;
}

nlohmann::json to_json(const CmiReport& report) {
  nlohmann::json subsets = nlohmann::json::array();
  for (const auto& s : report.subsets) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : s.groups) {
      groups.push_back({{"key", g.key},
                        {"models", g.models},
                        {"pairs", g.pairs},
                        {"ties", g.ties},
                        {"counts", g.counts},
                        {"mutual_information", g.mutual_information},
                        {"gap_entropy", g.gap_entropy}});
    }
    subsets.push_back({{"axes", s.axes},
                       {"mutual_information", s.mutual_information},
                       {"gap_entropy", s.gap_entropy},
                       {"normalized", s.normalized},
                       {"degenerate", s.degenerate},
                       {"contributing_groups", s.contributing_groups},
                       {"skipped_groups", s.skipped_groups},
                       {"tied_pairs", s.tied_pairs},
                       {"groups", std::move(groups)}});
  }
  return {{"measure", report.measure},
          {"cmi", report.cmi},
          {"cmi_all_subsets", report.cmi_all_subsets},
          {"max_subset_size", report.max_subset_size},
          {"diagnostics", report.diagnostics},
          {"subsets", std::move(subsets)}};
}

std::string format_cmi_table(std::span<const CmiReport> reports, const std::string& corpus_label) {
  std::size_t width = 8;
  for (const auto& r : reports) width = std::max(width, r.measure.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %14s  %14s\n", static_cast<int>(width), "measure",
                (corpus_label + " CMI").c_str(), "all-subset CMI");
  out << buf;
  out << std::string(width + 32, '-') << '\n';
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-*s  %14.2f  %14.2f\n", static_cast<int>(width), r.measure.c_str(), 100.0 * r.cmi,
                  100.0 * r.cmi_all_subsets);
    out << buf;
  }
  return out.str();
}

nlohmann::json records_to_json(std::span<const ModelRecord> records) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : records) {
    out.push_back({{"id", r.id}, {"hyperparams", r.hyperparams}, {"train_acc", r.train_acc}, {"test_acc", r.test_acc}});
  }
  return out;
}

std::vector<ModelRecord> records_from_json(const nlohmann::json& doc) {
  const nlohmann::json& array = doc.is_object() && doc.contains("models") ? doc.at("models") : doc;
  if (!array.is_array()) throw std::invalid_argument("manifest: expected an array of model records");
  std::vector<ModelRecord> out;
  std::set<std::string> seen;
  for (const auto& entry : array) {
    if (entry.value("status", std::string("ok")) != "ok") continue;
    ModelRecord r;
    r.id = entry.at("id").get<std::string>();
    if (!seen.insert(r.id).second) throw std::invalid_argument("manifest: duplicate model id '" + r.id + "'");
    for (const auto& [axis, value] : entry.at("hyperparams").items()) {
      r.hyperparams[axis] = value.is_string() ? value.get<std::string>() : value.dump();
    }
    r.train_acc = entry.at("train_acc").get<double>();
    r.test_acc = entry.at("test_acc").get<double>();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace prgauge
