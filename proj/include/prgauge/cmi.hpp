#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace prgauge {

/// One trained model of a corpus with its categorical hyperparameters.
struct ModelRecord {
  std::string id;
  std::map<std::string, std::string> hyperparams;
  double train_acc = 0.0;
  double test_acc = 0.0;

  double gap() const { return train_acc - test_acc; }
};

struct SignPair {
  int gap_sign = 0;      // +1 / -1
  int measure_sign = 0;  // +1 / -1
};

struct PairSigns {
  std::vector<SignPair> pairs;
  std::size_t ties = 0;  // pairs dropped because either difference was exactly zero
};

/// All unordered pairs of the group in id order (f = lower id):
/// V = sign(value(f) - value(f')) for the gap and the measure.
/// `values` is aligned with `group`.
PairSigns pair_signs(std::span<const ModelRecord> group, std::span<const double> values);

struct GroupStats {
  std::string key;
  std::size_t models = 0;
  std::size_t pairs = 0;
  std::size_t ties = 0;
  /// Joint counts indexed [gap +][measure +]: {(-,-), (-,+), (+,-), (+,+)}.
  std::array<std::size_t, 4> counts{};
  double mutual_information = 0.0;
  double gap_entropy = 0.0;
};

struct SubsetResult {
  std::vector<std::string> axes;
  std::vector<GroupStats> groups;
  double mutual_information = 0.0;  // sum_k p_c I_k
  double gap_entropy = 0.0;         // sum_k p_c H_k
  double normalized = 0.0;          // I / H, 0 when degenerate
  bool degenerate = false;          // no pairs or H == 0
  std::size_t contributing_groups = 0;
  std::size_t skipped_groups = 0;
  std::size_t tied_pairs = 0;
};

/// Normalized conditional mutual information between gap-ordering and measure-ordering
/// signs, conditioned on the hyperparameter axes in `axes`. Groups are weighted uniformly
/// over those that contribute at least one untied pair; logs are natural.
SubsetResult conditional_mi(std::span<const ModelRecord> records, std::span<const double> values,
                            std::span<const std::string> axes);

struct CmiOptions {
  int max_subset_size = 2;
};

struct CmiReport {
  std::string measure;
  std::vector<SubsetResult> subsets;  // every non-empty axis subset, in size then name order
  /// Min over non-degenerate subsets of size <= max_subset_size plus the full axis set.
  double cmi = 0.0;
  /// Min over every non-degenerate non-empty subset.
  double cmi_all_subsets = 0.0;
  int max_subset_size = 2;
  std::vector<std::string> diagnostics;
};

CmiReport cmi_score(std::span<const ModelRecord> records, std::span<const double> values,
                    const CmiOptions& options = {}, const std::string& measure = "");

/// Whether a subset participates in CmiReport::cmi.
bool in_default_family(const SubsetResult& subset, std::size_t axis_count, int max_subset_size);

std::vector<std::string> corpus_axes(std::span<const ModelRecord> records);

nlohmann::json to_json(const CmiReport& report);
/// Fixed-width table: measures (rows) by CMI, with the all-subset variant beside it.
std::string format_cmi_table(std::span<const CmiReport> reports, const std::string& corpus_label);

nlohmann::json records_to_json(std::span<const ModelRecord> records);
std::vector<ModelRecord> records_from_json(const nlohmann::json& doc);

}  // namespace prgauge
