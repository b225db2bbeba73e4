#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prgauge/scores.hpp"

namespace prgauge {

struct ScoreColumn {
  std::string name;
  std::vector<double> values;
  std::optional<Orientation> orientation;
  bool negated = false;  // set once a Pal column has been sign-flipped by orient()
};

/// Measures (columns) by models (rows) for one task.
struct ScoreMatrix {
  std::vector<std::string> model_ids;
  std::vector<ScoreColumn> columns;

  std::size_t rows() const { return model_ids.size(); }
  void validate() const;
  const ScoreColumn& column(const std::string& name) const;
};

bool is_gi_measure(const std::string& name);
bool is_pal_measure(const std::string& name);

/// Builds a matrix with one column per requested measure. Models lacking any of the
/// measures (e.g. a degenerate Pal) are left out and reported through `excluded`.
ScoreMatrix score_matrix(std::span<const ScoreRow> rows, std::span<const std::string> measures,
                         std::vector<std::string>* excluded = nullptr);

/// When Gi and Pal columns are combined, Pal columns are negated so every column
/// shares Gi's direction. Idempotent.
ScoreMatrix orient(ScoreMatrix matrix);

/// Dominant eigenvector of a symmetric PSD matrix by power iteration (unit norm).
Eigen::VectorXd first_principal_component(const Eigen::MatrixXd& covariance, int max_iterations = 10000);

/// Projection of the centred (standardized when `standardize`) columns onto the first
/// principal component, signed to correlate non-negatively with the first column.
std::vector<double> pca_combine(const ScoreMatrix& matrix, bool standardize);
std::vector<double> avg(const ScoreMatrix& matrix);
std::vector<double> prod(const ScoreMatrix& matrix);
std::vector<double> prod_plus_avg(const ScoreMatrix& matrix);
/// Mean over columns of 1-based ranks (smallest value gets 1, ties share the average rank).
std::vector<double> avg_rank(const ScoreMatrix& matrix);
std::vector<double> average_ranks(std::span<const double> values);

enum class CombineMethod { pca, npca, avg, prod, prod_avg, avg_rank };
std::string to_string(CombineMethod method);

/// "method:measure+measure", e.g. "pca:gi_intra_l0+mixup_l0".
struct CombinationSpec {
  CombineMethod method = CombineMethod::avg;
  std::vector<std::string> measures;

  std::string label() const;
  static CombinationSpec parse(const std::string& text);
};

/// Selects the combination's columns, orients them and applies the method.
std::vector<double> combine(const ScoreMatrix& matrix, const CombinationSpec& spec);

}  // namespace prgauge
