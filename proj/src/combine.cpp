#include "prgauge/combine.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "prgauge/io.hpp"

namespace prgauge {

void ScoreMatrix::validate() const {
  if (rows() < 2) throw std::invalid_argument("score matrix needs at least 2 models");
  if (columns.empty()) throw std::invalid_argument("score matrix has no columns");
  for (const auto& col : columns) {
    if (col.values.size() != rows()) throw std::invalid_argument("column '" + col.name + "' has the wrong length");
    for (double v : col.values) {
      if (!std::isfinite(v)) throw std::invalid_argument("column '" + col.name + "' has a missing or non-finite value");
    }
  }
}

const ScoreColumn& ScoreMatrix::column(const std::string& name) const {
  for (const auto& col : columns) {
    if (col.name == name) return col;
  }
  throw std::invalid_argument("score matrix has no column '" + name + "'");
}

bool is_gi_measure(const std::string& name) { return name.rfind("gi_", 0) == 0; }
bool is_pal_measure(const std::string& name) { return name.rfind("pal_", 0) == 0; }

ScoreMatrix score_matrix(std::span<const ScoreRow> rows, std::span<const std::string> measures,
                         std::vector<std::string>* excluded) {
  std::map<std::string, std::map<std::string, const MeasureValue*>> by_model;
  for (const auto& row : rows) by_model[row.model_id][row.measure.name] = &row.measure;
  ScoreMatrix out;
  for (const auto& name : measures) out.columns.push_back({name, {}, std::nullopt, false});
  for (const auto& [model, values] : by_model) {
    const bool complete = std::all_of(measures.begin(), measures.end(), [&](const std::string& m) {
      auto it = values.find(m);
      return it != values.end() && std::isfinite(it->second->value);
    });
    if (!complete) {
      if (excluded) excluded->push_back(model);
      continue;
    }
    out.model_ids.push_back(model);
    for (std::size_t c = 0; c < measures.size(); ++c) {
      const MeasureValue* mv = values.at(measures[c]);
      out.columns[c].values.push_back(mv->value);
      out.columns[c].orientation = mv->orientation;
    }
  }
  return out;
}

ScoreMatrix orient(ScoreMatrix matrix) {
  bool has_gi = false, has_pal = false;
  for (const auto& col : matrix.columns) {
    if (!col.orientation) throw std::invalid_argument("orient: column '" + col.name + "' has no orientation tag");
    has_gi = has_gi || is_gi_measure(col.name);
    has_pal = has_pal || is_pal_measure(col.name);
  }
  if (!(has_gi && has_pal)) return matrix;
  for (auto& col : matrix.columns) {
    if (!is_pal_measure(col.name) || col.negated) continue;
    for (double& v : col.values) v = -v;
    col.negated = true;
  }
  return matrix;
}

Eigen::VectorXd first_principal_component(const Eigen::MatrixXd& covariance, int max_iterations) {
  const Eigen::Index n = covariance.rows();
  if (n == 0 || covariance.cols() != n) throw std::invalid_argument("first_principal_component: need a square matrix");
  const double scale = covariance.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) throw std::invalid_argument("first_principal_component: all columns have zero variance");
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::VectorXd w = covariance * v;
    const double norm = w.norm();
    if (!(norm > 0.0)) {
      // start vector is orthogonal to the range; restart from a basis vector
      v = Eigen::VectorXd::Unit(n, it % n);
      continue;
    }
    w /= norm;
    const double rayleigh = w.dot(covariance * w);
    const double residual = (covariance * w - rayleigh * w).norm();
    v = w;
    if (residual <= 1e-13 * scale) return v;
  }
  throw std::runtime_error("first_principal_component: power iteration did not converge in " +
                           std::to_string(max_iterations) + " steps");
}

namespace {

Eigen::MatrixXd as_matrix(const ScoreMatrix& m) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.columns.size()));
  for (std::size_t c = 0; c < m.columns.size(); ++c) {
    for (std::size_t r = 0; r < m.rows(); ++r) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m.columns[c].values[r];
  }
  return out;
}

void require_arity(const ScoreMatrix& m, std::size_t lo, std::size_t hi, const char* method) {
  const std::size_t n = m.columns.size();
  if (n < lo || n > hi) {
    throw std::invalid_argument(std::string(method) + ": got " + std::to_string(n) + " columns, expects " +
                                (lo == hi ? std::to_string(lo) : "at least " + std::to_string(lo)));
  }
}

}  // namespace

std::vector<double> pca_combine(const ScoreMatrix& matrix, bool standardize) {
  matrix.validate();
  require_arity(matrix, 1, SIZE_MAX, "pca");
  Eigen::MatrixXd x = as_matrix(matrix);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const double dof = static_cast<double>(x.rows() - 1);
  if (standardize) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double sd = std::sqrt(x.col(c).squaredNorm() / dof);
      if (!(sd > 0.0)) throw std::invalid_argument("npca: column '" + matrix.columns[c].name + "' has zero variance");
      x.col(c) /= sd;
    }
  }
  const Eigen::MatrixXd covariance = (x.transpose() * x) / dof;
  const Eigen::VectorXd pc = first_principal_component(covariance);
  Eigen::VectorXd projection = x * pc;
  if (projection.dot(x.col(0)) < 0.0) projection = -projection;
  return {projection.data(), projection.data() + projection.size()};
}

std::vector<double> avg(const ScoreMatrix& matrix) {
  matrix.validate();
  require_arity(matrix, 2, SIZE_MAX, "avg");
  std::vector<double> out(matrix.rows(), 0.0);
  for (const auto& col : matrix.columns) {
    for (std::size_t r = 0; r < out.size(); ++r) out[r] += col.values[r];
  }
  for (double& v : out) v /= static_cast<double>(matrix.columns.size());
  return out;
}

std::vector<double> prod(const ScoreMatrix& matrix) {
  matrix.validate();
  require_arity(matrix, 2, 2, "prod");
  std::vector<double> out(matrix.rows());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = matrix.columns[0].values[r] * matrix.columns[1].values[r];
  return out;
}

std::vector<double> prod_plus_avg(const ScoreMatrix& matrix) {
  require_arity(matrix, 2, 2, "prod_avg");
  std::vector<double> out = prod(matrix);
  const std::vector<double> mean = avg(matrix);
  for (std::size_t r = 0; r < out.size(); ++r) out[r] += mean[r];
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::vector<double> avg_rank(const ScoreMatrix& matrix) {
  matrix.validate();
  std::vector<double> out(matrix.rows(), 0.0);
  for (const auto& col : matrix.columns) {
    const auto ranks = average_ranks(col.values);
    for (std::size_t r = 0; r < out.size(); ++r) out[r] += ranks[r];
  }
  for (double& v : out) v /= static_cast<double>(matrix.columns.size());
  return out;
}

std::string to_string(CombineMethod method) {
  switch (method) {
    case CombineMethod::pca: return "pca";
    case CombineMethod::npca: return "npca";
    case CombineMethod::avg: return "avg";
    case CombineMethod::prod: return "prod";
    case CombineMethod::prod_avg: return "prod_avg";
    default: return "avg_rank";
  }
}

std::string CombinationSpec::label() const {
  std::string out = to_string(method) + ":";
  for (std::size_t i = 0; i < measures.size(); ++i) out += (i ? "+" : "") + measures[i];
  return out;
}

CombinationSpec CombinationSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("combination '" + text + "': expected method:measure+measure");
  const std::string method = text.substr(0, colon);
  CombinationSpec spec;
  bool known = false;
  for (auto m : {CombineMethod::pca, CombineMethod::npca, CombineMethod::avg, CombineMethod::prod,
                 CombineMethod::prod_avg, CombineMethod::avg_rank}) {
    if (to_string(m) == method) {
      spec.method = m;
      known = true;
    }
  }
  if (!known) throw std::invalid_argument("combination '" + text + "': unknown method '" + method + "'");
  for (auto& name : split(text.substr(colon + 1), '+')) {
    if (name.empty()) throw std::invalid_argument("combination '" + text + "': empty measure name");
    spec.measures.push_back(name);
  }
  if (spec.measures.size() < 2) throw std::invalid_argument("combination '" + text + "': needs at least two measures");
  return spec;
}

std::vector<double> combine(const ScoreMatrix& matrix, const CombinationSpec& spec) {
  ScoreMatrix selected;
  selected.model_ids = matrix.model_ids;
  for (const auto& name : spec.measures) selected.columns.push_back(matrix.column(name));
  selected = orient(std::move(selected));
  switch (spec.method) {
    case CombineMethod::pca: return pca_combine(selected, false);
    case CombineMethod::npca: return pca_combine(selected, true);
    case CombineMethod::avg: return avg(selected);
    case CombineMethod::prod: return prod(selected);
    case CombineMethod::prod_avg: return prod_plus_avg(selected);
    default: return avg_rank(selected);
  }
}

}  // namespace prgauge
