#include <algorithm>
#include <cmath>

#include "ideoscale/scaling.hpp"

namespace ideo {

std::string_view to_string(ScalingMethod m) {
  switch (m) {
    case ScalingMethod::nominate: return "nominate";
    case ScalingMethod::pca: return "pca";
    case ScalingMethod::irt: return "irt";
  }
  return "unknown";
}

ScalingMethod parse_scaling_method(std::string_view s) {
  if (s == "nominate") return ScalingMethod::nominate;
  if (s == "pca") return ScalingMethod::pca;
  if (s == "irt") return ScalingMethod::irt;
  throw ConfigError("unknown scaling method '" + std::string(s) + "'");
}

std::optional<std::size_t> ScalingResult::actor_index(std::string_view id) const {
  for (std::size_t i = 0; i < actor_ids.size(); ++i)
    if (actor_ids[i] == id) return i;
  return std::nullopt;
}

ScalingResult pca_scale(const ResponseMatrix& matrix, int n_components, Imputation imputation) {
  if (n_components < 1) throw ConfigError("pca_scale: n_components must be >= 1");
  if (static_cast<std::size_t>(n_components) > matrix.n_items())
    throw InsufficientData("pca_scale: n_components exceeds the number of items");

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < matrix.n_actors(); ++i) {
    if (imputation == Imputation::listwise) {
      auto r = matrix.row(i);
      if (std::any_of(r.begin(), r.end(), [](Code c) { return c == Code::missing; })) continue;
    }
    rows.push_back(i);
  }
  if (rows.size() < 2) throw InsufficientData("pca_scale: fewer than 2 actors after missing-data handling");

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = static_cast<Eigen::Index>(matrix.n_items());
  Eigen::VectorXd means = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(m);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Eigen::Index j = 0; j < m; ++j) {
      Code c = matrix.code(rows[r], static_cast<std::size_t>(j));
      if (c == Code::missing) continue;
      means[j] += static_cast<double>(c);
      counts[j] += 1;
    }
  for (Eigen::Index j = 0; j < m; ++j) means[j] = counts[j] > 0 ? means[j] / counts[j] : 0.0;

  // Missing cells take the item mean, i.e. zero after centering.
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, m);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index j = 0; j < m; ++j) {
      Code c = matrix.code(rows[static_cast<std::size_t>(r)], static_cast<std::size_t>(j));
      if (c != Code::missing) x(r, j) = static_cast<double>(c) - means[j];
    }

  Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw InsufficientData("pca_scale: eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  const Eigen::VectorXd evals = es.eigenvalues().reverse();
  const Eigen::MatrixXd evecs = es.eigenvectors().rowwise().reverse();
  const double total = std::max(evals.sum(), 0.0);
  if (!(total > 0)) throw InsufficientData("pca_scale: zero total variance");

  ScalingResult res;
  res.method = ScalingMethod::pca;
  const double eps = 1e-10 * std::max(1.0, evals[0]);
  int k = 0;
  while (k < n_components && evals[k] > eps) ++k;
  if (k < n_components) {
    res.warnings.push_back("RankDeficient: requested " + std::to_string(n_components) + " components, data support " +
                           std::to_string(k));
  }
  if (k == 0) throw InsufficientData("pca_scale: no component with positive variance");

  Eigen::MatrixXd loadings = evecs.leftCols(k);
  Eigen::MatrixXd scores = x * loadings;

  // Orientation: Strong Republicans score positive on PC1.
  double rep_sum = 0;
  std::size_t rep_n = 0;
  for (Eigen::Index r = 0; r < n; ++r)
    if (matrix.actors()[rows[static_cast<std::size_t>(r)]].group == "Strong Republican") {
      rep_sum += scores(r, 0);
      ++rep_n;
    }
  if (rep_n > 0) {
    if (rep_sum < 0) {
      scores.col(0) *= -1.0;
      loadings.col(0) *= -1.0;
    } else if (rep_sum == 0) {
      res.warnings.push_back("Strong Republican mean on PC1 is exactly 0; orientation left unchanged");
    }
  }

  res.coordinates = scores;
  for (std::size_t r : rows) res.actor_ids.push_back(matrix.actors()[r].id);
  for (Eigen::Index j = 0; j < m; ++j) {
    res.item_ids.push_back(matrix.items()[static_cast<std::size_t>(j)].id);
    res.item_params.emplace_back(PcaItem{loadings.row(j).transpose(), means[j]});
  }
  std::vector<double> ratios;
  for (int c = 0; c < k; ++c) ratios.push_back(std::clamp(evals[c] / total, 0.0, 1.0));
  res.fit.explained_variance_ratio = ratios;

  // Classification on PC1: sign of the item's contribution predicts the code.
  std::size_t correct = 0, obs = 0;
  double minority = 0, errors = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    std::size_t pos = 0, neg = 0, err = 0;
    for (Eigen::Index r = 0; r < n; ++r) {
      Code c = matrix.code(rows[static_cast<std::size_t>(r)], static_cast<std::size_t>(j));
      if (c == Code::missing) continue;
      const double pred = means[j] + scores(r, 0) * loadings(j, 0);
      const Code p = pred >= 0 ? Code::conservative : Code::liberal;
      (c == Code::conservative ? pos : neg)++;
      if (p != c) ++err;
    }
    obs += pos + neg;
    correct += pos + neg - err;
    minority += static_cast<double>(std::min(pos, neg));
    errors += static_cast<double>(err);
  }
  res.fit.correct_classification = obs ? static_cast<double>(correct) / static_cast<double>(obs) : 0.0;
  res.fit.aggregate_proportional_reduction_in_error = minority > 0 ? (minority - errors) / minority : 0.0;
  if (imputation == Imputation::listwise && rows.size() < matrix.n_actors())
    res.warnings.push_back("listwise deletion dropped " + std::to_string(matrix.n_actors() - rows.size()) + " actors");
  return res;
}

}  // namespace ideo
