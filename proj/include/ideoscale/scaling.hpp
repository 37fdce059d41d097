#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ideoscale/corpus.hpp"

namespace ideo {

IDEO_DEFINE_ERROR(DegenerateMatrix);
IDEO_DEFINE_ERROR(InsufficientData);
IDEO_DEFINE_ERROR(ChainDiverged);
IDEO_DEFINE_ERROR(AnchorMissing);
IDEO_DEFINE_ERROR(DegenerateAnchors);

enum class ScalingMethod { nominate, pca, irt };
std::string_view to_string(ScalingMethod m);
ScalingMethod parse_scaling_method(std::string_view s);

// Outcome points of a roll call sit at midpoint +/- normal; the conservative
// outcome is midpoint + normal. The cutting plane passes through the
// midpoint orthogonal to normal.
struct NominateItem {
  Eigen::VectorXd midpoint;
  Eigen::VectorXd normal;
};

// P(conservative) = link(discrimination * theta - difficulty).
struct IrtItem {
  double discrimination = 0.0;
  double difficulty = 0.0;
  double discrimination_sd = 0.0;
  double difficulty_sd = 0.0;
};

struct PcaItem {
  Eigen::VectorXd loading;
  double mean = 0.0;  // centering constant
};

using ItemParams = std::variant<NominateItem, IrtItem, PcaItem>;

struct FitStats {
  double correct_classification = 0.0;
  double aggregate_proportional_reduction_in_error = 0.0;
  std::optional<std::vector<double>> explained_variance_ratio;
  std::optional<double> log_likelihood;
};

struct ScalingResult {
  ScalingMethod method = ScalingMethod::pca;
  std::vector<std::string> actor_ids;
  Eigen::MatrixXd coordinates;                  // actors x dims
  std::optional<Eigen::VectorXd> coordinate_sd;  // IRT only
  std::optional<Eigen::MatrixXd> credible_interval90;  // IRT only: 5% and 95% quantiles
  std::vector<std::string> item_ids;
  std::vector<ItemParams> item_params;
  FitStats fit;
  bool converged = true;
  int iterations = 0;
  std::vector<double> objective_trace;  // nominate: log-likelihood per outer iteration
  std::vector<std::string> warnings;

  std::size_t dims() const { return static_cast<std::size_t>(coordinates.cols()); }
  std::optional<std::size_t> actor_index(std::string_view id) const;
};

// ---------------------------------------------------------------------------
// W-NOMINATE style spatial model

enum class SpatialInit { random, eigen };

struct SpatialConfig {
  int dims = 2;
  double beta = 15.0;
  std::vector<double> dim_weights = {1.0, 0.5};
  int max_iters = 200;
  double tol = 1e-5;
  std::uint64_t seed = 42;
  SpatialInit init = SpatialInit::random;
  // Worker threads for the per-actor and per-item blocks. Results do not
  // depend on this value: each block update reads only the previous block.
  unsigned threads = 1;

  void validate() const;  // throws ConfigError
};

ScalingResult nominate_scale(const ResponseMatrix& matrix, const SpatialConfig& config);

// Log-likelihood of the observed codes under the given coordinates and items.
double nominate_log_likelihood(const ResponseMatrix& matrix, const SpatialConfig& config,
                               const Eigen::MatrixXd& coordinates, const std::vector<NominateItem>& items);

// ---------------------------------------------------------------------------
// PCA

enum class Imputation { mean, listwise };

ScalingResult pca_scale(const ResponseMatrix& matrix, int n_components, Imputation imputation = Imputation::mean);

// ---------------------------------------------------------------------------
// Bayesian 2PL IRT

enum class IrtLink { probit, logistic };

struct IrtConfig {
  int n_samples = 6000;  // total iterations including burn-in
  int n_burnin = 1000;
  int thin = 1;
  double prior_sd_theta = 1.0;
  double prior_sd_item = 1.5;
  std::string anchor_negative;
  std::string anchor_positive;
  std::uint64_t seed = 42;
  IrtLink link = IrtLink::probit;
  double proposal_sd = 0.5;  // logistic random-walk Metropolis step

  void validate() const;  // throws ConfigError
};

ScalingResult irt_estimate(const ResponseMatrix& matrix, const IrtConfig& config);

// ---------------------------------------------------------------------------
// Alignment utilities

struct ProcrustesResult {
  Eigen::MatrixXd rotation;  // dims x dims, orthogonal
  Eigen::MatrixXd aligned;   // a * rotation
  double disparity = 0.0;    // sum of squared distances to b
};

// Orthogonal rotation of `a` (rows are points) onto `b`.
ProcrustesResult procrustes_align(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, bool allow_reflection = true);

// Affine map sending strong_dem_mean to -1 and strong_rep_mean to +1.
std::vector<double> normalize_to_partisan_anchors(const std::vector<double>& scores, double strong_dem_mean,
                                                  double strong_rep_mean);

// ---------------------------------------------------------------------------
// Serialization: CSV (actor_id,dim1,dim2,sd1) plus a JSON sidecar.

void write_scaling(const ScalingResult& result, const std::filesystem::path& csv_path,
                   const std::filesystem::path& sidecar_path, std::string_view header_comment = {});
ScalingResult read_scaling(const std::filesystem::path& csv_path, const std::filesystem::path& sidecar_path);

}  // namespace ideo
