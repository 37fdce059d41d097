#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ideoscale/corpus.hpp"

namespace ideo {

IDEO_DEFINE_ERROR(NoOverlap);
IDEO_DEFINE_ERROR(InsufficientResponses);
IDEO_DEFINE_ERROR(UnequalRaterCounts);
IDEO_DEFINE_ERROR(DegenerateMargins);

struct AlignmentPoint {
  std::string actor_id;
  double dem_alignment = 0.0;  // alignment with group_a
  double rep_alignment = 0.0;  // alignment with group_b
  std::size_t n_items_used = 0;
};

struct KappaReport {
  std::size_t subject_count = 0;
  std::size_t rater_count = 0;
  std::size_t category_count = 0;
  double observed_agreement = 0.0;
  double expected_agreement = 0.0;
  double kappa = 0.0;
};

struct SeparabilityMargin {
  double threshold = 0.0;
  std::size_t violations = 0;
};

// Mean over items of the share of group members (other than the actor
// itself) whose code matches the actor's. Items where the actor or the whole
// group is missing are skipped. n_items_used counts items contributing to
// either group.
AlignmentPoint party_alignment(const ResponseMatrix& matrix, std::string_view actor_id, std::string_view group_a,
                               std::string_view group_b);

// Single-group variant: mean per-item match share.
double group_alignment(const ResponseMatrix& matrix, std::size_t actor, std::string_view group,
                       std::size_t* items_used = nullptr);

// Population variance of the actor's non-missing +/-1 codes (1 - mean^2).
double consistency_variance(const ResponseMatrix& matrix, std::string_view actor_id);
double consistency_variance(std::span<const Code> codes);

// counts(subject, category) = number of raters assigning that category.
KappaReport fleiss_kappa(const Eigen::MatrixXi& counts);

// Best one-dimensional threshold separating label=false (expected at or
// below the threshold) from label=true (expected above).
SeparabilityMargin separability_margin(const std::vector<double>& scores, const std::vector<bool>& labels);

// Flat (actor_id, metric, value) rows.
struct MetricRow {
  std::string actor_id;
  std::string metric;
  double value = 0.0;
};
void write_metric_rows(const std::vector<MetricRow>& rows, const std::filesystem::path& path,
                       std::string_view header_comment = {});
std::vector<MetricRow> read_metric_rows(const std::filesystem::path& path);

}  // namespace ideo
