#include "ideoscale/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ideoscale/csv.hpp"
#include "ideoscale/hash.hpp"

namespace ideo {

double group_alignment(const ResponseMatrix& matrix, std::size_t actor, std::string_view group,
                       std::size_t* items_used) {
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < matrix.n_actors(); ++i)
    if (i != actor && matrix.actors()[i].group == group) members.push_back(i);
  if (members.empty()) throw EmptyResult("group '" + std::string(group) + "' has no members");

  double sum = 0;
  std::size_t used = 0;
  for (std::size_t j = 0; j < matrix.n_items(); ++j) {
    const Code mine = matrix.code(actor, j);
    if (mine == Code::missing) continue;
    std::size_t voted = 0, match = 0;
    for (std::size_t g : members) {
      const Code c = matrix.code(g, j);
      if (c == Code::missing) continue;
      ++voted;
      if (c == mine) ++match;
    }
    if (voted == 0) continue;
    sum += static_cast<double>(match) / static_cast<double>(voted);
    ++used;
  }
  if (items_used) *items_used = used;
  if (used == 0)
    throw NoOverlap("actor " + matrix.actors()[actor].id + " shares no item with group '" + std::string(group) + "'");
  return sum / static_cast<double>(used);
}

AlignmentPoint party_alignment(const ResponseMatrix& matrix, std::string_view actor_id, std::string_view group_a,
                               std::string_view group_b) {
  const std::size_t actor = matrix.require_actor(actor_id);
  std::size_t used_a = 0, used_b = 0;
  AlignmentPoint p;
  p.actor_id = std::string(actor_id);
  p.dem_alignment = group_alignment(matrix, actor, group_a, &used_a);
  p.rep_alignment = group_alignment(matrix, actor, group_b, &used_b);
  p.n_items_used = std::max(used_a, used_b);
  return p;
}

double consistency_variance(std::span<const Code> codes) {
  double sum = 0;
  std::size_t n = 0;
  for (Code c : codes) {
    if (c == Code::missing) continue;
    sum += static_cast<double>(c);
    ++n;
  }
  if (n < 2) throw InsufficientResponses("consistency_variance needs at least 2 non-missing codes");
  const double mean = sum / static_cast<double>(n);
  return 1.0 - mean * mean;
}

double consistency_variance(const ResponseMatrix& matrix, std::string_view actor_id) {
  return consistency_variance(matrix.row(matrix.require_actor(actor_id)));
}

KappaReport fleiss_kappa(const Eigen::MatrixXi& counts) {
  const auto subjects = counts.rows(), categories = counts.cols();
  if (subjects < 1 || categories < 1) throw UnequalRaterCounts("fleiss_kappa: empty table");
  if ((counts.array() < 0).any()) throw UnequalRaterCounts("fleiss_kappa: negative count");
  const long raters = counts.row(0).sum();
  for (Eigen::Index i = 0; i < subjects; ++i)
    if (counts.row(i).sum() != raters)
      throw UnequalRaterCounts("fleiss_kappa: subject " + std::to_string(i) + " has " +
                               std::to_string(counts.row(i).sum()) + " ratings, expected " + std::to_string(raters));
  if (raters < 2) throw UnequalRaterCounts("fleiss_kappa: need at least 2 ratings per subject");

  const double n = static_cast<double>(raters);
  double p_bar = 0;
  for (Eigen::Index i = 0; i < subjects; ++i) {
    double sq = 0;
    for (Eigen::Index j = 0; j < categories; ++j) sq += static_cast<double>(counts(i, j)) * counts(i, j);
    p_bar += (sq - n) / (n * (n - 1));
  }
  p_bar /= static_cast<double>(subjects);

  double p_e = 0;
  const double total = n * static_cast<double>(subjects);
  for (Eigen::Index j = 0; j < categories; ++j) {
    const double pj = static_cast<double>(counts.col(j).sum()) / total;
    p_e += pj * pj;
  }
  if (1.0 - p_e <= 1e-15)
    throw DegenerateMargins("fleiss_kappa: all ratings fall in one category, kappa is undefined");

  KappaReport r;
  r.subject_count = static_cast<std::size_t>(subjects);
  r.rater_count = static_cast<std::size_t>(raters);
  r.category_count = static_cast<std::size_t>(categories);
  r.observed_agreement = p_bar;
  r.expected_agreement = p_e;
  r.kappa = (p_bar - p_e) / (1.0 - p_e);
  return r;
}

SeparabilityMargin separability_margin(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw DimensionMismatch("separability_margin: scores and labels differ in length");
  const std::size_t total_true = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  const std::size_t total_false = labels.size() - total_true;
  if (total_true == 0 || total_false == 0) throw EmptyResult("separability_margin: both groups must be non-empty");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sweep thresholds from below the minimum upward. Candidate k means the
  // threshold sits above the k-th distinct value (k = 0: below everything).
  struct Candidate {
    double lo, hi;
    std::size_t violations;
  };
  std::vector<Candidate> cands;
  const double inf = std::numeric_limits<double>::infinity();
  std::size_t false_above = total_false, true_below = 0;
  cands.push_back({-inf, scores[order[0]], false_above + true_below});
  for (std::size_t p = 0; p < order.size();) {
    const double v = scores[order[p]];
    while (p < order.size() && scores[order[p]] == v) {
      if (labels[order[p]]) ++true_below;
      else --false_above;
      ++p;
    }
    const double next = p < order.size() ? scores[order[p]] : inf;
    cands.push_back({v, next, false_above + true_below});
  }

  std::size_t best = cands.size();
  auto width = [](const Candidate& c) { return c.hi - c.lo; };
  for (std::size_t k = 0; k < cands.size(); ++k) {
    if (best == cands.size() || cands[k].violations < cands[best].violations) {
      best = k;
      continue;
    }
    if (cands[k].violations > cands[best].violations) continue;
    // Among optimal intervals prefer bounded ones, then the widest.
    const bool kb = std::isfinite(width(cands[k])), bb = std::isfinite(width(cands[best]));
    if (kb && !bb) best = k;
    else if (kb == bb && kb && width(cands[k]) > width(cands[best])) best = k;
  }

  const Candidate& c = cands[best];
  const double span = std::max(scores[order.back()] - scores[order.front()], 1.0);
  SeparabilityMargin out;
  out.violations = c.violations;
  if (std::isfinite(c.lo) && std::isfinite(c.hi)) out.threshold = 0.5 * (c.lo + c.hi);
  else if (std::isfinite(c.hi)) out.threshold = c.hi - 0.5 * span;
  else out.threshold = c.lo + 0.5 * span;
  return out;
}

void write_metric_rows(const std::vector<MetricRow>& rows, const std::filesystem::path& path,
                       std::string_view header_comment) {
  std::ostringstream out;
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  csv::write_row(out, {"actor_id", "metric", "value"});
  for (const auto& r : rows) csv::write_row(out, {r.actor_id, r.metric, csv::format_double(r.value)});
  write_file_atomic(path, out.str());
}

std::vector<MetricRow> read_metric_rows(const std::filesystem::path& path) {
  auto t = csv::read_file(path);
  const int a = t.require_column("actor_id"), m = t.require_column("metric"), v = t.require_column("value");
  std::vector<MetricRow> out;
  for (const auto& r : t.rows) out.push_back({r[a], r[m], std::stod(r[v])});
  return out;
}

}  // namespace ideo
