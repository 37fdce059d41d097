#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "ideoscale/metrics.hpp"
#include "support.hpp"

using namespace ideo;
using testing::matrix_from;

namespace {

// Exhaustive sweep over every threshold between sorted distinct scores.
std::size_t brute_force_violations(const std::vector<double>& scores, const std::vector<bool>& labels) {
  std::vector<double> cuts = {-std::numeric_limits<double>::infinity()};
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  for (double s : sorted) cuts.push_back(s);
  std::size_t best = scores.size();
  for (double t : cuts) {
    std::size_t v = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool above = scores[i] > t;
      if (above != labels[i]) ++v;
    }
    best = std::min(best, v);
  }
  return best;
}

double hand_fleiss(const std::vector<std::vector<int>>& table) {
  const double n_subj = static_cast<double>(table.size());
  double raters = 0;
  for (int c : table[0]) raters += c;
  std::vector<double> col(table[0].size(), 0.0);
  double p_bar = 0;
  for (const auto& row : table) {
    double sq = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      sq += static_cast<double>(row[j]) * row[j];
      col[j] += row[j];
    }
    p_bar += (sq - raters) / (raters * (raters - 1));
  }
  p_bar /= n_subj;
  double p_e = 0;
  for (double c : col) p_e += (c / (n_subj * raters)) * (c / (n_subj * raters));
  return (p_bar - p_e) / (1 - p_e);
}

Eigen::MatrixXi to_counts(const std::vector<std::vector<int>>& table) {
  Eigen::MatrixXi m(static_cast<Eigen::Index>(table.size()), static_cast<Eigen::Index>(table[0].size()));
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t j = 0; j < table[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = table[i][j];
  return m;
}

}  // namespace

TEST_CASE("party_alignment on the 3x2 fixture") {
  // target, then two group members: both match on item 0, one on item 1.
  const auto m = matrix_from({{1, 1}, {1, 1}, {1, -1}}, {"Model", "Democrat", "Democrat"});
  const auto p = party_alignment(m, "a0", "Democrat", "Democrat");
  CHECK(p.dem_alignment == 0.75);
  CHECK(p.rep_alignment == 0.75);
  CHECK(p.n_items_used == 2);
}

TEST_CASE("party_alignment basics") {
  SUBCASE("self-match") {
    const auto m = matrix_from({{1, -1, 1}, {1, -1, 1}, {-1, 1, -1}}, {"Model", "Democrat", "Republican"});
    const auto p = party_alignment(m, "a0", "Democrat", "Republican");
    CHECK(p.dem_alignment == 1.0);
    CHECK(p.rep_alignment == 0.0);
  }
  SUBCASE("missing codes leave the denominators") {
    const auto m = matrix_from({{1, 1}, {0, 1}, {1, -1}, {-1, 1}}, {"Model", "Democrat", "Democrat", "Republican"});
    const auto p = party_alignment(m, "a0", "Democrat", "Republican");
    CHECK(p.dem_alignment == doctest::Approx((1.0 + 0.5) / 2).epsilon(1e-15));
    CHECK(p.rep_alignment == 0.5);
  }
  SUBCASE("no overlap") {
    const auto m = matrix_from({{1, 0}, {0, 1}, {1, 1}}, {"Model", "Democrat", "Republican"});
    CHECK_THROWS_AS(party_alignment(m, "a0", "Democrat", "Republican"), NoOverlap);
  }
  SUBCASE("empty group") {
    const auto m = matrix_from({{1, 1}, {1, -1}}, {"Model", "Democrat"});
    CHECK_THROWS_AS(party_alignment(m, "a0", "Democrat", "Republican"), EmptyResult);
  }
}

TEST_CASE("party_alignment is invariant under item reordering") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> code(-1, 1);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<std::vector<int>> rows(8, std::vector<int>(6));
    for (auto& r : rows)
      for (auto& v : r) v = code(rng);
    for (auto& r : rows) r[0] = 1;  // keep every row and column non-empty
    for (auto& v : rows[0]) v = v == 0 ? 1 : v;
    const std::vector<std::string> groups = {"Model", "Democrat", "Democrat", "Democrat", "Republican", "Republican",
                                             "Republican", "Republican"};
    const auto m = matrix_from(rows, groups);
    std::vector<std::size_t> perm = {3, 1, 5, 0, 4, 2};
    std::vector<std::vector<int>> shuffled = rows;
    for (auto& r : shuffled) {
      std::vector<int> copy = r;
      for (std::size_t j = 0; j < perm.size(); ++j) r[j] = copy[perm[j]];
    }
    const auto a = party_alignment(m, "a0", "Democrat", "Republican");
    const auto b = party_alignment(matrix_from(shuffled, groups), "a0", "Democrat", "Republican");
    CHECK(a.dem_alignment == doctest::Approx(b.dem_alignment).epsilon(1e-14));
    CHECK(a.rep_alignment == doctest::Approx(b.rep_alignment).epsilon(1e-14));
  }
}

TEST_CASE("duplicating a group member pulls each item's fraction toward that member") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<int> target(1, 1);
    std::vector<std::vector<int>> members(4, std::vector<int>(1));
    for (auto& r : members) r[0] = coin(rng) ? 1 : -1;
    for (std::size_t k = 0; k < members.size(); ++k) {
      std::vector<std::vector<int>> rows = {target};
      std::vector<std::string> groups = {"Model"};
      for (const auto& r : members) rows.push_back(r), groups.push_back("Democrat");
      const double before = group_alignment(matrix_from(rows, groups), 0, "Democrat");
      rows.push_back(members[k]);
      groups.push_back("Democrat");
      const double after = group_alignment(matrix_from(rows, groups), 0, "Democrat");
      const double pull = members[k][0] == target[0] ? 1.0 : 0.0;
      CHECK(std::abs(after - pull) <= std::abs(before - pull));
      CHECK((after - before) * (pull - before) >= 0.0);
    }
  }
}

TEST_CASE("consistency_variance") {
  using C = Code;
  CHECK(consistency_variance(std::vector<C>{C::conservative, C::conservative, C::conservative}) == 0.0);
  CHECK(consistency_variance(std::vector<C>{C::conservative, C::liberal, C::missing, C::liberal, C::conservative}) ==
        1.0);
  CHECK_THROWS_AS(consistency_variance(std::vector<C>{C::conservative, C::missing}), InsufficientResponses);

  std::mt19937_64 rng(1000);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 2 + rng() % 60;
    std::vector<C> codes(n);
    double sum = 0;
    for (auto& c : codes) {
      c = rng() % 2 ? C::conservative : C::liberal;
      sum += static_cast<double>(c);
    }
    const double mean = sum / static_cast<double>(n);
    double pop = 0;
    for (auto c : codes) pop += (static_cast<double>(c) - mean) * (static_cast<double>(c) - mean);
    pop /= static_cast<double>(n);
    const double v = consistency_variance(codes);
    CHECK(std::abs(v - (1.0 - mean * mean)) <= 1e-12);
    CHECK(std::abs(v - pop) <= 1e-12);
  }
}

TEST_CASE("fleiss_kappa") {
  SUBCASE("4 subjects, 3 raters, 2 categories") {
    const std::vector<std::vector<int>> table = {{3, 0}, {2, 1}, {1, 2}, {0, 3}};
    const auto r = fleiss_kappa(to_counts(table));
    // P_i = 1, 1/3, 1/3, 1 -> P = 2/3; margins 1/2 each -> Pe = 1/2.
    CHECK(std::abs(r.kappa - 1.0 / 3.0) <= 1e-9);
    CHECK(std::abs(r.kappa - hand_fleiss(table)) <= 1e-9);
    CHECK(r.subject_count == 4);
    CHECK(r.rater_count == 3);
    CHECK(r.category_count == 2);
  }
  SUBCASE("all raters agree") {
    CHECK(fleiss_kappa(to_counts({{4, 0, 0}, {0, 4, 0}, {4, 0, 0}})).kappa == 1.0);
  }
  SUBCASE("two raters always disagree") {
    CHECK(fleiss_kappa(to_counts({{1, 1}, {1, 1}, {1, 1}})).kappa == doctest::Approx(-1.0).epsilon(1e-15));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(fleiss_kappa(to_counts({{3, 0}, {1, 1}})), UnequalRaterCounts);
    CHECK_THROWS_AS(fleiss_kappa(to_counts({{3, 0}, {3, 0}})), DegenerateMargins);
  }
}

TEST_CASE("fleiss_kappa invariants") {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 200; ++rep) {
    const int subjects = 3 + static_cast<int>(rng() % 12), categories = 2 + static_cast<int>(rng() % 3);
    const int raters = 2 + static_cast<int>(rng() % 5);
    std::vector<std::vector<int>> table(static_cast<std::size_t>(subjects), std::vector<int>(static_cast<std::size_t>(categories), 0));
    for (auto& row : table)
      for (int r = 0; r < raters; ++r) ++row[rng() % static_cast<std::size_t>(categories)];
    KappaReport base;
    try {
      base = fleiss_kappa(to_counts(table));
    } catch (const DegenerateMargins&) {
      continue;
    }
    CHECK(std::abs(base.kappa - (base.observed_agreement - base.expected_agreement) /
                                    (1.0 - base.expected_agreement)) <= 1e-12);
    CHECK(std::abs(base.kappa - hand_fleiss(table)) <= 1e-9);

    auto relabeled = table;
    for (auto& row : relabeled) std::reverse(row.begin(), row.end());
    auto permuted = table;
    std::shuffle(permuted.begin(), permuted.end(), rng);
    CHECK(std::abs(fleiss_kappa(to_counts(relabeled)).kappa - base.kappa) <= 1e-12);
    CHECK(std::abs(fleiss_kappa(to_counts(permuted)).kappa - base.kappa) <= 1e-12);
  }
}

TEST_CASE("separability_margin") {
  SUBCASE("disjoint supports") {
    const auto r = separability_margin({-1, -2, 1, 2}, {false, false, true, true});
    CHECK(r.violations == 0);
    CHECK(r.threshold == 0.0);
  }
  SUBCASE("interleaved groups") {
    // n actors in total, alternating labels starting with the upper group.
    for (std::size_t n = 2; n <= 24; n += 2) {
      std::vector<double> scores;
      std::vector<bool> labels;
      for (std::size_t k = 0; k < n; ++k) {
        scores.push_back(static_cast<double>(k));
        labels.push_back(k % 2 == 0);
      }
      const auto r = separability_margin(scores, labels);
      CHECK(r.violations == (n + 1) / 2);
      CHECK(r.violations == brute_force_violations(scores, labels));
    }
    // Starting with the lower group leaves one fewer violation.
    for (std::size_t n = 2; n <= 24; n += 2) {
      std::vector<double> scores;
      std::vector<bool> labels;
      for (std::size_t k = 0; k < n; ++k) {
        scores.push_back(static_cast<double>(k));
        labels.push_back(k % 2 == 1);
      }
      const auto r = separability_margin(scores, labels);
      CHECK(r.violations == n / 2 - 1);
      CHECK(r.violations == brute_force_violations(scores, labels));
    }
  }
  SUBCASE("random scores against the sweep, and the mirror property") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    for (int rep = 0; rep < 200; ++rep) {
      const std::size_t n = 4 + rng() % 30;
      std::vector<double> scores(n), neg(n);
      std::vector<bool> labels(n), swapped(n);
      for (std::size_t i = 0; i < n; ++i) {
        labels[i] = i % 2 == 0;
        scores[i] = normal(rng) + (labels[i] ? 0.8 : 0.0);
        neg[i] = -scores[i];
        swapped[i] = !labels[i];
      }
      const auto r = separability_margin(scores, labels);
      CHECK(r.violations == brute_force_violations(scores, labels));
      CHECK(separability_margin(neg, swapped).violations == r.violations);
      std::size_t at_threshold = 0;
      for (std::size_t i = 0; i < n; ++i) at_threshold += (scores[i] > r.threshold) != labels[i];
      CHECK(at_threshold == r.violations);
    }
  }
  CHECK_THROWS_AS(separability_margin({1, 2}, {true, true}), EmptyResult);
}

TEST_CASE("metric rows round trip") {
  testing::TempDir dir;
  const std::vector<MetricRow> rows = {{"a0", "variance", 0.64}, {"*", "kappa", 1.0 / 3.0}, {"llm:x", "irt_sd", 1e-17}};
  write_metric_rows(rows, dir / "m.csv", "config_hash=ff");
  const auto back = read_metric_rows(dir / "m.csv");
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].actor_id == rows[i].actor_id);
    CHECK(back[i].metric == rows[i].metric);
    CHECK(back[i].value == rows[i].value);
  }
}
