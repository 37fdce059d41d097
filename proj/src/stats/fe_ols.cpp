#include <cmath>
#include <unordered_map>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "ideoscale/stats.hpp"

namespace ideo {

std::string_view to_string(SeType s) { return s == SeType::classical ? "classical" : "hc1_robust"; }

const RegressionTerm& RegressionResult::term(std::string_view name) const {
  for (const auto& t : terms)
    if (t.name == name) return t;
  throw UnknownColumn("no term '" + std::string(name) + "' in regression result");
}

namespace {

struct Regressor {
  std::string name;
  std::vector<double> values;
};

enum class Role { plain, moderated };

struct Prepared {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<int> group;  // empty without fixed effects
  int n_groups = 0;
  std::size_t dropped_missing = 0;
  std::size_t dropped_singleton = 0;
};

Prepared prepare(const DataTable& table, const std::string& outcome, const std::vector<Regressor>& regs,
                 const std::optional<std::string>& fe_key) {
  const std::size_t n = table.rows();
  const auto& y = table.numeric(outcome);
  std::vector<std::string> keys;
  if (fe_key) keys = table.as_keys(*fe_key);

  Prepared p;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i) {
    bool ok = std::isfinite(y[i]) && (!fe_key || !keys[i].empty());
    for (const auto& r : regs) ok = ok && std::isfinite(r.values[i]);
    if (ok) rows.push_back(i);
    else ++p.dropped_missing;
  }

  std::vector<int> gid;
  if (fe_key) {
    std::unordered_map<std::string, std::size_t> count;
    for (std::size_t i : rows) ++count[keys[i]];
    std::vector<std::size_t> kept;
    std::unordered_map<std::string, int> ids;
    for (std::size_t i : rows) {
      if (count[keys[i]] < 2) {
        ++p.dropped_singleton;
        continue;
      }
      kept.push_back(i);
      auto [it, fresh] = ids.emplace(keys[i], static_cast<int>(ids.size()));
      gid.push_back(it->second);
    }
    rows.swap(kept);
    p.n_groups = static_cast<int>(ids.size());
  }

  const auto m = static_cast<Eigen::Index>(rows.size());
  const auto k = static_cast<Eigen::Index>(regs.size()) + (fe_key ? 0 : 1);
  p.y.resize(m);
  p.X.resize(m, k);
  for (Eigen::Index r = 0; r < m; ++r) {
    const std::size_t i = rows[static_cast<std::size_t>(r)];
    p.y(r) = y[i];
    Eigen::Index c = 0;
    if (!fe_key) p.X(r, c++) = 1.0;
    for (const auto& reg : regs) p.X(r, c++) = reg.values[i];
  }
  p.group = std::move(gid);
  return p;
}

void demean(Eigen::VectorXd& y, Eigen::MatrixXd& X, const std::vector<int>& group, int n_groups) {
  Eigen::VectorXd ysum = Eigen::VectorXd::Zero(n_groups);
  Eigen::MatrixXd xsum = Eigen::MatrixXd::Zero(n_groups, X.cols());
  Eigen::VectorXd cnt = Eigen::VectorXd::Zero(n_groups);
  for (Eigen::Index r = 0; r < y.size(); ++r) {
    const int g = group[static_cast<std::size_t>(r)];
    ysum(g) += y(r);
    xsum.row(g) += X.row(r);
    cnt(g) += 1.0;
  }
  for (Eigen::Index r = 0; r < y.size(); ++r) {
    const int g = group[static_cast<std::size_t>(r)];
    y(r) -= ysum(g) / cnt(g);
    X.row(r) -= xsum.row(g) / cnt(g);
  }
}

double p_value(double t, double df) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))));
}

// Collinearity among the regressors: rank of the (demeaned) design.
bool full_rank(const Eigen::MatrixXd& X) {
  if (X.cols() == 0) return true;
  Eigen::MatrixXd scaled = X;
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double norm = X.col(c).norm();
    if (norm < 1e-12) return false;
    scaled.col(c) /= norm;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  qr.setThreshold(1e-10);
  return qr.rank() == X.cols();
}

RegressionResult estimate(const DataTable& table, const std::string& outcome, const std::vector<Regressor>& regs,
                          const std::optional<std::string>& fe_key, SeType se_type, const std::string& tested,
                          bool interaction_model) {
  Prepared p = prepare(table, outcome, regs, fe_key);
  const auto n = p.y.size();
  if (n == 0) throw NoWithinVariation("no usable observations after dropping missing values and singletons");

  const Eigen::VectorXd y_raw = p.y;
  if (fe_key) demean(p.y, p.X, p.group, p.n_groups);

  // Column 0 of the regressor block is the tested treatment.
  const Eigen::Index first = fe_key ? 0 : 1;
  if (p.X.col(first).cwiseAbs().maxCoeff() < 1e-12 ||
      (!fe_key && (p.X.col(first).array() - p.X.col(first).mean()).abs().maxCoeff() < 1e-12))
    throw NoWithinVariation("treatment '" + tested + "' has no variation" + (fe_key ? " within groups" : ""));
  if (!full_rank(p.X)) {
    if (interaction_model) throw CollinearModerators("moderator terms are collinear with the treatment or each other");
    throw RankDeficient("regressors are collinear");
  }

  const auto k = p.X.cols();
  const double df = static_cast<double>(n - k - (fe_key ? p.n_groups : 0));
  if (df <= 0) throw RankDeficient("no residual degrees of freedom");

  const Eigen::MatrixXd XtX = p.X.transpose() * p.X;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(XtX);
  const Eigen::VectorXd beta = p.X.colPivHouseholderQr().solve(p.y);
  const Eigen::VectorXd e = p.y - p.X * beta;
  const Eigen::MatrixXd XtX_inv = ldlt.solve(Eigen::MatrixXd::Identity(k, k));

  Eigen::MatrixXd V;
  const double ssr = e.squaredNorm();
  if (se_type == SeType::classical) {
    V = (ssr / df) * XtX_inv;
  } else {
    const Eigen::MatrixXd meat = p.X.transpose() * e.array().square().matrix().asDiagonal() * p.X;
    V = (static_cast<double>(n) / df) * XtX_inv * meat * XtX_inv;
  }

  RegressionResult out;
  out.se_type = se_type;
  out.fixed_effect_key = fe_key;
  out.n_obs = static_cast<std::size_t>(n);
  out.n_groups = static_cast<std::size_t>(p.n_groups);
  out.n_dropped_missing = p.dropped_missing;
  out.n_dropped_singleton = p.dropped_singleton;
  out.df_resid = df;

  std::vector<std::string> names;
  if (!fe_key) names.push_back("(Intercept)");
  for (const auto& r : regs) names.push_back(r.name);
  for (Eigen::Index c = 0; c < k; ++c) {
    RegressionTerm t;
    t.name = names[static_cast<std::size_t>(c)];
    t.coefficient = beta(c);
    t.std_error = std::sqrt(std::max(V(c, c), 0.0));
    if (t.std_error > 0) t.t_stat = t.coefficient / t.std_error;
    else t.t_stat = std::fabs(t.coefficient) < 1e-15 ? 0.0 : std::copysign(INFINITY, t.coefficient);
    t.p_value = p_value(t.t_stat, df);
    out.terms.push_back(t);
  }

  const double sst = (y_raw.array() - y_raw.mean()).square().sum();
  out.r_squared = sst > 0 ? 1.0 - ssr / sst : 0.0;
  out.adjusted_r_squared = sst > 0 ? 1.0 - (1.0 - out.r_squared) * (static_cast<double>(n) - 1.0) / df : 0.0;
  if (fe_key) {
    const double sst_within = p.y.squaredNorm();
    out.within_r_squared = sst_within > 0 ? 1.0 - ssr / sst_within : 0.0;
  }
  return out;
}

}  // namespace

RegressionResult fe_ols(const DataTable& table, const std::string& outcome, const std::string& treatment,
                        const std::optional<std::string>& fixed_effect_key, SeType se_type,
                        const std::vector<std::string>& controls) {
  std::vector<Regressor> regs{{treatment, table.numeric(treatment)}};
  for (const auto& c : controls) regs.push_back({c, table.numeric(c)});
  return estimate(table, outcome, regs, fixed_effect_key, se_type, treatment, false);
}

RegressionResult interaction_fe_ols(const DataTable& table, const std::string& outcome, const std::string& treatment,
                                    const std::vector<std::string>& moderators,
                                    const std::optional<std::string>& fixed_effect_key, SeType se_type) {
  if (moderators.empty()) return fe_ols(table, outcome, treatment, fixed_effect_key, se_type);
  const auto& d = table.numeric(treatment);

  // Variation is judged on the rows that survive listwise deletion.
  std::vector<bool> complete(table.rows(), true);
  for (std::size_t i = 0; i < table.rows(); ++i) {
    complete[i] = std::isfinite(d[i]) && std::isfinite(table.numeric(outcome)[i]);
    for (const auto& m : moderators) complete[i] = complete[i] && std::isfinite(table.numeric(m)[i]);
  }
  for (const auto& m : moderators) {
    const auto& v = table.numeric(m);
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (complete[i]) lo = std::min(lo, v[i]), hi = std::max(hi, v[i]);
    if (!(hi - lo > 1e-12)) throw CollinearModerators("moderator '" + m + "' is constant");
  }

  std::vector<Regressor> regs{{treatment, d}};
  for (const auto& m : moderators) {
    const auto& v = table.numeric(m);
    std::vector<double> prod(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) prod[i] = d[i] * v[i];
    regs.push_back({treatment + ":" + m, std::move(prod)});
  }
  if (!fixed_effect_key)
    for (const auto& m : moderators) regs.push_back({m, table.numeric(m)});
  return estimate(table, outcome, regs, fixed_effect_key, se_type, treatment, true);
}

}  // namespace ideo
