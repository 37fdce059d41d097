// One-dimensional two-parameter IRT ideal points.
//
// Probit link: data-augmentation Gibbs sampler. Each observed code gets a
// latent utility z ~ N(a_j * theta_i - b_j, 1) truncated to the side of zero
// matching the code; theta and (a_j, b_j) then have conjugate normal
// full conditionals. Logistic link: random-walk Metropolis within Gibbs.
//
// Identification: anchor_negative has prior mean -1, anchor_positive +1,
// everyone else 0; after every sweep the draw is reflected if the anchors
// are out of order.

#include <algorithm>
#include <cmath>
#include <random>

#include "ideoscale/scaling.hpp"

namespace ideo {

namespace {

struct Obs {
  std::size_t index;
  double sign;
};

// Standard normal truncated to (lower, inf).
double rtnorm_lower(std::mt19937_64& rng, double lower) {
  std::normal_distribution<double> normal;
  if (lower < 0.45) {
    for (;;) {
      const double z = normal(rng);
      if (z > lower) return z;
    }
  }
  std::uniform_real_distribution<double> unif;
  const double lambda = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
  for (;;) {
    const double z = lower - std::log(1.0 - unif(rng)) / lambda;
    const double rho = std::exp(-0.5 * (z - lambda) * (z - lambda));
    if (unif(rng) <= rho) return z;
  }
}

// N(mean, 1) restricted to positive values when sign > 0, negative otherwise.
double sample_latent(std::mt19937_64& rng, double mean, double sign) {
  if (sign > 0) return mean + rtnorm_lower(rng, -mean);
  return mean - rtnorm_lower(rng, mean);
}

double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }
double log_probit(double z) {
  // log Phi(z), accurate in the lower tail via erfc.
  return std::log(0.5 * std::erfc(-z / std::sqrt(2.0)));
}

class Sampler {
 public:
  Sampler(const ResponseMatrix& matrix, const IrtConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
    n_ = matrix.n_actors();
    m_ = matrix.n_items();
    by_actor_.resize(n_);
    by_item_.resize(m_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < m_; ++j) {
        Code c = matrix.code(i, j);
        if (c == Code::missing) continue;
        const double s = c == Code::conservative ? 1.0 : -1.0;
        by_actor_[i].push_back({j, s});
        by_item_[j].push_back({i, s});
      }
    auto neg = matrix.actor_index(cfg.anchor_negative);
    auto pos = matrix.actor_index(cfg.anchor_positive);
    if (!neg) throw AnchorMissing("anchor " + cfg.anchor_negative + " is not in the matrix");
    if (!pos) throw AnchorMissing("anchor " + cfg.anchor_positive + " is not in the matrix");
    anchor_neg_ = *neg;
    anchor_pos_ = *pos;
    prior_mean_.assign(n_, 0.0);
    prior_mean_[anchor_neg_] = -1.0;
    prior_mean_[anchor_pos_] = 1.0;

    // Start from standardized mean codes, which orders actors sensibly.
    theta_.assign(n_, 0.0);
    double mu = 0, sd = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      double s = 0;
      for (const Obs& o : by_actor_[i]) s += o.sign;
      theta_[i] = by_actor_[i].empty() ? 0.0 : s / static_cast<double>(by_actor_[i].size());
      mu += theta_[i];
    }
    mu /= static_cast<double>(n_);
    for (double t : theta_) sd += (t - mu) * (t - mu);
    sd = std::sqrt(sd / static_cast<double>(n_));
    for (double& t : theta_) t = sd > 0 ? (t - mu) / sd : 0.0;
    if (theta_[anchor_pos_] < theta_[anchor_neg_])
      for (double& t : theta_) t = -t;
    alpha_.assign(m_, 1.0);
    beta_.assign(m_, 0.0);
    z_.resize(m_);
    for (std::size_t j = 0; j < m_; ++j) z_[j].assign(by_item_[j].size(), 0.0);
  }

  void sweep_probit() {
    std::normal_distribution<double> normal;
    // Latent utilities, stored per item in by_item_ order.
    for (std::size_t j = 0; j < m_; ++j)
      for (std::size_t k = 0; k < by_item_[j].size(); ++k) {
        const Obs& o = by_item_[j][k];
        z_[j][k] = sample_latent(rng_, alpha_[j] * theta_[o.index] - beta_[j], o.sign);
      }

    // Items: regression of z on [theta, -1] with N(0, prior_sd_item^2 I) prior.
    const double item_prec = 1.0 / (cfg_.prior_sd_item * cfg_.prior_sd_item);
    for (std::size_t j = 0; j < m_; ++j) {
      Eigen::Matrix2d prec = Eigen::Matrix2d::Identity() * item_prec;
      Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
      for (std::size_t k = 0; k < by_item_[j].size(); ++k) {
        const double t = theta_[by_item_[j][k].index];
        prec(0, 0) += t * t;
        prec(0, 1) -= t;
        prec(1, 0) -= t;
        prec(1, 1) += 1.0;
        rhs[0] += t * z_[j][k];
        rhs[1] -= z_[j][k];
      }
      Eigen::LLT<Eigen::Matrix2d> llt(prec);
      const Eigen::Vector2d mean = llt.solve(rhs);
      const Eigen::Vector2d eps(normal(rng_), normal(rng_));
      // prec = L L^T, so L^{-T} eps has covariance prec^{-1}.
      const Eigen::Vector2d draw = mean + llt.matrixU().solve(eps);
      alpha_[j] = draw[0];
      beta_[j] = draw[1];
    }

    // Actors. z for (i, j) is found through the item-side index.
    const double theta_prec = 1.0 / (cfg_.prior_sd_theta * cfg_.prior_sd_theta);
    acc_prec_.assign(n_, theta_prec);
    acc_rhs_.assign(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) acc_rhs_[i] = prior_mean_[i] * theta_prec;
    for (std::size_t j = 0; j < m_; ++j)
      for (std::size_t k = 0; k < by_item_[j].size(); ++k) {
        const std::size_t i = by_item_[j][k].index;
        acc_prec_[i] += alpha_[j] * alpha_[j];
        acc_rhs_[i] += alpha_[j] * (z_[j][k] + beta_[j]);
      }
    for (std::size_t i = 0; i < n_; ++i) {
      const double var = 1.0 / acc_prec_[i];
      theta_[i] = acc_rhs_[i] * var + std::sqrt(var) * normal(rng_);
    }
  }

  double actor_logpost(std::size_t i, double t) const {
    const double sd = cfg_.prior_sd_theta;
    double lp = -0.5 * (t - prior_mean_[i]) * (t - prior_mean_[i]) / (sd * sd);
    for (const Obs& o : by_actor_[i]) lp += log_sigmoid(o.sign * (alpha_[o.index] * t - beta_[o.index]));
    return lp;
  }

  double item_logpost(std::size_t j, double a, double b) const {
    const double sd = cfg_.prior_sd_item;
    double lp = -0.5 * (a * a + b * b) / (sd * sd);
    for (const Obs& o : by_item_[j]) lp += log_sigmoid(o.sign * (a * theta_[o.index] - b));
    return lp;
  }

  void sweep_logistic() {
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;
    const double step = cfg_.proposal_sd;
    for (std::size_t j = 0; j < m_; ++j) {
      const double a = alpha_[j] + step * normal(rng_);
      const double b = beta_[j] + step * normal(rng_);
      const double log_ratio = item_logpost(j, a, b) - item_logpost(j, alpha_[j], beta_[j]);
      ++proposals_;
      if (std::log(unif(rng_)) < log_ratio) {
        alpha_[j] = a;
        beta_[j] = b;
        ++accepted_;
      }
    }
    for (std::size_t i = 0; i < n_; ++i) {
      const double t = theta_[i] + step * normal(rng_);
      const double log_ratio = actor_logpost(i, t) - actor_logpost(i, theta_[i]);
      ++proposals_;
      if (std::log(unif(rng_)) < log_ratio) {
        theta_[i] = t;
        ++accepted_;
      }
    }
  }

  void orient() {
    if (theta_[anchor_pos_] < theta_[anchor_neg_]) {
      for (double& t : theta_) t = -t;
      for (double& a : alpha_) a = -a;
    }
  }

  void check_finite() const {
    for (double t : theta_)
      if (!std::isfinite(t)) throw ChainDiverged("non-finite ideal point draw");
    for (std::size_t j = 0; j < m_; ++j)
      if (!std::isfinite(alpha_[j]) || !std::isfinite(beta_[j])) throw ChainDiverged("non-finite item draw");
  }

  double log_likelihood(const std::vector<double>& theta, const std::vector<double>& a,
                        const std::vector<double>& b) const {
    double ll = 0;
    for (std::size_t i = 0; i < n_; ++i)
      for (const Obs& o : by_actor_[i]) {
        const double eta = o.sign * (a[o.index] * theta[i] - b[o.index]);
        ll += cfg_.link == IrtLink::probit ? log_probit(eta) : log_sigmoid(eta);
      }
    return ll;
  }

  const IrtConfig& cfg_;
  std::mt19937_64 rng_;
  std::size_t n_ = 0, m_ = 0;
  std::vector<std::vector<Obs>> by_actor_, by_item_;
  std::size_t anchor_neg_ = 0, anchor_pos_ = 0;
  std::vector<double> prior_mean_, theta_, alpha_, beta_;
  std::vector<std::vector<double>> z_;
  std::vector<double> acc_prec_, acc_rhs_;
  std::size_t proposals_ = 0, accepted_ = 0;
};

struct Moments {
  std::vector<double> mean, m2;
  std::size_t count = 0;
  explicit Moments(std::size_t n) : mean(n, 0.0), m2(n, 0.0) {}
  void add(const std::vector<double>& x) {
    ++count;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean[i];
      mean[i] += d / static_cast<double>(count);
      m2[i] += d * (x[i] - mean[i]);
    }
  }
  double sd(std::size_t i) const { return count > 1 ? std::sqrt(m2[i] / static_cast<double>(count - 1)) : 0.0; }
};

}  // namespace

void IrtConfig::validate() const {
  if (n_burnin < 0) throw ConfigError("IrtConfig: n_burnin must be >= 0");
  if (n_samples <= n_burnin) throw ConfigError("IrtConfig: n_samples must exceed n_burnin");
  if (thin < 1) throw ConfigError("IrtConfig: thin must be >= 1");
  if (!(prior_sd_theta > 0) || !(prior_sd_item > 0)) throw ConfigError("IrtConfig: prior sds must be positive");
  if (anchor_negative.empty() || anchor_positive.empty()) throw AnchorMissing("IrtConfig: both anchors are required");
  if (anchor_negative == anchor_positive) throw ConfigError("IrtConfig: anchors must be distinct");
  if (!(proposal_sd > 0)) throw ConfigError("IrtConfig: proposal_sd must be positive");
}

ScalingResult irt_estimate(const ResponseMatrix& matrix, const IrtConfig& config) {
  config.validate();
  if (matrix.n_actors() < 2 || matrix.n_items() < 1) throw InsufficientData("irt_estimate: matrix too small");
  Sampler s(matrix, config);
  const std::size_t n = matrix.n_actors(), m = matrix.n_items();

  Moments theta_m(n), alpha_m(m), beta_m(m);
  const std::size_t kept = static_cast<std::size_t>((config.n_samples - config.n_burnin + config.thin - 1) / config.thin);
  constexpr std::size_t kMaxStoredDraws = 200'000'000;
  const bool store = n * kept <= kMaxStoredDraws;
  std::vector<float> draws;
  if (store) draws.reserve(n * kept);

  for (int iter = 0; iter < config.n_samples; ++iter) {
    if (config.link == IrtLink::probit) s.sweep_probit();
    else s.sweep_logistic();
    s.orient();
    s.check_finite();
    if (iter < config.n_burnin || (iter - config.n_burnin) % config.thin != 0) continue;
    theta_m.add(s.theta_);
    alpha_m.add(s.alpha_);
    beta_m.add(s.beta_);
    if (store)
      for (double t : s.theta_) draws.push_back(static_cast<float>(t));
  }

  ScalingResult res;
  res.method = ScalingMethod::irt;
  res.iterations = config.n_samples;
  res.coordinates.resize(static_cast<Eigen::Index>(n), 1);
  Eigen::VectorXd sd(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    res.actor_ids.push_back(matrix.actors()[i].id);
    res.coordinates(static_cast<Eigen::Index>(i), 0) = theta_m.mean[i];
    // A single kept draw has no spread; floor keeps the sd strictly positive.
    sd[static_cast<Eigen::Index>(i)] = std::max(theta_m.sd(i), 1e-12);
  }
  res.coordinate_sd = sd;

  if (store && theta_m.count > 0) {
    const std::size_t k = theta_m.count;
    Eigen::MatrixXd interval(static_cast<Eigen::Index>(n), 2);
    std::vector<float> col(k);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < k; ++d) col[d] = draws[d * n + i];
      std::sort(col.begin(), col.end());
      auto q = [&](double p) {
        const double pos = p * static_cast<double>(k - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, k - 1);
        const double frac = pos - static_cast<double>(lo);
        return (1 - frac) * col[lo] + frac * col[hi];
      };
      interval(static_cast<Eigen::Index>(i), 0) = q(0.05);
      interval(static_cast<Eigen::Index>(i), 1) = q(0.95);
    }
    res.credible_interval90 = interval;
  } else if (!store) {
    res.warnings.push_back("posterior draws too large to store; credible intervals omitted (increase thin)");
  }

  for (std::size_t j = 0; j < m; ++j) {
    res.item_ids.push_back(matrix.items()[j].id);
    res.item_params.emplace_back(IrtItem{alpha_m.mean[j], beta_m.mean[j], alpha_m.sd(j), beta_m.sd(j)});
  }

  // Fit at the posterior means.
  std::size_t correct = 0, total = 0;
  double minority = 0, errors = 0;
  for (std::size_t j = 0; j < m; ++j) {
    std::size_t pos = 0, neg = 0, err = 0;
    for (const auto& o : s.by_item_[j]) {
      const double eta = alpha_m.mean[j] * theta_m.mean[o.index] - beta_m.mean[j];
      (o.sign > 0 ? pos : neg)++;
      if ((eta >= 0 ? 1.0 : -1.0) != o.sign) ++err;
    }
    total += pos + neg;
    correct += pos + neg - err;
    minority += static_cast<double>(std::min(pos, neg));
    errors += static_cast<double>(err);
  }
  res.fit.correct_classification = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  res.fit.aggregate_proportional_reduction_in_error = minority > 0 ? (minority - errors) / minority : 0.0;
  res.fit.log_likelihood = s.log_likelihood(theta_m.mean, alpha_m.mean, beta_m.mean);
  if (config.link == IrtLink::logistic && s.proposals_ > 0) {
    const double rate = static_cast<double>(s.accepted_) / static_cast<double>(s.proposals_);
    if (rate < 0.1 || rate > 0.8)
      res.warnings.push_back("Metropolis acceptance rate " + std::to_string(rate) + " outside [0.1, 0.8]; tune proposal_sd");
  }
  return res;
}

}  // namespace ideo
