// Spatial roll-call scaling with a Gaussian deterministic utility and logit
// choice error. Actor coordinates live in the closed unit ball; items carry
// an outcome midpoint and a normal (half the displacement between the
// conservative and liberal outcome points).
//
//   u_c = beta * exp(-1/2 sum_k w_k^2 (x_k - (m_k + n_k))^2)
//   u_l = beta * exp(-1/2 sum_k w_k^2 (x_k - (m_k - n_k))^2)
//   P(conservative) = logistic(u_c - u_l)
//
// Estimation alternates projected gradient ascent over item and actor
// blocks. Every accepted step is non-decreasing in the block objective, so
// the total log-likelihood is non-decreasing across outer iterations.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "ideoscale/scaling.hpp"

namespace ideo {

namespace {

constexpr double kItemRadius = 3.0;
constexpr int kInnerSteps = 4;
constexpr int kMaxHalvings = 40;
constexpr int kGridWarmup = 3;
constexpr int kGridEvery = 10;
constexpr double kGridStep1 = 0.05;
constexpr double kGridStep2 = 0.125;

struct Obs {
  std::size_t index;  // item for actor lists, actor for item lists
  double sign;        // +1 conservative, -1 liberal
};

double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }
double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void project_ball(Eigen::VectorXd& v, double radius) {
  const double n = v.norm();
  if (n > radius) v *= radius / n;
}

class Model {
 public:
  Model(const ResponseMatrix& matrix, const SpatialConfig& cfg)
      : n_(matrix.n_actors()), m_(matrix.n_items()), d_(cfg.dims), beta_(cfg.beta), w2_(cfg.dims) {
    for (int k = 0; k < d_; ++k) w2_[k] = cfg.dim_weights[k] * cfg.dim_weights[k];
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
    // Gaussian utilities flatten far from both outcome points, so an actor
    // can sit in a poor local optimum on the wrong side of the ball. Each
    // actor update on a grid pass first checks a fixed grid over the ball.
    const double h = d_ == 1 ? kGridStep1 : kGridStep2;
    const int steps = static_cast<int>(std::lround(1.0 / h));
    if (d_ == 1) {
      for (int a = -steps; a <= steps; ++a) grid_.push_back(Eigen::VectorXd::Constant(1, a * h));
    } else {
      for (int a = -steps; a <= steps; ++a)
        for (int b = -steps; b <= steps; ++b) {
          Eigen::VectorXd v(2);
          v << a * h, b * h;
          if (v.norm() <= 1.0) grid_.push_back(v);
        }
    }
  }

  // Utility difference u_c - u_l.
  double delta(const Eigen::VectorXd& x, const Eigen::VectorXd& mid, const Eigen::VectorXd& nrm) const {
    double dc = 0, dl = 0;
    for (int k = 0; k < d_; ++k) {
      const double a = x[k] - mid[k] - nrm[k];
      const double b = x[k] - mid[k] + nrm[k];
      dc += w2_[k] * a * a;
      dl += w2_[k] * b * b;
    }
    return beta_ * (std::exp(-0.5 * dc) - std::exp(-0.5 * dl));
  }

  double actor_ll(std::size_t i, const Eigen::VectorXd& x) const {
    double ll = 0;
    for (const Obs& o : by_actor_[i]) ll += log_sigmoid(o.sign * delta(x, mid_[o.index], nrm_[o.index]));
    return ll;
  }

  Eigen::VectorXd actor_grad(std::size_t i, const Eigen::VectorXd& x) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(d_);
    for (const Obs& o : by_actor_[i]) {
      const auto& mid = mid_[o.index];
      const auto& nrm = nrm_[o.index];
      double dc = 0, dl = 0;
      for (int k = 0; k < d_; ++k) {
        const double a = x[k] - mid[k] - nrm[k];
        const double b = x[k] - mid[k] + nrm[k];
        dc += w2_[k] * a * a;
        dl += w2_[k] * b * b;
      }
      const double uc = beta_ * std::exp(-0.5 * dc), ul = beta_ * std::exp(-0.5 * dl);
      const double scale = o.sign * (1.0 - sigmoid(o.sign * (uc - ul)));
      for (int k = 0; k < d_; ++k) {
        const double a = x[k] - mid[k] - nrm[k];
        const double b = x[k] - mid[k] + nrm[k];
        g[k] += scale * w2_[k] * (-uc * a + ul * b);
      }
    }
    return g;
  }

  double item_ll(std::size_t j, const Eigen::VectorXd& mid, const Eigen::VectorXd& nrm) const {
    double ll = 0;
    for (const Obs& o : by_item_[j]) ll += log_sigmoid(o.sign * delta(x_[o.index], mid, nrm));
    return ll;
  }

  // Gradient with respect to (midpoint, normal), stacked.
  Eigen::VectorXd item_grad(std::size_t j, const Eigen::VectorXd& mid, const Eigen::VectorXd& nrm) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * d_);
    for (const Obs& o : by_item_[j]) {
      const auto& x = x_[o.index];
      double dc = 0, dl = 0;
      for (int k = 0; k < d_; ++k) {
        const double a = x[k] - mid[k] - nrm[k];
        const double b = x[k] - mid[k] + nrm[k];
        dc += w2_[k] * a * a;
        dl += w2_[k] * b * b;
      }
      const double uc = beta_ * std::exp(-0.5 * dc), ul = beta_ * std::exp(-0.5 * dl);
      const double scale = o.sign * (1.0 - sigmoid(o.sign * (uc - ul)));
      for (int k = 0; k < d_; ++k) {
        const double a = x[k] - mid[k] - nrm[k];
        const double b = x[k] - mid[k] + nrm[k];
        g[k] += scale * w2_[k] * (uc * a - ul * b);
        g[d_ + k] += scale * w2_[k] * (uc * a + ul * b);
      }
    }
    return g;
  }

  // A few projected normalized-gradient ascent steps with backtracking;
  // only improving steps are accepted.
  void update_actor(std::size_t i) {
    Eigen::VectorXd x = x_[i];
    double ll = actor_ll(i, x);
    if (grid_pass_) {
      for (const auto& g : grid_) {
        const double gll = actor_ll(i, g);
        if (gll > ll) {
          x = g;
          ll = gll;
        }
      }
    }
    double& step = actor_step_[i];
    for (int it = 0; it < kInnerSteps; ++it) {
      Eigen::VectorXd g = actor_grad(i, x);
      const double gn = g.norm();
      if (!(gn > 1e-12)) break;
      bool accepted = false;
      for (int h = 0; h < kMaxHalvings; ++h) {
        Eigen::VectorXd cand = x + (step / gn) * g;
        project_ball(cand, 1.0);
        const double cll = actor_ll(i, cand);
        if (cll > ll) {
          x = cand;
          ll = cll;
          step = std::min(step * 1.5, 0.5);
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        step = 1e-3;
        break;
      }
    }
    x_next_[i] = x;
  }

  void update_item(std::size_t j) {
    Eigen::VectorXd mid = mid_[j], nrm = nrm_[j];
    double ll = item_ll(j, mid, nrm);
    double& step = item_step_[j];
    for (int it = 0; it < kInnerSteps; ++it) {
      Eigen::VectorXd g = item_grad(j, mid, nrm);
      const double gn = g.norm();
      if (!(gn > 1e-12)) break;
      bool accepted = false;
      for (int h = 0; h < kMaxHalvings; ++h) {
        Eigen::VectorXd cm = mid + (step / gn) * g.head(d_);
        Eigen::VectorXd cn = nrm + (step / gn) * g.tail(d_);
        project_ball(cm, kItemRadius);
        project_ball(cn, kItemRadius);
        const double cll = item_ll(j, cm, cn);
        if (cll > ll) {
          mid = cm;
          nrm = cn;
          ll = cll;
          step = std::min(step * 1.5, 0.5);
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        step = 1e-3;
        break;
      }
    }
    mid_next_[j] = mid;
    nrm_next_[j] = nrm;
  }

  double total_ll() const {
    double ll = 0;
    for (std::size_t i = 0; i < n_; ++i) ll += actor_ll(i, x_[i]);
    return ll;
  }

  // Fraction of observed codes on the predicted side, and APRE.
  std::pair<double, double> classification() const {
    std::size_t correct = 0, total = 0;
    double minority_sum = 0, error_sum = 0;
    for (std::size_t j = 0; j < m_; ++j) {
      std::size_t pos = 0, neg = 0, errs = 0;
      for (const Obs& o : by_item_[j]) {
        const double dl = delta(x_[o.index], mid_[j], nrm_[j]);
        const double pred = dl >= 0 ? 1.0 : -1.0;
        (o.sign > 0 ? pos : neg)++;
        if (pred != o.sign) ++errs;
      }
      correct += by_item_[j].size() - errs;
      total += by_item_[j].size();
      minority_sum += static_cast<double>(std::min(pos, neg));
      error_sum += static_cast<double>(errs);
    }
    const double cc = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    const double apre = minority_sum > 0 ? (minority_sum - error_sum) / minority_sum : 0.0;
    return {cc, apre};
  }

  template <typename F>
  void parallel_for(std::size_t count, unsigned threads, F&& f) {
    if (threads <= 1 || count < 2) {
      for (std::size_t i = 0; i < count; ++i) f(i);
      return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (count + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t lo = t * chunk, hi = std::min(count, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([&, lo, hi] {
        for (std::size_t i = lo; i < hi; ++i) f(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  void items_block(unsigned threads) {
    mid_next_ = mid_;
    nrm_next_ = nrm_;
    parallel_for(m_, threads, [this](std::size_t j) { update_item(j); });
    mid_.swap(mid_next_);
    nrm_.swap(nrm_next_);
  }

  void actors_block(unsigned threads) {
    x_next_ = x_;
    parallel_for(n_, threads, [this](std::size_t i) { update_actor(i); });
    x_.swap(x_next_);
  }

  // Initial outcome geometry from the current coordinates: normal points
  // from the liberal voters' centroid toward the conservatives'.
  void init_items() {
    mid_.assign(m_, Eigen::VectorXd::Zero(d_));
    nrm_.assign(m_, Eigen::VectorXd::Zero(d_));
    for (std::size_t j = 0; j < m_; ++j) {
      Eigen::VectorXd cpos = Eigen::VectorXd::Zero(d_), cneg = Eigen::VectorXd::Zero(d_);
      double npos = 0, nneg = 0;
      for (const Obs& o : by_item_[j]) {
        if (o.sign > 0) {
          cpos += x_[o.index];
          npos += 1;
        } else {
          cneg += x_[o.index];
          nneg += 1;
        }
      }
      if (npos > 0) cpos /= npos;
      if (nneg > 0) cneg /= nneg;
      Eigen::VectorXd dir = cpos - cneg;
      if (dir.norm() < 1e-9) {
        dir = Eigen::VectorXd::Zero(d_);
        dir[0] = 1.0;
      }
      mid_[j] = 0.5 * (cpos + cneg);
      nrm_[j] = 0.5 * dir.normalized();
    }
    item_step_.assign(m_, 0.1);
  }

  std::size_t n_, m_;
  int d_;
  double beta_;
  std::vector<double> w2_;
  std::vector<std::vector<Obs>> by_actor_, by_item_;
  std::vector<Eigen::VectorXd> x_, x_next_, mid_, nrm_, mid_next_, nrm_next_;
  std::vector<Eigen::VectorXd> grid_;
  bool grid_pass_ = false;
  std::vector<double> actor_step_, item_step_;
};

void check_degenerate(const ResponseMatrix& matrix) {
  for (std::size_t i = 0; i < matrix.n_actors(); ++i) {
    int seen = 0;
    for (Code c : matrix.row(i))
      if (c != Code::missing) seen |= c == Code::conservative ? 1 : 2;
    if (seen != 3) throw DegenerateMatrix("actor " + matrix.actors()[i].id + " has all-identical substantive codes");
  }
  for (std::size_t j = 0; j < matrix.n_items(); ++j) {
    int seen = 0;
    for (std::size_t i = 0; i < matrix.n_actors(); ++i) {
      Code c = matrix.code(i, j);
      if (c != Code::missing) seen |= c == Code::conservative ? 1 : 2;
    }
    if (seen != 3) throw DegenerateMatrix("item " + matrix.items()[j].id + " has all-identical substantive codes");
  }
}

// Classical-scaling start from the pairwise agreement matrix.
std::vector<Eigen::VectorXd> eigen_start(const ResponseMatrix& matrix, int dims) {
  const std::size_t n = matrix.n_actors();
  Eigen::MatrixXd d2(n, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a; b < n; ++b) {
      double agree = 0, both = 0;
      auto ra = matrix.row(a), rb = matrix.row(b);
      for (std::size_t j = 0; j < ra.size(); ++j)
        if (ra[j] != Code::missing && rb[j] != Code::missing) {
          both += 1;
          agree += ra[j] == rb[j] ? 1 : 0;
        }
      const double dist = both > 0 ? 1.0 - agree / both : 1.0;
      d2(a, b) = d2(b, a) = dist * dist;
    }
  Eigen::MatrixXd j = Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  Eigen::MatrixXd bmat = -0.5 * j * d2 * j;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(bmat);
  std::vector<Eigen::VectorXd> x(n, Eigen::VectorXd::Zero(dims));
  double max_norm = 0;
  for (int k = 0; k < dims; ++k) {
    const Eigen::Index col = static_cast<Eigen::Index>(n) - 1 - k;
    const double ev = std::max(es.eigenvalues()[col], 0.0);
    for (std::size_t i = 0; i < n; ++i) x[i][k] = es.eigenvectors()(static_cast<Eigen::Index>(i), col) * std::sqrt(ev);
  }
  for (const auto& v : x) max_norm = std::max(max_norm, v.norm());
  if (max_norm > 0)
    for (auto& v : x) v *= 0.9 / max_norm;
  return x;
}

}  // namespace

void SpatialConfig::validate() const {
  if (dims != 1 && dims != 2) throw ConfigError("SpatialConfig: dims must be 1 or 2");
  if (!(beta > 0)) throw ConfigError("SpatialConfig: beta must be positive");
  if (dim_weights.size() < static_cast<std::size_t>(dims))
    throw ConfigError("SpatialConfig: need one weight per dimension");
  if (dim_weights[0] != 1.0) throw ConfigError("SpatialConfig: first dimension weight is fixed at 1.0");
  for (double w : dim_weights)
    if (!(w > 0)) throw ConfigError("SpatialConfig: dimension weights must be positive");
  if (!(tol > 0)) throw ConfigError("SpatialConfig: tol must be positive");
  if (max_iters < 1) throw ConfigError("SpatialConfig: max_iters must be >= 1");
}

double nominate_log_likelihood(const ResponseMatrix& matrix, const SpatialConfig& config,
                               const Eigen::MatrixXd& coordinates, const std::vector<NominateItem>& items) {
  Model model(matrix, config);
  model.x_.resize(matrix.n_actors());
  for (std::size_t i = 0; i < matrix.n_actors(); ++i) model.x_[i] = coordinates.row(static_cast<Eigen::Index>(i)).transpose();
  for (const auto& it : items) {
    model.mid_.push_back(it.midpoint);
    model.nrm_.push_back(it.normal);
  }
  return model.total_ll();
}

ScalingResult nominate_scale(const ResponseMatrix& matrix, const SpatialConfig& config) {
  config.validate();
  if (matrix.n_actors() < 2 || matrix.n_items() < 1) throw InsufficientData("nominate_scale: matrix too small");
  if (static_cast<std::size_t>(config.dims) > matrix.n_items())
    throw InsufficientData("nominate_scale: more dimensions than items");
  check_degenerate(matrix);

  Model model(matrix, config);
  const std::size_t n = matrix.n_actors(), m = matrix.n_items();
  const int d = config.dims;

  if (config.init == SpatialInit::eigen) {
    model.x_ = eigen_start(matrix, d);
  } else {
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;
    model.x_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::VectorXd v(d);
      for (int k = 0; k < d; ++k) v[k] = normal(rng);
      const double r = std::pow(unif(rng), 1.0 / d);
      model.x_[i] = v.normalized() * r;
    }
  }
  model.actor_step_.assign(n, 0.1);
  model.init_items();

  ScalingResult res;
  res.method = ScalingMethod::nominate;
  double prev_ll = model.total_ll();
  double prev_cc = model.classification().first;
  res.converged = false;
  int iter = 0;
  for (iter = 1; iter <= config.max_iters; ++iter) {
    model.items_block(config.threads);
    model.grid_pass_ = iter <= kGridWarmup || iter % kGridEvery == 0;
    model.actors_block(config.threads);
    const double ll = model.total_ll();
    const double cc = model.classification().first;
    res.objective_trace.push_back(ll);
    const double rel = std::abs(ll - prev_ll) / std::max(1.0, std::abs(prev_ll));
    if (std::abs(cc - prev_cc) < config.tol && rel < config.tol) {
      res.converged = true;
      break;
    }
    prev_ll = ll;
    prev_cc = cc;
  }
  res.iterations = std::min(iter, config.max_iters);
  if (!res.converged)
    res.warnings.push_back("NonConvergence: max_iters reached before the classification and likelihood gains fell below tol");

  // Sign convention: Democrats to the left on the first dimension.
  double dem_sum = 0;
  std::size_t dem_n = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (matrix.actors()[i].group == "Democrat") {
      dem_sum += model.x_[i][0];
      ++dem_n;
    }
  if (dem_n > 0) {
    if (dem_sum > 0) {
      for (auto& x : model.x_) x[0] = -x[0];
      for (std::size_t j = 0; j < m; ++j) {
        model.mid_[j][0] = -model.mid_[j][0];
        model.nrm_[j][0] = -model.nrm_[j][0];
      }
    } else if (dem_sum == 0) {
      res.warnings.push_back("Democrat mean on dimension 1 is exactly 0; orientation left unchanged");
    }
  }

  res.coordinates.resize(static_cast<Eigen::Index>(n), d);
  for (std::size_t i = 0; i < n; ++i) {
    res.coordinates.row(static_cast<Eigen::Index>(i)) = model.x_[i].transpose();
    res.actor_ids.push_back(matrix.actors()[i].id);
  }
  for (std::size_t j = 0; j < m; ++j) {
    res.item_ids.push_back(matrix.items()[j].id);
    res.item_params.emplace_back(NominateItem{model.mid_[j], model.nrm_[j]});
  }
  auto [cc, apre] = model.classification();
  res.fit.correct_classification = cc;
  res.fit.aggregate_proportional_reduction_in_error = apre;
  res.fit.log_likelihood = model.total_ll();
  return res;
}

}  // namespace ideo
