#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include <boost/math/distributions/binomial.hpp>
#include <fmt/format.h>

#include "ideoscale/hash.hpp"
#include "ideoscale/llm.hpp"
#include "ideoscale/metrics.hpp"
#include "ideoscale/pipeline.hpp"
#include "ideoscale/scaling.hpp"
#include "ideoscale/stats.hpp"
#include "ideoscale/synthetic.hpp"
#include "support.hpp"

using namespace ideo;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Wall = std::chrono::steady_clock;

double seconds_since(Wall::time_point t0) {
  return std::chrono::duration<double>(Wall::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome scaling_recovery() {
  const auto gen = synthetic::spatial(100, 200, 2, 8.0, {1.0, 0.5}, 42);
  SpatialConfig cfg;
  cfg.dims = 2;
  cfg.beta = 8.0;
  cfg.dim_weights = {1.0, 0.5};
  cfg.seed = 42;
  const auto t0 = Wall::now();
  const ScalingResult res = nominate_scale(gen.matrix, cfg);
  const double secs = seconds_since(t0);

  Eigen::MatrixXd truth(static_cast<Eigen::Index>(res.actor_ids.size()), 2);
  for (std::size_t i = 0; i < res.actor_ids.size(); ++i)
    truth.row(static_cast<Eigen::Index>(i)) = gen.truth.row(static_cast<Eigen::Index>(*gen.matrix.actor_index(res.actor_ids[i])));
  const auto aligned = procrustes_align(res.coordinates, truth).aligned;
  const double r1 = testing::pearson(aligned.col(0), truth.col(0));
  const double r2 = testing::pearson(aligned.col(1), truth.col(1));
  return {r1 >= 0.90 && r2 >= 0.90 && secs < 60.0, fmt::format("r1={:.4f} r2={:.4f} time={:.1f}s", r1, r2, secs)};
}

Outcome polarized_blocs() {
  const auto m = synthetic::polarized_blocs(25, 60);
  SpatialConfig cfg;
  cfg.dims = 1;
  cfg.dim_weights = {1.0};
  const auto res = nominate_scale(m, cfg);
  std::vector<double> scores;
  std::vector<bool> labels;
  for (std::size_t i = 0; i < res.actor_ids.size(); ++i) {
    scores.push_back(res.coordinates(static_cast<Eigen::Index>(i), 0));
    labels.push_back(m.actors()[*m.actor_index(res.actor_ids[i])].group == "Republican");
  }
  const auto margin = separability_margin(scores, labels);
  const double cc = res.fit.correct_classification;
  return {cc == 1.0 && margin.violations == 0, fmt::format("cc={} violations={}", cc, margin.violations)};
}

Outcome irt_calibration() {
  const auto gen = synthetic::irt_probit(300, 46, 1.5, 42);
  IrtConfig cfg;
  cfg.seed = 42;
  cfg.anchor_negative = gen.matrix.actors()[0].id;
  cfg.anchor_positive = gen.matrix.actors()[1].id;
  const auto a = irt_estimate(gen.matrix, cfg);
  const auto b = irt_estimate(gen.matrix, cfg);

  const auto n = static_cast<Eigen::Index>(a.actor_ids.size());
  Eigen::VectorXd truth(n);
  std::size_t covered = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    truth(i) = gen.truth(static_cast<Eigen::Index>(*gen.matrix.actor_index(a.actor_ids[static_cast<std::size_t>(i)])), 0);
    const auto& ci = *a.credible_interval90;
    covered += ci(i, 0) <= truth(i) && truth(i) <= ci(i, 1);
  }
  const double r = testing::pearson(a.coordinates.col(0), truth);
  const double coverage = static_cast<double>(covered) / static_cast<double>(n);
  const bool same = a.coordinates == b.coordinates && *a.coordinate_sd == *b.coordinate_sd &&
                    *a.credible_interval90 == *b.credible_interval90;
  return {r >= 0.95 && coverage >= 0.85 && coverage <= 0.95 && same,
          fmt::format("r={:.4f} coverage90={:.3f} identical_runs={}", r, coverage, same)};
}

Outcome pca_sanity() {
  const auto rank1 = testing::matrix_from({{1, 1, -1}, {-1, -1, 1}, {1, 1, -1}, {-1, -1, 1}, {1, 1, -1}});
  const double ev = (*pca_scale(rank1, 1).fit.explained_variance_ratio)[0];
  const auto gen = synthetic::latent_logistic(500, 46, 42);
  const auto res = pca_scale(gen.matrix, 1);
  Eigen::VectorXd latent(static_cast<Eigen::Index>(res.actor_ids.size()));
  for (std::size_t i = 0; i < res.actor_ids.size(); ++i)
    latent(static_cast<Eigen::Index>(i)) = gen.truth(static_cast<Eigen::Index>(*gen.matrix.actor_index(res.actor_ids[i])), 0);
  const double r = std::abs(testing::pearson(res.coordinates.col(0), latent));
  return {std::abs(ev - 1.0) <= 1e-9 && r >= 0.9, fmt::format("rank1_ev={:.12f} |r|={:.4f}", ev, r)};
}

Outcome metric_identities() {
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t len = 2 + rng() % 59;
    std::vector<Code> codes(len);
    double sum = 0;
    for (auto& c : codes) {
      c = rng() % 2 ? Code::conservative : Code::liberal;
      sum += static_cast<double>(static_cast<int>(c));
    }
    const double mean = sum / static_cast<double>(len);
    worst = std::max(worst, std::abs(consistency_variance(codes) - (1.0 - mean * mean)));
  }

  // Agreement per subject 1, 1/3, 1/3, 1 and even margins: (2/3 - 1/2) / (1 - 1/2).
  Eigen::MatrixXi table(4, 2);
  table << 3, 0, 2, 1, 1, 2, 0, 3;
  const double kappa = fleiss_kappa(table).kappa;
  Eigen::MatrixXi agree(3, 3);
  agree << 4, 0, 0, 0, 4, 0, 4, 0, 0;
  const double all_agree = fleiss_kappa(agree).kappa;

  const auto m = testing::matrix_from({{1, 1}, {1, 1}, {1, -1}}, {"Model", "Democrat", "Democrat"});
  const double alignment = party_alignment(m, "a0", "Democrat", "Democrat").dem_alignment;

  const bool ok = worst <= 1e-12 && std::abs(kappa - 1.0 / 3.0) <= 1e-9 && all_agree == 1.0 && alignment == 0.75;
  return {ok, fmt::format("variance_err={:.1e} fleiss={:.12f} all_agree={} alignment={}", worst, kappa, all_agree,
                          alignment)};
}

double dummy_oracle_gap(std::mt19937_64& rng, bool interaction) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const std::size_t people = 15 + rng() % 20, per = 2 + rng() % 4;
  std::vector<std::string> key;
  std::vector<double> y, d, m;
  for (std::size_t i = 0; i < people; ++i) {
    const double alpha = z(rng), mod = static_cast<double>(1 + rng() % 5);
    for (std::size_t t = 0; t < per; ++t) {
      key.push_back("p" + std::to_string(i));
      d.push_back(coin(rng) ? 1.0 : 0.0);
      m.push_back(mod);
      y.push_back(alpha + 0.2 * d.back() + z(rng));
    }
  }
  DataTable table;
  table.add_text("pid", key);
  table.add_numeric("y", y);
  table.add_numeric("d", d);
  table.add_numeric("m", m);

  std::vector<std::vector<double>> regs{d};
  if (interaction) {
    std::vector<double> dm(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) dm[i] = d[i] * m[i];
    regs.push_back(dm);
  }
  const auto n = static_cast<Eigen::Index>(y.size());
  const auto k = static_cast<Eigen::Index>(regs.size());
  const auto g = static_cast<Eigen::Index>(people);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, k + g);
  Eigen::VectorXd Y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < k; ++c) X(r, c) = regs[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)];
    X(r, k + r / static_cast<Eigen::Index>(per)) = 1.0;
    Y(r) = y[static_cast<std::size_t>(r)];
  }
  const Eigen::MatrixXd inv = (X.transpose() * X).inverse();
  const Eigen::VectorXd b = inv * X.transpose() * Y;
  const Eigen::VectorXd e = Y - X * b;
  const double df = static_cast<double>(n - k - g);
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k + g, k + g);
  for (Eigen::Index r = 0; r < n; ++r) meat += e(r) * e(r) * X.row(r).transpose() * X.row(r);
  const Eigen::MatrixXd v = static_cast<double>(n) / df * inv * meat * inv;

  const auto res = interaction ? interaction_fe_ols(table, "y", "d", {"m"}, std::string("pid"))
                               : fe_ols(table, "y", "d", std::string("pid"));
  double gap = 0.0;
  for (Eigen::Index c = 0; c < k; ++c) {
    gap = std::max(gap, std::abs(res.terms[static_cast<std::size_t>(c)].coefficient - b(c)));
    gap = std::max(gap, std::abs(res.terms[static_cast<std::size_t>(c)].std_error - std::sqrt(v(c, c))));
  }
  return gap;
}

Outcome regression_equivalence() {
  std::mt19937_64 rng(99);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    worst = std::max(worst, dummy_oracle_gap(rng, false));
    worst = std::max(worst, dummy_oracle_gap(rng, true));
  }

  std::mt19937_64 panel_rng(2025);
  std::uniform_real_distribution<double> u(0.0, 1.0), base(0.3, 0.7);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::string> key;
  std::vector<double> y, d;
  for (int i = 0; i < 1500; ++i) {
    const double b = base(panel_rng);
    for (int t = 0; t < 4; ++t) {
      key.push_back("p" + std::to_string(i));
      d.push_back(coin(panel_rng) ? 1.0 : 0.0);
      y.push_back(u(panel_rng) < b + 0.05 * d.back() ? 1.0 : 0.0);
    }
  }
  DataTable table;
  table.add_text("pid", key);
  table.add_numeric("y", y);
  table.add_numeric("d", d);
  const auto& t = fe_ols(table, "y", "d", std::string("pid")).term("d");
  const bool planted = std::abs(t.coefficient - 0.05) <= 2.0 * t.std_error;
  return {worst <= 1e-8 && planted,
          fmt::format("max_oracle_gap={:.1e} planted_est={:.4f} se={:.4f}", worst, t.coefficient, t.std_error)};
}

Outcome harness_determinism() {
  testing::TempDir dir;
  VirtualClock clock;
  MockProvider provider([](const ChatRequest& r) {
    return r.messages.back().content.size() % 2 ? std::string("Yay") : std::string("Nay");
  });
  ProviderConfig cfg;
  cfg.provider_id = "mock";
  cfg.model_name = "mock-model";
  cfg.cache_dir = dir / "cache";
  cfg.requests_per_minute = 20;
  std::vector<Item> items;
  for (int j = 0; j < 40; ++j) {
    Item it = testing::binary_item("hr" + std::to_string(j));
    it.text = "A bill concerning matter number " + std::to_string(j * 7) + std::string(static_cast<std::size_t>(j % 3), '!');
    items.push_back(it);
  }
  double kappa = 0.0;
  {
    QueryEngine engine(cfg, provider, clock);
    kappa = run_instrument(engine, items, "llm:mock", 3).stability.value().kappa;
  }
  provider.reset_count();
  QueryEngine again(cfg, provider, clock);
  run_instrument(again, items, "llm:mock", 3);
  const std::size_t second_pass = provider.request_count();

  VirtualClock lclock(0.0);
  RateLimiter limiter(lclock, 7);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    limiter.acquire();
    lclock.advance(static_cast<double>(rng() % 12));
  }
  const auto& h = limiter.history();
  std::size_t worst_window = 0;
  for (std::size_t a = 0; a < h.size(); ++a) {
    std::size_t in_window = 0;
    for (std::size_t b = a; b < h.size() && h[b] < h[a] + 60.0; ++b) ++in_window;
    worst_window = std::max(worst_window, in_window);
  }
  return {kappa == 1.0 && second_pass == 0 && worst_window <= 7,
          fmt::format("kappa={} second_pass_requests={} max_per_window={}/7", kappa, second_pass, worst_window)};
}

Outcome experiment_protocol() {
  testing::TempDir dir;
  const ExperimentConfig config = default_experiment_config();
  EventStore store(dir / "events", false);
  VirtualClock clock(0.0);
  ExperimentService service(config, store, clock, {});

  constexpr std::size_t kSessions = 10000;
  const std::size_t topics = config.topics.size();
  std::map<std::string, std::size_t> topic_index;
  for (std::size_t t = 0; t < topics; ++t) topic_index[config.topics[t].name] = t;
  Eigen::MatrixXd treated = Eigen::MatrixXd::Zero(kSessions, static_cast<Eigen::Index>(topics));
  for (std::size_t s = 0; s < kSessions; ++s) {
    const Session sess = service.create_session(fmt::format("sim{:05d}", s));
    for (const auto& a : sess.assignments)
      treated(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(topic_index.at(a.topic))) = a.treated ? 1.0 : 0.0;
  }
  const boost::math::binomial_distribution<double> dist(static_cast<double>(kSessions), config.treatment_probability);
  const double lo = boost::math::quantile(dist, 0.005), hi = boost::math::quantile(dist, 0.995);
  bool shares_ok = true;
  std::string shares;
  for (std::size_t t = 0; t < topics; ++t) {
    const double count = treated.col(static_cast<Eigen::Index>(t)).sum();
    shares_ok = shares_ok && count >= lo && count <= hi;
    shares += fmt::format("{}{}", t ? "," : "", count);
  }
  double max_rho = 0.0;
  for (std::size_t a = 0; a < topics; ++a)
    for (std::size_t b = a + 1; b < topics; ++b)
      max_rho = std::max(max_rho, std::abs(testing::pearson(treated.col(static_cast<Eigen::Index>(a)),
                                                            treated.col(static_cast<Eigen::Index>(b)))));

  ExperimentConfig always = config;
  always.treatment_probability = 1.0;
  testing::TempDir tdir;
  EventStore tstore(tdir / "events", false);
  VirtualClock tclock(500.0);
  ExperimentService timed(always, tstore, tclock, {});
  const Session ts = timed.create_session("timer");
  const std::string q = ts.assignments[0].question_id;
  timed.display_question(ts.session_id, q);
  tclock.set(std::nextafter(680.0, 0.0));
  bool early_refused = false;
  try {
    timed.record_vote(ts.session_id, q, "Yes");
  } catch (const TimerNotElapsed&) {
    early_refused = true;
  }
  tclock.set(680.0);
  bool on_time_accepted = true;
  try {
    timed.record_vote(ts.session_id, q, "Yes");
  } catch (const Error&) {
    on_time_accepted = false;
  }

  testing::TempDir pdir;
  EventStore pstore(pdir / "events", false);
  VirtualClock pclock(0.0);
  MockProvider chat("Some considerations on both sides.");
  std::map<std::string, Provider*> providers;
  for (const auto& [ref, pc] : config.providers) providers[ref] = &chat;
  ExperimentService panel(config, pstore, pclock, providers);
  simulate_panel(panel, pclock, PanelSimulation{}, "wave1", 300, 0, 42);
  std::size_t replayed = 0, identical = 0;
  for (const auto& pid : pstore.participants()) {
    const Session again = replay_session(pstore.load(pid), config);
    ++replayed;
    identical += session_to_json(again) == session_to_json(panel.get_session(again.session_id));
  }

  const bool ok = shares_ok && max_rho < 0.05 && early_refused && on_time_accepted && replayed > 0 && identical == replayed;
  return {ok, fmt::format("treated_per_topic=[{}] interval=[{},{}] max|rho|={:.4f} timer_early_refused={} "
                          "timer_at_180_accepted={} replay_identical={}/{}",
                          shares, lo, hi, max_rho, early_refused, on_time_accepted, identical, replayed)};
}

Outcome demo_run() {
  testing::TempDir dir;
  auto run = [&](const std::string& name) {
    const std::string cmd = fmt::format("\"{}\" demo --out-dir \"{}\" > \"{}\" 2>&1", IDEO_CLI, (dir / name).string(),
                                        (dir / (name + ".log")).string());
    const auto t0 = Wall::now();
    const int rc = std::system(cmd.c_str());
    return std::make_pair(rc, seconds_since(t0));
  };
  const auto [rc_a, secs_a] = run("a");
  const auto [rc_b, secs_b] = run("b");
  if (rc_a != 0 || rc_b != 0) return {false, fmt::format("demo exit codes {} and {}", rc_a, rc_b)};

  const RunManifest ma = RunManifest::from_json(slurp(dir / "a" / "manifest.json"));
  const RunManifest mb = RunManifest::from_json(slurp(dir / "b" / "manifest.json"));
  bool stages = true;
  for (const char* s : {"ingest", "query", "scale", "metrics", "analyze"})
    stages = stages && ma.stage(s) && ma.stage(s)->status == "ran";
  std::size_t differing = ma.output_paths == mb.output_paths ? 0 : 1;
  for (const auto& rel : ma.output_paths) differing += slurp(dir / "a" / rel) != slurp(dir / "b" / rel);
  const double slowest = std::max(secs_a, secs_b);
  return {stages && differing == 0 && slowest < 300.0 && !ma.output_paths.empty(),
          fmt::format("outputs={} differing={} slowest_run={:.1f}s", ma.output_paths.size(), differing, slowest)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"scaling recovery", scaling_recovery},
      {"perfect polarization", polarized_blocs},
      {"irt calibration", irt_calibration},
      {"pca sanity", pca_sanity},
      {"metric identities", metric_identities},
      {"regression equivalence", regression_equivalence},
      {"harness determinism", harness_determinism},
      {"experiment protocol", experiment_protocol},
      {"end-to-end demo", demo_run},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    const auto t0 = Wall::now();
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    fmt::print("{} [{}] {}: {} ({:.1f}s)\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, o.detail,
               seconds_since(t0));
    std::fflush(stdout);
  }
  fmt::print("{}/{} criteria passed\n", criteria.size() - static_cast<std::size_t>(failures), criteria.size());
  return failures == 0 ? 0 : 1;
}
