#include "ideoscale/synthetic.hpp"

#include <cmath>
#include <random>
#include <string>

namespace ideo::synthetic {

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::string pad(std::size_t i, int width = 4) {
  std::string s = std::to_string(i);
  return std::string(width > static_cast<int>(s.size()) ? width - s.size() : 0, '0') + s;
}

Item binary_item(std::string id, ItemSource source, std::optional<Topic> topic, std::vector<std::string> domain,
                 std::size_t conservative) {
  Item it;
  it.id = std::move(id);
  it.source = source;
  it.topic = topic;
  it.text = "Synthetic item " + it.id;
  it.answer_domain = std::move(domain);
  it.conservative_answer = conservative;
  return it;
}

Code bernoulli_code(std::mt19937_64& rng, double p) {
  std::uniform_real_distribution<double> unif;
  return unif(rng) < p ? Code::conservative : Code::liberal;
}

// Regenerate a column until it has both codes, so the result is always
// usable by estimators that reject unanimous items.
template <typename Draw>
void fill_nonconstant(std::vector<Code>& codes, std::size_t n, std::size_t m, std::size_t j, Draw&& draw) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    int seen = 0;
    for (std::size_t i = 0; i < n; ++i) {
      codes[i * m + j] = draw(i);
      if (codes[i * m + j] != Code::missing) seen |= codes[i * m + j] == Code::conservative ? 1 : 2;
    }
    if (seen == 3) return;
  }
}

}  // namespace

Generated spatial(std::size_t n_actors, std::size_t n_items, int dims, double beta, std::vector<double> dim_weights,
                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n_actors), dims);
  for (std::size_t i = 0; i < n_actors; ++i) {
    Eigen::VectorXd v(dims);
    for (int k = 0; k < dims; ++k) v[k] = normal(rng);
    x.row(static_cast<Eigen::Index>(i)) = (v.normalized() * std::pow(unif(rng), 1.0 / dims)).transpose();
  }
  std::vector<Eigen::VectorXd> mid(n_items), nrm(n_items);
  for (std::size_t j = 0; j < n_items; ++j) {
    Eigen::VectorXd v(dims), dir(dims);
    for (int k = 0; k < dims; ++k) {
      v[k] = normal(rng);
      dir[k] = normal(rng);
    }
    mid[j] = v.normalized() * 0.7 * std::pow(unif(rng), 1.0 / dims);
    nrm[j] = dir.normalized() * (0.2 + 0.4 * unif(rng));
  }

  std::vector<Actor> actors;
  for (std::size_t i = 0; i < n_actors; ++i) {
    Actor a;
    a.id = "sim:" + pad(i);
    a.kind = ActorKind::legislator;
    a.display_name = a.id;
    a.group = x(static_cast<Eigen::Index>(i), 0) < 0 ? "Democrat" : "Republican";
    actors.push_back(std::move(a));
  }
  std::vector<Item> items;
  for (std::size_t j = 0; j < n_items; ++j)
    items.push_back(binary_item("sim:rc" + pad(j), ItemSource::house_bill, std::nullopt, {"Yay", "Nay", "Abstain"}, 0));

  std::vector<Code> codes(n_actors * n_items);
  for (std::size_t j = 0; j < n_items; ++j)
    fill_nonconstant(codes, n_actors, n_items, j, [&](std::size_t i) {
      double dc = 0, dl = 0;
      for (int k = 0; k < dims; ++k) {
        const double w2 = dim_weights[k] * dim_weights[k];
        const double xi = x(static_cast<Eigen::Index>(i), k);
        dc += w2 * std::pow(xi - mid[j][k] - nrm[j][k], 2);
        dl += w2 * std::pow(xi - mid[j][k] + nrm[j][k], 2);
      }
      return bernoulli_code(rng, logistic(beta * (std::exp(-0.5 * dc) - std::exp(-0.5 * dl))));
    });
  return {ResponseMatrix(std::move(actors), std::move(items), std::move(codes), "synthetic spatial"), x};
}

ResponseMatrix polarized_blocs(std::size_t per_bloc, std::size_t n_items) {
  std::vector<Actor> actors;
  for (std::size_t i = 0; i < 2 * per_bloc; ++i) {
    Actor a;
    const bool left = i < per_bloc;
    a.id = std::string(left ? "bloc:d" : "bloc:r") + pad(i);
    a.kind = ActorKind::legislator;
    a.display_name = a.id;
    a.group = left ? "Democrat" : "Republican";
    actors.push_back(std::move(a));
  }
  std::vector<Item> items;
  for (std::size_t j = 0; j < n_items; ++j)
    items.push_back(binary_item("bloc:rc" + pad(j), ItemSource::house_bill, std::nullopt, {"Yay", "Nay", "Abstain"}, 0));
  std::vector<Code> codes(actors.size() * n_items);
  for (std::size_t i = 0; i < actors.size(); ++i)
    for (std::size_t j = 0; j < n_items; ++j) {
      const bool left = i < per_bloc;
      const bool flip = j % 2 == 1;
      codes[i * n_items + j] = (left != flip) ? Code::liberal : Code::conservative;
    }
  return ResponseMatrix(std::move(actors), std::move(items), std::move(codes), "polarized blocs");
}

Generated latent_logistic(std::size_t n_actors, std::size_t n_items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  Eigen::MatrixXd theta(static_cast<Eigen::Index>(n_actors), 1);
  for (std::size_t i = 0; i < n_actors; ++i) theta(static_cast<Eigen::Index>(i), 0) = normal(rng);
  std::vector<double> a(n_items), b(n_items);
  for (std::size_t j = 0; j < n_items; ++j) {
    a[j] = 0.8 + 1.7 * unif(rng);
    b[j] = normal(rng) * 0.8;
  }
  std::vector<Actor> actors;
  for (std::size_t i = 0; i < n_actors; ++i) {
    Actor ac;
    ac.id = "lat:" + pad(i);
    ac.kind = ActorKind::respondent;
    ac.display_name = ac.id;
    actors.push_back(std::move(ac));
  }
  std::vector<Item> items;
  for (std::size_t j = 0; j < n_items; ++j)
    items.push_back(binary_item("lat:q" + pad(j), ItemSource::survey_question,
                                all_topics()[j % all_topics().size()], {"Support", "Oppose"}, 0));
  std::vector<Code> codes(n_actors * n_items);
  for (std::size_t j = 0; j < n_items; ++j)
    fill_nonconstant(codes, n_actors, n_items, j, [&](std::size_t i) {
      return bernoulli_code(rng, logistic(a[j] * (theta(static_cast<Eigen::Index>(i), 0) - b[j])));
    });
  return {ResponseMatrix(std::move(actors), std::move(items), std::move(codes), "synthetic latent trait"), theta};
}

Generated irt_probit(std::size_t n_actors, std::size_t n_items, double item_sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd theta(static_cast<Eigen::Index>(n_actors), 1);
  for (std::size_t i = 0; i < n_actors; ++i) {
    const double mu = i == 0 ? -1.0 : (i == 1 ? 1.0 : 0.0);
    theta(static_cast<Eigen::Index>(i), 0) = mu + normal(rng);
  }
  std::vector<double> a(n_items), b(n_items);
  for (std::size_t j = 0; j < n_items; ++j) {
    a[j] = item_sd * normal(rng);
    b[j] = item_sd * normal(rng);
  }
  std::vector<Actor> actors;
  for (std::size_t i = 0; i < n_actors; ++i) {
    Actor ac;
    ac.id = "irt:" + pad(i);
    ac.kind = ActorKind::respondent;
    ac.display_name = ac.id;
    actors.push_back(std::move(ac));
  }
  std::vector<Item> items;
  for (std::size_t j = 0; j < n_items; ++j)
    items.push_back(binary_item("irt:q" + pad(j), ItemSource::survey_question,
                                all_topics()[j % all_topics().size()], {"Support", "Oppose"}, 0));
  std::vector<Code> codes(n_actors * n_items);
  for (std::size_t i = 0; i < n_actors; ++i)
    for (std::size_t j = 0; j < n_items; ++j) {
      const double z = a[j] * theta(static_cast<Eigen::Index>(i), 0) - b[j] + normal(rng);
      codes[i * n_items + j] = z > 0 ? Code::conservative : Code::liberal;
    }
  // The prior can produce an item everyone answers identically; such an
  // item is still valid IRT input (the likelihood is proper).
  return {ResponseMatrix(std::move(actors), std::move(items), std::move(codes), "synthetic probit 2PL"), theta};
}

Generated survey(std::size_t n_respondents, std::size_t n_items, std::uint64_t seed) {
  static const std::vector<std::string> pid7 = {"Strong Democrat",   "Not very strong Democrat",
                                                "Lean Democrat",     "Independent",
                                                "Lean Republican",   "Not very strong Republican",
                                                "Strong Republican"};
  static const std::vector<std::string> genders = {"Man", "Woman"};
  static const std::vector<std::string> education = {"High school or less", "Some college", "Bachelor's degree",
                                                     "Postgraduate"};
  static const std::vector<std::string> ages = {"18-29", "30-44", "45-64", "65+"};

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  std::uniform_int_distribution<std::size_t> pick2(0, 1), pick4(0, 3);

  Eigen::MatrixXd theta(static_cast<Eigen::Index>(n_respondents), 1);
  std::vector<Actor> actors;
  for (std::size_t i = 0; i < n_respondents; ++i) {
    const double t = normal(rng);
    theta(static_cast<Eigen::Index>(i), 0) = t;
    // Party identification is a noisy, monotone function of ideology.
    const double pid = t + 0.35 * normal(rng);
    const double cuts[] = {-1.1, -0.55, -0.2, 0.2, 0.55, 1.1};
    std::size_t g = 0;
    while (g < 6 && pid > cuts[g]) ++g;
    Actor a;
    a.id = "ces:" + pad(i, 5);
    a.kind = ActorKind::respondent;
    a.display_name = a.id;
    a.group = pid7[g];
    a.tags["gender"] = genders[pick2(rng)];
    a.tags["education"] = education[pick4(rng)];
    a.tags["age"] = ages[pick4(rng)];
    actors.push_back(std::move(a));
  }

  const auto& topics = all_topics();
  std::vector<Item> items;
  std::vector<double> a(n_items), b(n_items), topic_shift(topics.size());
  for (auto& s : topic_shift) s = 0.3 * normal(rng);
  for (std::size_t j = 0; j < n_items; ++j) {
    const Topic topic = topics[j % topics.size()];
    Item it = binary_item("ces:Q" + pad(j, 3), ItemSource::survey_question, topic, {"Support", "Oppose"},
                          pick2(rng));
    it.text = "Synthetic " + std::string(to_string(topic)) + " policy proposal " + std::to_string(j);
    items.push_back(std::move(it));
    a[j] = 0.6 + 1.6 * unif(rng);
    b[j] = 0.7 * normal(rng);
  }
  std::vector<Code> codes(n_respondents * n_items);
  for (std::size_t j = 0; j < n_items; ++j) {
    const double shift = topic_shift[j % topics.size()];
    fill_nonconstant(codes, n_respondents, n_items, j, [&](std::size_t i) {
      if (unif(rng) < 0.03) return Code::missing;
      return bernoulli_code(rng, logistic(a[j] * (theta(static_cast<Eigen::Index>(i), 0) + shift - b[j])));
    });
  }
  // Guarantee every respondent answered something.
  for (std::size_t i = 0; i < n_respondents; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < n_items; ++j) any |= codes[i * n_items + j] != Code::missing;
    if (!any) codes[i * n_items] = theta(static_cast<Eigen::Index>(i), 0) > 0 ? Code::conservative : Code::liberal;
  }
  return {ResponseMatrix(std::move(actors), std::move(items), std::move(codes), "synthetic survey"), theta};
}

}  // namespace ideo::synthetic
