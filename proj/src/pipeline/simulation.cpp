#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <mutex>
#include <numbers>
#include <random>

#include "ideoscale/hash.hpp"
#include "ideoscale/pipeline.hpp"

namespace ideo {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double hash_uniform(const std::string& label) {
  return static_cast<double>(splitmix(fnv1a64(label)) >> 11) * 0x1.0p-53;
}

double hash_normal(const std::string& label) {
  const double u1 = std::max(hash_uniform(label + "#1"), 1e-300);
  const double u2 = hash_uniform(label + "#2");
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

bool mentions(const std::optional<std::string>& group, std::string_view word) {
  return group && group->find(word) != std::string::npos;
}

std::string phrase(Persona persona, const std::string& answer) {
  switch (persona) {
    case Persona::representative: return "I would vote " + answer + ".";
    case Persona::justice: return "My ruling: " + answer + ".";
    case Persona::voter: return answer;
  }
  return answer;
}

}  // namespace

std::map<std::string, double> item_polarity(const ResponseMatrix& matrix) {
  std::map<std::string, double> out;
  for (std::size_t j = 0; j < matrix.n_items(); ++j) {
    double sr = 0, sd = 0;
    std::size_t nr = 0, nd = 0;
    for (std::size_t i = 0; i < matrix.n_actors(); ++i) {
      const Code c = matrix.code(i, j);
      if (c == Code::missing) continue;
      const auto& g = matrix.actors()[i].group;
      if (mentions(g, "Republican")) sr += static_cast<double>(c), ++nr;
      else if (mentions(g, "Democrat")) sd += static_cast<double>(c), ++nd;
    }
    const double r = nr ? sr / static_cast<double>(nr) : 0.0;
    const double d = nd ? sd / static_cast<double>(nd) : 0.0;
    out[matrix.items()[j].id] = r - d;
  }
  return out;
}

MockProvider::Responder mock_responder(const ModelSpec& model, const ResponseMatrix& matrix) {
  struct Entry {
    Item item;
    Persona persona;
    double polarity;
  };
  struct State {
    std::map<std::string, Entry> by_prompt;
    std::mutex mu;
    std::map<std::string, int> seen;
  };
  auto state = std::make_shared<State>();
  const auto polarity = item_polarity(matrix);
  for (const auto& item : matrix.items()) {
    const Persona persona = persona_for(item.source);
    state->by_prompt.emplace(build_prompt(persona, item).rendered_text, Entry{item, persona, polarity.at(item.id)});
  }
  const std::string id = model.id;
  const MockPolicy policy = model.mock;

  return [state, id, policy](const ChatRequest& request) -> std::string {
    const std::string& prompt = request.messages.empty() ? std::string() : request.messages.back().content;
    const auto it = state->by_prompt.find(prompt);
    if (it == state->by_prompt.end()) return "I am not able to answer that.";
    int repeat;
    {
      std::lock_guard lock(state->mu);
      repeat = state->seen[prompt]++;
    }
    const Entry& e = it->second;
    const std::string base = id + "|" + e.item.id;
    if (hash_uniform(base + "|refuse|" + std::to_string(repeat)) < policy.refusal_rate)
      return "I would prefer not to take a position on this.";
    const double z = hash_normal(base + "|z");
    const double p = 1.0 / (1.0 + std::exp(-(policy.lean * 3.0 * e.polarity + policy.noise * z)));
    bool conservative = hash_uniform(base + "|u") < p;
    if (repeat > 0 && hash_uniform(base + "|flip|" + std::to_string(repeat)) < policy.flip_rate)
      conservative = !conservative;
    return phrase(e.persona, conservative ? e.item.conservative_text() : e.item.liberal_text());
  };
}

PanelSummary simulate_panel(ExperimentService& service, Clock& clock, const PanelSimulation& sim,
                            const std::string& wave_label, std::size_t participants, std::size_t id_offset,
                            std::uint64_t seed) {
  static const std::vector<std::string> prompts = {
      "What are the strongest arguments on each side?", "Who would be affected by this policy?",
      "What does the evidence say?", "How would this change things in practice?",
      "What do critics of this proposal say?", "Can you summarize it briefly?"};

  const ExperimentConfig& cfg = service.config();
  std::mt19937_64 rng(splitmix(seed ^ fnv1a64("panel:" + wave_label)));
  std::uniform_real_distribution<double> unif;
  std::normal_distribution<double> normal;
  std::poisson_distribution<int> extra_messages(1.3);

  PanelSummary summary;
  for (std::size_t p = 0; p < participants; ++p) {
    const std::string pid = fmt::format("{}-p{:05d}", wave_label, id_offset + p);
    const Session session = service.create_session(pid);
    const std::string& sid = session.session_id;
    ++summary.participants;

    const double shift = sim.propensity_sd * normal(rng);
    std::map<std::string, std::string> answers;
    for (const auto& q : cfg.pretreatment) {
      if (q.options.empty()) continue;
      if (q.kind == PretreatmentKind::attention_check) {
        if (unif(rng) < sim.attention_pass_rate) {
          answers[q.id] = q.correct;
        } else {
          const auto wrong = std::find_if(q.options.begin(), q.options.end(), [&](const auto& o) { return o != q.correct; });
          answers[q.id] = wrong == q.options.end() ? q.correct : *wrong;
        }
      } else if (q.kind == PretreatmentKind::news_sources) {
        std::string joined;
        for (const auto& o : q.options) {
          if (o == "None" || unif(rng) >= 0.4) continue;
          joined += (joined.empty() ? "" : "|") + o;
        }
        answers[q.id] = joined.empty() ? "None" : joined;
      } else {
        answers[q.id] = q.options[std::uniform_int_distribution<std::size_t>(0, q.options.size() - 1)(rng)];
      }
    }
    service.submit_pretreatment(sid, answers);
    clock.sleep_for(20.0 + 40.0 * unif(rng));

    const std::size_t n_topics = session.assignments.size();
    std::size_t stop_after = n_topics;
    if (unif(rng) < sim.incomplete_share)
      stop_after = std::uniform_int_distribution<std::size_t>(0, n_topics - 1)(rng);

    for (std::size_t k = 0; k < stop_after; ++k) {
      const Assignment& a = session.assignments[k];
      service.display_question(sid, a.question_id);
      const double shown_at = clock.now();
      clock.sleep_for(5.0 + 20.0 * unif(rng));
      if (a.treated) {
        const int n_messages = 1 + std::min(extra_messages(rng), 5);
        for (int m = 0; m < n_messages; ++m) {
          service.relay_chat(sid, a.question_id, prompts[static_cast<std::size_t>(m) % prompts.size()]);
          clock.sleep_for(15.0 + 45.0 * unif(rng));
        }
        const double elapsed = clock.now() - shown_at;
        if (elapsed < cfg.min_chat_seconds) clock.sleep_for(cfg.min_chat_seconds - elapsed + 1.0 + 10.0 * unif(rng));
      }
      const ExperimentQuestion& q = cfg.question(a.question_id);
      const double p_aligned = std::clamp(0.5 + shift + (a.treated ? sim.effect : 0.0), 0.02, 0.98);
      const bool aligned = unif(rng) < p_aligned;
      std::string choice = q.llm_answer;
      if (!aligned)
        choice = q.options[0] == q.llm_answer ? q.options[1] : q.options[0];
      summary.trials.push_back(service.record_vote(sid, a.question_id, choice));
      clock.sleep_for(3.0);
    }
    if (stop_after == n_topics) ++summary.completed;
    clock.sleep_for(60.0);
  }
  return summary;
}

}  // namespace ideo
