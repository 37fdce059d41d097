#include <set>

#include <nlohmann/json.hpp>

#include "ideoscale/experiment.hpp"

namespace ideo {

using nlohmann::json;

std::string_view to_string(PretreatmentKind k) {
  switch (k) {
    case PretreatmentKind::political_interest: return "political_interest";
    case PretreatmentKind::news_sources: return "news_sources";
    case PretreatmentKind::llm_familiarity: return "llm_familiarity";
    case PretreatmentKind::attention_check: return "attention_check";
    case PretreatmentKind::other: return "other";
  }
  return "?";
}

PretreatmentKind parse_pretreatment_kind(std::string_view s) {
  for (auto k : {PretreatmentKind::political_interest, PretreatmentKind::news_sources,
                 PretreatmentKind::llm_familiarity, PretreatmentKind::attention_check, PretreatmentKind::other})
    if (to_string(k) == s) return k;
  throw ConfigInvalid("unknown pretreatment kind '" + std::string(s) + "'");
}

void ExperimentConfig::validate() const {
  if (topics.size() != 4) throw ConfigInvalid("experiment needs exactly 4 topics, got " + std::to_string(topics.size()));
  if (!(treatment_probability >= 0.0 && treatment_probability <= 1.0))
    throw ConfigInvalid("treatment_probability must lie in [0, 1]");
  if (!(min_chat_seconds >= 0.0)) throw ConfigInvalid("min_chat_seconds must be >= 0");
  std::set<std::string> ids, names;
  for (const auto& t : topics) {
    if (t.name.empty() || !names.insert(t.name).second) throw ConfigInvalid("topic names must be unique and non-empty");
    if (t.pool.empty()) throw ConfigInvalid("topic " + t.name + " has an empty question pool");
    if (!providers.empty() && !providers.count(t.provider_ref))
      throw ConfigInvalid("topic " + t.name + " refers to unknown provider '" + t.provider_ref + "'");
    for (const auto& q : t.pool) {
      if (q.id.empty() || !ids.insert(q.id).second) throw ConfigInvalid("question ids must be unique and non-empty");
      if (q.options.size() < 2) throw ConfigInvalid("question " + q.id + " needs at least two options");
      if (q.llm_answer != q.options[0] && q.llm_answer != q.options[1])
        throw ConfigInvalid("question " + q.id + ": recorded answer '" + q.llm_answer +
                            "' is neither the affirmative nor the negative option");
    }
  }
  std::set<std::string> pre_ids;
  for (const auto& p : pretreatment) {
    if (p.id.empty() || !pre_ids.insert(p.id).second)
      throw ConfigInvalid("pretreatment ids must be unique and non-empty");
    if (p.kind == PretreatmentKind::attention_check && p.correct.empty())
      throw ConfigInvalid("attention check " + p.id + " has no correct option");
  }
  for (const auto& [ref, pc] : providers) {
    try {
      pc.validate();
    } catch (const ConfigError& e) {
      throw ConfigInvalid("provider " + ref + ": " + e.what());
    }
  }
}

const ExperimentQuestion& ExperimentConfig::question(std::string_view id) const {
  for (const auto& t : topics)
    for (const auto& q : t.pool)
      if (q.id == id) return q;
  throw UnknownQuestion("unknown question '" + std::string(id) + "'");
}

const ExperimentTopic& ExperimentConfig::topic_of(std::string_view question_id) const {
  for (const auto& t : topics)
    for (const auto& q : t.pool)
      if (q.id == question_id) return t;
  throw UnknownQuestion("unknown question '" + std::string(question_id) + "'");
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  auto q = [](std::string id, std::string text, std::string answer) {
    return ExperimentQuestion{std::move(id), std::move(text), {"Yes", "No"}, std::move(answer)};
  };
  c.topics = {
      {"gun_control",
       "gpt-4o",
       {q("gun_concealed_carry",
          "Should the government make it easier for people to obtain concealed-carry permit?", "No"),
        q("gun_assault_rifles", "Should the government ban assault rifles?", "Yes")}},
      {"immigration",
       "llama-3.2-1b",
       {q("immigration_halve_legal",
          "Should the government reduce legal immigration by 50 percent over the next 10 years by eliminating the "
          "visa lottery and ending family-based migration?",
          "Yes"),
        q("immigration_border_spending",
          "Should the government increase spending on border security by $25 billion?", "Yes")}},
      {"healthcare",
       "gpt-4o",
       {q("health_medicare_for_all",
          "Should the government expand Medicare to a single comprehensive public health care coverage program that "
          "would cover all Americans?",
          "Yes"),
        q("health_drug_imports", "Should the government allow states to import prescription drugs from other countries?",
          "Yes")}},
      {"police",
       "mistral-nemo",
       {q("police_end_surplus_program",
          "Should the government end the Department of Defense program that sends surplus military weapons and "
          "equipment to police departments?",
          "No"),
        q("police_misconduct_registry",
          "Should the government create a national registry of police who have been investigated or disciplined for "
          "misconduct?",
          "No")}},
  };

  c.pretreatment = {
      {"interest", PretreatmentKind::political_interest,
       "How closely do you follow politics and public affairs?",
       {"Not at all", "Slightly", "Somewhat", "Closely", "Very closely"}, ""},
      {"news", PretreatmentKind::news_sources,
       "Which of these news sources do you follow? Select all that apply.",
       {"Network TV", "Cable TV", "Newspapers", "Radio", "News websites", "Social media", "Podcasts", "None"}, ""},
      {"llm_use", PretreatmentKind::llm_familiarity,
       "How often do you use AI chat tools such as ChatGPT?",
       {"Never", "Less than monthly", "Monthly", "Weekly", "Daily"}, ""},
      {"attention1", PretreatmentKind::attention_check,
       "To show that you are reading carefully, please select \"Somewhat\".",
       {"Not at all", "Slightly", "Somewhat", "Very"}, "Somewhat"},
      {"attention2", PretreatmentKind::attention_check,
       "Which of the following is a color?", {"Table", "Blue", "Seven", "Running"}, "Blue"},
  };

  ProviderConfig openai;
  openai.provider_id = "openai";
  openai.endpoint = "https://api.openai.com";
  openai.model_name = "gpt-4o";
  openai.api_key_env_var = "OPENAI_API_KEY";
  ProviderConfig llama;
  llama.provider_id = "local";
  llama.endpoint = "http://127.0.0.1:8000";
  llama.model_name = "llama-3.2-1b-instruct";
  ProviderConfig mistral;
  mistral.provider_id = "mistral";
  mistral.endpoint = "https://api.mistral.ai";
  mistral.model_name = "open-mistral-nemo";
  mistral.api_key_env_var = "MISTRAL_API_KEY";
  c.providers = {{"gpt-4o", openai}, {"llama-3.2-1b", llama}, {"mistral-nemo", mistral}};
  return c;
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  ExperimentConfig c;
  try {
    const json j = json::parse(text);
    c.wave_label = j.value("wave_label", c.wave_label);
    c.treatment_probability = j.value("treatment_probability", c.treatment_probability);
    c.min_chat_seconds = j.value("min_chat_seconds", c.min_chat_seconds);
    c.seed = j.value("seed", c.seed);
    if (j.contains("providers"))
      for (const auto& [ref, pj] : j.at("providers").items()) c.providers[ref] = provider_config_from_json(pj.dump());
    for (const auto& tj : j.at("topics")) {
      ExperimentTopic t;
      t.name = tj.at("name").get<std::string>();
      t.provider_ref = tj.value("provider_ref", "");
      for (const auto& qj : tj.at("pool")) {
        ExperimentQuestion q;
        q.id = qj.at("id").get<std::string>();
        q.text = qj.at("text").get<std::string>();
        if (qj.contains("options")) q.options = qj.at("options").get<std::vector<std::string>>();
        q.llm_answer = qj.at("llm_answer").get<std::string>();
        t.pool.push_back(std::move(q));
      }
      c.topics.push_back(std::move(t));
    }
    if (j.contains("pretreatment"))
      for (const auto& pj : j.at("pretreatment")) {
        PretreatmentQuestion p;
        p.id = pj.at("id").get<std::string>();
        p.kind = parse_pretreatment_kind(pj.value("kind", "other"));
        p.text = pj.value("text", "");
        p.options = pj.value("options", std::vector<std::string>{});
        p.correct = pj.value("correct", "");
        c.pretreatment.push_back(std::move(p));
      }
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("experiment config: ") + e.what());
  } catch (const ConfigError& e) {
    throw ConfigInvalid(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json j;
  j["wave_label"] = c.wave_label;
  j["treatment_probability"] = c.treatment_probability;
  j["min_chat_seconds"] = c.min_chat_seconds;
  j["seed"] = c.seed;
  j["providers"] = json::object();
  for (const auto& [ref, pc] : c.providers) j["providers"][ref] = json::parse(provider_config_to_json(pc));
  j["topics"] = json::array();
  for (const auto& t : c.topics) {
    json tj{{"name", t.name}, {"provider_ref", t.provider_ref}, {"pool", json::array()}};
    for (const auto& q : t.pool)
      tj["pool"].push_back({{"id", q.id}, {"text", q.text}, {"options", q.options}, {"llm_answer", q.llm_answer}});
    j["topics"].push_back(tj);
  }
  j["pretreatment"] = json::array();
  for (const auto& p : c.pretreatment) {
    json pj{{"id", p.id}, {"kind", std::string(to_string(p.kind))}, {"text", p.text}, {"options", p.options}};
    if (!p.correct.empty()) pj["correct"] = p.correct;
    j["pretreatment"].push_back(pj);
  }
  return j.dump(2) + "\n";
}

}  // namespace ideo
