#include <algorithm>
#include <random>
#include <sstream>

#include "events.hpp"
#include "ideoscale/csv.hpp"
#include "ideoscale/hash.hpp"

namespace ideo {

using nlohmann::json;

Assignment& Session::assignment(std::string_view question_id) {
  for (auto& a : assignments)
    if (a.question_id == question_id) return a;
  throw UnknownQuestion("question '" + std::string(question_id) + "' is not assigned in session " + session_id);
}

const Assignment& Session::assignment(std::string_view question_id) const {
  return const_cast<Session*>(this)->assignment(question_id);
}

std::string session_to_json(const Session& s, bool include_private) {
  json j;
  j["session_id"] = s.session_id;
  j["participant_id"] = s.participant_id;
  j["created_at"] = s.created_at;
  j["wave_label"] = s.wave_label;
  j["completed"] = s.completed;
  j["pretreatment_answers"] = s.pretreatment_answers;
  j["assignments"] = json::array();
  for (const auto& a : s.assignments) {
    json aj;
    aj["topic"] = a.topic;
    aj["question_id"] = a.question_id;
    aj["treated"] = a.treated;
    if (include_private) aj["provider_ref"] = a.provider_ref;
    aj["first_display"] = a.first_display ? json(*a.first_display) : json(nullptr);
    aj["transcript"] = json::array();
    for (const auto& m : a.transcript) aj["transcript"].push_back({{"role", m.role}, {"text", m.text}, {"at", m.at}});
    aj["failed_replies"] = a.failed_replies;
    aj["vote"] = a.vote ? json{{"choice", a.vote->choice}, {"at", a.vote->at}} : json(nullptr);
    j["assignments"].push_back(aj);
  }
  return j.dump();
}

namespace detail {

void apply_event(Session& s, const json& e) {
  const std::string type = e.at("type").get<std::string>();
  if (type == "created") {
    s.session_id = e.at("session_id").get<std::string>();
    s.participant_id = e.at("participant_id").get<std::string>();
    s.created_at = e.at("at").get<double>();
    s.wave_label = e.at("wave_label").get<std::string>();
    s.assignments.clear();
    for (const auto& aj : e.at("assignments")) {
      Assignment a;
      a.topic = aj.at("topic").get<std::string>();
      a.question_id = aj.at("question_id").get<std::string>();
      a.treated = aj.at("treated").get<bool>();
      a.provider_ref = aj.at("provider_ref").get<std::string>();
      s.assignments.push_back(std::move(a));
    }
    return;
  }
  if (s.session_id.empty()) throw CorruptLog("event '" + type + "' precedes session creation");
  if (type == "pretreatment") {
    for (const auto& [k, v] : e.at("answers").items()) s.pretreatment_answers[k] = v.get<std::string>();
  } else if (type == "display") {
    auto& a = s.assignment(e.at("question_id").get<std::string>());
    if (!a.first_display) a.first_display = e.at("at").get<double>();
  } else if (type == "message") {
    auto& a = s.assignment(e.at("question_id").get<std::string>());
    a.transcript.push_back({e.at("role").get<std::string>(), e.at("text").get<std::string>(), e.at("at").get<double>()});
  } else if (type == "chat_failure") {
    ++s.assignment(e.at("question_id").get<std::string>()).failed_replies;
  } else if (type == "vote") {
    auto& a = s.assignment(e.at("question_id").get<std::string>());
    if (a.vote) throw CorruptLog("second vote for " + a.question_id + " in session " + s.session_id);
    a.vote = VoteEntry{e.at("choice").get<std::string>(), e.at("at").get<double>()};
    s.completed = std::all_of(s.assignments.begin(), s.assignments.end(), [](const Assignment& x) { return x.vote.has_value(); });
  } else {
    throw CorruptLog("unknown event type '" + type + "'");
  }
}

}  // namespace detail

Session replay_session(const std::vector<std::string>& events, const ExperimentConfig& config) {
  Session s;
  for (const auto& line : events) {
    json e;
    try {
      e = json::parse(line);
      detail::apply_event(s, e);
    } catch (const json::exception& ex) {
      throw CorruptLog(std::string("unreadable event: ") + ex.what());
    }
  }
  for (const auto& a : s.assignments) (void)config.question(a.question_id);
  return s;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<Assignment> randomize_assignments(const ExperimentConfig& config, std::string_view participant_id,
                                              std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(fnv1a64(participant_id))));
  std::vector<Assignment> out;
  for (const auto& t : config.topics) {
    Assignment a;
    a.topic = t.name;
    std::uniform_int_distribution<std::size_t> pick(0, t.pool.size() - 1);
    a.question_id = t.pool[pick(rng)].id;
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    a.treated = u < config.treatment_probability;
    a.provider_ref = t.provider_ref;
    out.push_back(std::move(a));
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

namespace {

const PretreatmentQuestion* find_kind(const ExperimentConfig& c, PretreatmentKind k) {
  for (const auto& p : c.pretreatment)
    if (p.kind == k) return &p;
  return nullptr;
}

std::optional<int> ordinal(const Session& s, const PretreatmentQuestion* q) {
  if (!q) return std::nullopt;
  auto it = s.pretreatment_answers.find(q->id);
  if (it == s.pretreatment_answers.end()) return std::nullopt;
  for (std::size_t i = 0; i < q->options.size(); ++i)
    if (q->options[i] == it->second) return static_cast<int>(i + 1);
  return std::nullopt;
}

}  // namespace

TrialRecord derive_trial(const Session& s, const Assignment& a, const ExperimentConfig& config) {
  const ExperimentQuestion& q = config.question(a.question_id);
  TrialRecord r;
  r.participant_id = s.participant_id;
  r.question_id = a.question_id;
  r.topic = a.topic;
  r.treated = a.treated;
  r.aligned = a.vote && a.vote->choice == q.llm_answer ? 1 : 0;
  if (a.treated) {
    r.n_chat_questions = static_cast<std::size_t>(
        std::count_if(a.transcript.begin(), a.transcript.end(), [](const ChatEntry& m) { return m.role == "user"; }));
    if (!a.transcript.empty() && a.first_display)
      r.chat_minutes = (a.transcript.back().at - *a.first_display) / 60.0;
  }
  r.political_interest = ordinal(s, find_kind(config, PretreatmentKind::political_interest));
  r.llm_familiarity = ordinal(s, find_kind(config, PretreatmentKind::llm_familiarity));
  if (const auto* news = find_kind(config, PretreatmentKind::news_sources)) {
    auto it = s.pretreatment_answers.find(news->id);
    if (it != s.pretreatment_answers.end()) {
      int n = 0;
      std::stringstream ss(it->second);
      for (std::string part; std::getline(ss, part, '|');)
        if (!part.empty() && part != "None") ++n;
      r.news_source_count = n;
    }
  }
  r.attention_passed = true;
  for (const auto& p : config.pretreatment) {
    if (p.kind != PretreatmentKind::attention_check) continue;
    auto it = s.pretreatment_answers.find(p.id);
    if (it == s.pretreatment_answers.end() || it->second != p.correct) r.attention_passed = false;
  }
  r.wave_label = s.wave_label;
  return r;
}

namespace {

const std::vector<std::string> kTrialColumns = {
    "participant_id", "question_id",       "topic",           "treated",          "aligned",    "n_chat_questions",
    "chat_minutes",   "political_interest", "news_source_count", "llm_familiarity", "attention_passed", "wave_label"};

std::string opt(const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); }

std::optional<int> parse_opt(const std::string& s) {
  if (s.empty() || s == "NA") return std::nullopt;
  return std::stoi(s);
}

}  // namespace

std::string trials_to_csv(const std::vector<TrialRecord>& rows) {
  std::ostringstream out;
  csv::write_row(out, kTrialColumns);
  for (const auto& r : rows)
    csv::write_row(out, {r.participant_id, r.question_id, r.topic, r.treated ? "1" : "0", std::to_string(r.aligned),
                         std::to_string(r.n_chat_questions), csv::format_double(r.chat_minutes),
                         opt(r.political_interest), opt(r.news_source_count), opt(r.llm_familiarity),
                         r.attention_passed ? "1" : "0", r.wave_label});
  return out.str();
}

std::vector<TrialRecord> trials_from_csv(const std::string& text) {
  auto t = csv::parse(text, true);
  std::vector<int> col;
  for (const auto& name : kTrialColumns) col.push_back(t.require_column(name));
  std::vector<TrialRecord> out;
  try {
    for (const auto& row : t.rows) {
      TrialRecord r;
      r.participant_id = row[col[0]];
      r.question_id = row[col[1]];
      r.topic = row[col[2]];
      r.treated = row[col[3]] == "1";
      r.aligned = std::stoi(row[col[4]]);
      r.n_chat_questions = static_cast<std::size_t>(std::stoul(row[col[5]]));
      r.chat_minutes = std::stod(row[col[6]]);
      r.political_interest = parse_opt(row[col[7]]);
      r.news_source_count = parse_opt(row[col[8]]);
      r.llm_familiarity = parse_opt(row[col[9]]);
      r.attention_passed = row[col[10]] == "1";
      r.wave_label = row[col[11]];
      out.push_back(std::move(r));
    }
  } catch (const std::logic_error& e) {
    throw ParseError(std::string("trial csv: ") + e.what());
  }
  return out;
}

}  // namespace ideo
