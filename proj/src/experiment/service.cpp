#include <algorithm>
#include <cctype>

#include "events.hpp"
#include "ideoscale/hash.hpp"

namespace ideo {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool iequal(const std::string& a, const std::string& b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

ExperimentService::ExperimentService(ExperimentConfig config, EventStore& store, Clock& clock,
                                     std::map<std::string, Provider*> providers)
    : config_(std::move(config)), store_(store), clock_(clock), providers_(std::move(providers)) {
  config_.validate();
  for (const auto& pid : store_.participants()) {
    auto live = std::make_shared<Live>();
    live->session = replay_session(store_.load(pid), config_);
    session_of_participant_[pid] = live->session.session_id;
    by_session_[live->session.session_id] = std::move(live);
  }
}

std::shared_ptr<ExperimentService::Live> ExperimentService::find(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  auto it = by_session_.find(session_id);
  if (it == by_session_.end()) throw UnknownSession("unknown session '" + session_id + "'");
  return it->second;
}

void ExperimentService::append(const Session& s, const std::string& line) { store_.append(s.participant_id, line); }

Session ExperimentService::create_session(const std::string& participant_id) {
  if (trim(participant_id).empty()) throw InvalidChoice("participant_id is empty");
  std::lock_guard lock(mu_);
  if (auto it = session_of_participant_.find(participant_id); it != session_of_participant_.end()) {
    auto live = by_session_.at(it->second);
    std::lock_guard session_lock(live->mu);
    if (live->session.completed)
      throw DuplicateParticipant("participant " + participant_id + " has already completed the survey");
    return live->session;
  }

  json e;
  e["type"] = "created";
  e["at"] = clock_.now();
  e["session_id"] = "s-" + sha256_hex(participant_id + "|" + std::to_string(config_.seed)).substr(0, 24);
  e["participant_id"] = participant_id;
  e["wave_label"] = config_.wave_label;
  e["assignments"] = json::array();
  for (const auto& a : randomize_assignments(config_, participant_id, config_.seed))
    e["assignments"].push_back(
        {{"topic", a.topic}, {"question_id", a.question_id}, {"treated", a.treated}, {"provider_ref", a.provider_ref}});

  auto live = std::make_shared<Live>();
  store_.append(participant_id, e.dump());
  detail::apply_event(live->session, e);
  session_of_participant_[participant_id] = live->session.session_id;
  by_session_[live->session.session_id] = live;
  return live->session;
}

Session ExperimentService::get_session(const std::string& session_id) const {
  auto live = find(session_id);
  std::lock_guard lock(live->mu);
  return live->session;
}

Session ExperimentService::submit_pretreatment(const std::string& session_id,
                                               const std::map<std::string, std::string>& answers) {
  auto live = find(session_id);
  std::lock_guard lock(live->mu);
  for (const auto& [id, value] : answers) {
    const auto it = std::find_if(config_.pretreatment.begin(), config_.pretreatment.end(),
                                 [&](const PretreatmentQuestion& p) { return p.id == id; });
    if (it == config_.pretreatment.end()) throw UnknownQuestion("unknown pretreatment question '" + id + "'");
    (void)value;
  }
  json e{{"type", "pretreatment"}, {"at", clock_.now()}, {"answers", answers}};
  append(live->session, e.dump());
  detail::apply_event(live->session, e);
  return live->session;
}

void ExperimentService::ensure_displayed(Live& live, Assignment& a) {
  if (a.first_display) return;
  json e{{"type", "display"}, {"at", clock_.now()}, {"question_id", a.question_id}};
  append(live.session, e.dump());
  detail::apply_event(live.session, e);
}

Session ExperimentService::display_question(const std::string& session_id, const std::string& question_id) {
  auto live = find(session_id);
  std::lock_guard lock(live->mu);
  ensure_displayed(*live, live->session.assignment(question_id));
  return live->session;
}

std::string ExperimentService::relay_chat(const std::string& session_id, const std::string& question_id,
                                          const std::string& message) {
  auto live = find(session_id);
  std::lock_guard lock(live->mu);
  Session& s = live->session;
  if (s.completed) throw SessionCompleted("session " + session_id + " is completed");
  Assignment& a = s.assignment(question_id);
  if (!a.treated) throw UntreatedQuestion("question " + question_id + " has no chat in this session");
  if (a.vote) throw AlreadyVoted("question " + question_id + " has already been voted on");
  if (trim(message).empty()) throw EmptyMessage("chat message is empty");
  ensure_displayed(*live, a);

  const double user_at = clock_.now();
  auto fail = [&](const std::string& why) {
    json e{{"type", "chat_failure"}, {"at", clock_.now()}, {"question_id", question_id}, {"error", why}};
    append(s, e.dump());
    detail::apply_event(s, e);
    return ProviderUnavailable("assistant unavailable, please retry: " + why);
  };

  auto p = providers_.find(a.provider_ref);
  if (p == providers_.end() || !p->second) throw fail("no provider bound to '" + a.provider_ref + "'");

  ChatRequest req;
  auto pc = config_.providers.find(a.provider_ref);
  req.model = pc != config_.providers.end() ? pc->second.model_name : a.provider_ref;
  if (pc != config_.providers.end()) {
    req.temperature = pc->second.temperature;
    req.top_p = pc->second.top_p;
  }
  for (const auto& m : a.transcript) req.messages.push_back({m.role, m.text});
  req.messages.push_back({"user", message});

  std::string reply;
  try {
    reply = p->second->complete(req);
  } catch (const Error& err) {
    throw fail(std::string(err.kind()) + ": " + err.what());
  }

  json u{{"type", "message"}, {"at", user_at}, {"question_id", question_id}, {"role", "user"}, {"text", message}};
  json r{{"type", "message"}, {"at", clock_.now()}, {"question_id", question_id}, {"role", "assistant"}, {"text", reply}};
  append(s, u.dump());
  detail::apply_event(s, u);
  append(s, r.dump());
  detail::apply_event(s, r);
  return reply;
}

TrialRecord ExperimentService::record_vote(const std::string& session_id, const std::string& question_id,
                                           const std::string& choice) {
  auto live = find(session_id);
  std::lock_guard lock(live->mu);
  Session& s = live->session;
  Assignment& a = s.assignment(question_id);
  if (a.vote) throw AlreadyVoted("question " + question_id + " has already been voted on");
  const ExperimentQuestion& q = config_.question(question_id);
  const std::string wanted = trim(choice);
  const auto opt = std::find_if(q.options.begin(), q.options.end(), [&](const std::string& o) { return iequal(o, wanted); });
  if (opt == q.options.end()) throw InvalidChoice("'" + choice + "' is not an option for " + question_id);

  ensure_displayed(*live, a);
  if (a.treated) {
    const double elapsed = clock_.now() - *a.first_display;
    if (elapsed < config_.min_chat_seconds) {
      const double remaining = config_.min_chat_seconds - elapsed;
      throw TimerNotElapsed(remaining, "voting opens in " + std::to_string(remaining) + " s");
    }
  }
  json e{{"type", "vote"}, {"at", clock_.now()}, {"question_id", question_id}, {"choice", *opt}};
  append(s, e.dump());
  detail::apply_event(s, e);
  return derive_trial(s, a, config_);
}

std::vector<TrialRecord> export_trials(const EventStore& store, const ExperimentConfig& config,
                                       const std::optional<std::string>& wave) {
  std::vector<TrialRecord> rows;
  for (const auto& pid : store.participants()) {
    const Session s = replay_session(store.load(pid), config);
    if (wave && s.wave_label != *wave) continue;
    for (const auto& a : s.assignments)
      if (a.vote) rows.push_back(derive_trial(s, a, config));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const TrialRecord& x, const TrialRecord& y) {
    return std::tie(x.participant_id, x.topic) < std::tie(y.participant_id, y.topic);
  });
  return rows;
}

std::vector<TrialRecord> ExperimentService::export_trials(const std::optional<std::string>& wave) const {
  return ideo::export_trials(store_, config_, wave);
}

}  // namespace ideo
