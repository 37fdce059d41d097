#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "ideoscale/experiment.hpp"
#include "support.hpp"

#include <httplib.h>

using namespace ideo;
using nlohmann::json;
using testing::TempDir;

namespace {

struct Rig {
  explicit Rig(ExperimentConfig c = default_experiment_config(), bool bind = true)
      : config(std::move(c)), store(dir.path() / "events", false) {
    if (bind) providers = {{"gpt-4o", &gpt}, {"llama-3.2-1b", &llama}, {"mistral-nemo", &mistral}};
    service = std::make_unique<ExperimentService>(config, store, clock, providers);
  }
  void restart() { service = std::make_unique<ExperimentService>(config, store, clock, providers); }

  TempDir dir;
  ExperimentConfig config;
  EventStore store;
  VirtualClock clock{1000.0};
  MockProvider gpt{"I lean yes on this."};
  MockProvider llama{"Probably yes."};
  MockProvider mistral{"I would say no."};
  std::map<std::string, Provider*> providers;
  std::unique_ptr<ExperimentService> service;
};

ExperimentConfig all_treated() {
  auto c = default_experiment_config();
  c.treatment_probability = 1.0;
  return c;
}

ExperimentConfig none_treated() {
  auto c = default_experiment_config();
  c.treatment_probability = 0.0;
  return c;
}

const Assignment& first_treated(const Session& s) {
  for (const auto& a : s.assignments)
    if (a.treated) return a;
  throw std::runtime_error("no treated assignment");
}

void complete(Rig& rig, const std::string& pid) {
  const Session s = rig.service->create_session(pid);
  for (const auto& a : s.assignments) {
    rig.service->display_question(s.session_id, a.question_id);
    if (a.treated) {
      rig.service->relay_chat(s.session_id, a.question_id, "What do you think?");
      rig.clock.advance(rig.config.min_chat_seconds);
    }
    rig.service->record_vote(s.session_id, a.question_id, "Yes");
  }
}

}  // namespace

TEST_CASE("every session draws one question from each topic pool") {
  Rig rig;
  const Session s = rig.service->create_session("p1");
  REQUIRE(s.assignments.size() == 4);
  std::set<std::string> topics;
  for (const auto& a : s.assignments) {
    topics.insert(a.topic);
    const auto& t = rig.config.topic_of(a.question_id);
    CHECK(t.name == a.topic);
    CHECK(a.provider_ref == t.provider_ref);
    CHECK_FALSE(a.first_display.has_value());
  }
  CHECK(topics == std::set<std::string>{"gun_control", "immigration", "healthcare", "police"});
  CHECK(s.session_id.rfind("s-", 0) == 0);
  CHECK(s.wave_label == "wave1");
}

TEST_CASE("randomization is a pure function of seed and participant") {
  const auto c = default_experiment_config();
  const auto a = randomize_assignments(c, "alice", 7);
  const auto b = randomize_assignments(c, "alice", 7);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].question_id == b[i].question_id);
    CHECK(a[i].treated == b[i].treated);
  }
  std::size_t differing = 0;
  for (int k = 0; k < 50; ++k) {
    const auto x = randomize_assignments(c, "p" + std::to_string(k), 7);
    const auto y = randomize_assignments(c, "p" + std::to_string(k), 8);
    for (std::size_t i = 0; i < x.size(); ++i)
      differing += x[i].question_id != y[i].question_id || x[i].treated != y[i].treated;
  }
  CHECK(differing > 0);
}

TEST_CASE("degenerate treatment probabilities") {
  auto c = default_experiment_config();
  c.treatment_probability = 1.0;
  for (int k = 0; k < 100; ++k)
    for (const auto& a : randomize_assignments(c, "p" + std::to_string(k), 1)) CHECK(a.treated);
  c.treatment_probability = 0.0;
  for (int k = 0; k < 100; ++k)
    for (const auto& a : randomize_assignments(c, "p" + std::to_string(k), 1)) CHECK_FALSE(a.treated);

  c = default_experiment_config();
  for (auto& t : c.topics) t.pool.resize(1);
  for (int k = 0; k < 20; ++k)
    for (const auto& a : randomize_assignments(c, "p" + std::to_string(k), 3))
      CHECK(a.question_id == c.topic_of(a.question_id).pool[0].id);
}

TEST_CASE("treatment share and question choice are balanced over many sessions") {
  const auto c = default_experiment_config();
  std::size_t treated = 0, first_pool = 0, n = 0;
  for (int k = 0; k < 4000; ++k)
    for (const auto& a : randomize_assignments(c, "bal" + std::to_string(k), 42)) {
      ++n;
      treated += a.treated;
      first_pool += a.question_id == c.topic_of(a.question_id).pool[0].id;
    }
  const double sd = std::sqrt(0.25 * static_cast<double>(n));
  CHECK(std::abs(static_cast<double>(treated) - 0.5 * n) < 4 * sd);
  CHECK(std::abs(static_cast<double>(first_pool) - 0.5 * n) < 4 * sd);
}

TEST_CASE("chat relays the full history to the assigned model") {
  Rig rig(all_treated());
  const Session s = rig.service->create_session("chatty");
  const Assignment& a = first_treated(s);
  MockProvider* bound = dynamic_cast<MockProvider*>(rig.providers.at(a.provider_ref));

  const std::string reply = rig.service->relay_chat(s.session_id, a.question_id, "Is this a good idea?");
  CHECK_FALSE(reply.empty());
  Session now = rig.service->get_session(s.session_id);
  const Assignment& after = now.assignment(a.question_id);
  REQUIRE(after.transcript.size() == 2);
  CHECK(after.transcript[0].role == "user");
  CHECK(after.transcript[0].text == "Is this a good idea?");
  CHECK(after.transcript[1].role == "assistant");
  CHECK(after.transcript[1].text == reply);
  CHECK(after.first_display.has_value());

  rig.service->relay_chat(s.session_id, a.question_id, "Why?");
  rig.service->relay_chat(s.session_id, a.question_id, "Anything else?");
  const auto seen = bound->captured();
  REQUIRE(seen.size() == 3);
  CHECK(seen[0].messages.size() == 1);
  CHECK(seen[1].messages.size() == 3);
  CHECK(seen[2].messages.size() == 5);
  CHECK(seen[2].messages[2].content == "Why?");
  CHECK(seen[0].model == rig.config.providers.at(a.provider_ref).model_name);
}

TEST_CASE("chat preconditions") {
  SUBCASE("untreated question") {
    Rig rig(none_treated());
    const Session s = rig.service->create_session("quiet");
    CHECK_THROWS_AS(rig.service->relay_chat(s.session_id, s.assignments[0].question_id, "hi"), UntreatedQuestion);
  }
  SUBCASE("empty message") {
    Rig rig(all_treated());
    const Session s = rig.service->create_session("blank");
    CHECK_THROWS_AS(rig.service->relay_chat(s.session_id, s.assignments[0].question_id, "   "), EmptyMessage);
  }
  SUBCASE("unknown session and question") {
    Rig rig(all_treated());
    const Session s = rig.service->create_session("lost");
    CHECK_THROWS_AS(rig.service->relay_chat("s-nope", s.assignments[0].question_id, "hi"), UnknownSession);
    CHECK_THROWS_AS(rig.service->relay_chat(s.session_id, "no_such_question", "hi"), UnknownQuestion);
  }
  SUBCASE("chat after the vote") {
    Rig rig(all_treated());
    const Session s = rig.service->create_session("late");
    const auto& q = s.assignments[0].question_id;
    rig.service->display_question(s.session_id, q);
    rig.clock.advance(200);
    rig.service->record_vote(s.session_id, q, "No");
    CHECK_THROWS_AS(rig.service->relay_chat(s.session_id, q, "hi"), AlreadyVoted);
  }
  SUBCASE("provider missing or failing") {
    Rig rig(all_treated(), false);
    const Session s = rig.service->create_session("dark");
    const auto& q = s.assignments[0].question_id;
    CHECK_THROWS_AS(rig.service->relay_chat(s.session_id, q, "hi"), ProviderUnavailable);
    const Session after = rig.service->get_session(s.session_id);
    CHECK(after.assignment(q).transcript.empty());
    CHECK(after.assignment(q).failed_replies == 1);
  }
  SUBCASE("transport errors surface as unavailable") {
    Rig rig(all_treated());
    for (auto* m : {&rig.gpt, &rig.llama, &rig.mistral}) m->set_failures({MockFailure::transport});
    const Session s = rig.service->create_session("flaky");
    const auto& q = s.assignments[0].question_id;
    CHECK_THROWS_AS(rig.service->relay_chat(s.session_id, q, "hi"), ProviderUnavailable);
    CHECK_NOTHROW(rig.service->relay_chat(s.session_id, q, "hi again"));
    CHECK(rig.service->get_session(s.session_id).assignment(q).transcript.size() == 2);
  }
}

TEST_CASE("vote timer for treated questions") {
  Rig rig(all_treated());
  const Session s = rig.service->create_session("timer");
  const auto& q = s.assignments[0].question_id;
  rig.service->display_question(s.session_id, q);
  rig.clock.advance(100);
  try {
    rig.service->record_vote(s.session_id, q, "Yes");
    FAIL("vote before the timer was accepted");
  } catch (const TimerNotElapsed& e) {
    CHECK(e.remaining_seconds() == doctest::Approx(80.0).epsilon(1e-12));
  }
  CHECK_FALSE(rig.service->get_session(s.session_id).assignment(q).vote.has_value());
  rig.clock.advance(80);
  const TrialRecord r = rig.service->record_vote(s.session_id, q, "Yes");
  CHECK(r.treated);
  CHECK(r.question_id == q);
}

TEST_CASE("display is recorded once and a second display does not reset the timer") {
  Rig rig(all_treated());
  const Session s = rig.service->create_session("redisplay");
  const auto& q = s.assignments[1].question_id;
  rig.service->display_question(s.session_id, q);
  rig.clock.advance(150);
  rig.service->display_question(s.session_id, q);
  CHECK(*rig.service->get_session(s.session_id).assignment(q).first_display == doctest::Approx(1000.0));
  rig.clock.advance(30);
  CHECK_NOTHROW(rig.service->record_vote(s.session_id, q, "No"));
}

TEST_CASE("a vote without a prior display starts the timer") {
  Rig rig(all_treated());
  const Session s = rig.service->create_session("eager");
  const auto& q = s.assignments[0].question_id;
  CHECK_THROWS_AS(rig.service->record_vote(s.session_id, q, "Yes"), TimerNotElapsed);
  CHECK(rig.service->get_session(s.session_id).assignment(q).first_display.has_value());
}

TEST_CASE("untreated votes are accepted immediately and alignment follows the recorded answer") {
  Rig rig(none_treated());
  const Session s = rig.service->create_session("control");
  for (const auto& a : s.assignments) {
    const auto& q = rig.config.question(a.question_id);
    const std::string other = q.llm_answer == q.options[0] ? q.options[1] : q.options[0];
    const bool agree = a.topic == "gun_control" || a.topic == "police";
    const TrialRecord r = rig.service->record_vote(s.session_id, a.question_id, agree ? q.llm_answer : other);
    CHECK_FALSE(r.treated);
    CHECK(r.aligned == (agree ? 1 : 0));
    CHECK(r.n_chat_questions == 0);
    CHECK(r.chat_minutes == 0.0);
  }
  CHECK(rig.service->get_session(s.session_id).completed);
}

TEST_CASE("vote validation") {
  Rig rig(none_treated());
  const Session s = rig.service->create_session("picky");
  const auto& q = s.assignments[0].question_id;
  CHECK_THROWS_AS(rig.service->record_vote(s.session_id, q, "Maybe"), InvalidChoice);
  CHECK_THROWS_AS(rig.service->record_vote(s.session_id, q, ""), InvalidChoice);
  const TrialRecord r = rig.service->record_vote(s.session_id, q, "  yes ");
  CHECK(rig.service->get_session(s.session_id).assignment(q).vote->choice == "Yes");
  CHECK(r.aligned == (rig.config.question(q).llm_answer == "Yes" ? 1 : 0));
  CHECK_THROWS_AS(rig.service->record_vote(s.session_id, q, "No"), AlreadyVoted);
  CHECK_THROWS_AS(rig.service->record_vote(s.session_id, "gun_nope", "No"), UnknownQuestion);
  CHECK_THROWS_AS(rig.service->record_vote("s-missing", q, "No"), UnknownSession);
}

TEST_CASE("derived trial fields") {
  Rig rig(all_treated());
  const Session s = rig.service->create_session("derive");
  rig.service->submit_pretreatment(s.session_id, {{"interest", "Closely"},
                                                  {"news", "Cable TV|Podcasts|Radio"},
                                                  {"llm_use", "Weekly"},
                                                  {"attention1", "Somewhat"},
                                                  {"attention2", "Blue"}});
  const auto& q = s.assignments[0].question_id;
  rig.service->display_question(s.session_id, q);
  rig.clock.advance(30);
  rig.service->relay_chat(s.session_id, q, "one");
  rig.clock.advance(30);
  rig.service->relay_chat(s.session_id, q, "two");
  rig.clock.advance(30);
  rig.service->relay_chat(s.session_id, q, "three");
  rig.clock.advance(150);
  const TrialRecord r = rig.service->record_vote(s.session_id, q, "No");
  CHECK(r.n_chat_questions == 3);
  CHECK(r.chat_minutes == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(r.political_interest == 4);
  CHECK(r.news_source_count == 3);
  CHECK(r.llm_familiarity == 4);
  CHECK(r.attention_passed);
  CHECK(r.wave_label == "wave1");

  Rig other(none_treated());
  const Session t = other.service->create_session("inattentive");
  other.service->submit_pretreatment(t.session_id, {{"attention1", "Very"}, {"attention2", "Blue"}, {"news", "None"}});
  const TrialRecord u = other.service->record_vote(t.session_id, t.assignments[0].question_id, "Yes");
  CHECK_FALSE(u.attention_passed);
  CHECK(u.news_source_count == 0);
  CHECK_FALSE(u.political_interest.has_value());

  CHECK_THROWS_AS(other.service->submit_pretreatment(t.session_id, {{"shoe_size", "9"}}), UnknownQuestion);
}

TEST_CASE("export collects one row per vote") {
  Rig rig;
  CHECK(rig.service->export_trials().empty());
  for (int k = 0; k < 6; ++k) complete(rig, "px" + std::to_string(k));
  const Session partial = rig.service->create_session("partial");
  rig.service->display_question(partial.session_id, partial.assignments[0].question_id);
  rig.clock.advance(500);
  rig.service->record_vote(partial.session_id, partial.assignments[0].question_id, "No");

  const auto rows = rig.service->export_trials();
  CHECK(rows.size() == 6 * 4 + 1);
  CHECK(std::is_sorted(rows.begin(), rows.end(), [](const TrialRecord& a, const TrialRecord& b) {
    return std::tie(a.participant_id, a.topic) < std::tie(b.participant_id, b.topic);
  }));
  for (const auto& r : rows)
    if (r.treated && r.participant_id != "partial") CHECK(r.n_chat_questions == 1);
  CHECK(rig.service->export_trials(std::string("wave1")).size() == rows.size());
  CHECK(rig.service->export_trials(std::string("wave9")).empty());
}

TEST_CASE("trial CSV round trip") {
  Rig rig;
  for (int k = 0; k < 5; ++k) complete(rig, "csv" + std::to_string(k));
  const auto rows = rig.service->export_trials();
  const std::string text = trials_to_csv(rows);
  CHECK(text.rfind("participant_id,question_id,topic,treated,aligned,n_chat_questions,chat_minutes,", 0) == 0);
  const auto back = trials_from_csv(text);
  REQUIRE(back.size() == rows.size());
  CHECK(trials_to_csv(back) == text);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].participant_id == rows[i].participant_id);
    CHECK(back[i].treated == rows[i].treated);
    CHECK(back[i].aligned == rows[i].aligned);
    CHECK(back[i].chat_minutes == doctest::Approx(rows[i].chat_minutes));
  }
}

TEST_CASE("replaying the event log reproduces the live session") {
  Rig rig;
  std::vector<std::string> ids;
  for (int k = 0; k < 8; ++k) {
    complete(rig, "rp" + std::to_string(k));
    ids.push_back(rig.service->create_session("rp-open" + std::to_string(k)).session_id);
  }
  rig.service->submit_pretreatment(ids[0], {{"interest", "Slightly"}});
  for (const auto& pid : rig.store.participants()) {
    const Session replayed = replay_session(rig.store.load(pid), rig.config);
    const Session live = rig.service->get_session(replayed.session_id);
    CHECK(session_to_json(replayed) == session_to_json(live));
  }

  const auto before = trials_to_csv(rig.service->export_trials());
  rig.restart();
  CHECK(trials_to_csv(rig.service->export_trials()) == before);
  CHECK(session_to_json(rig.service->get_session(ids[0])).find("Slightly") != std::string::npos);
}

TEST_CASE("the public view hides the provider") {
  Rig rig(all_treated());
  const Session s = rig.service->create_session("viewer");
  const std::string pub = session_to_json(s, false);
  const std::string priv = session_to_json(s, true);
  CHECK(pub.find("provider_ref") == std::string::npos);
  CHECK(priv.find("provider_ref") != std::string::npos);
  CHECK(pub.find("gpt-4o") == std::string::npos);
}

TEST_CASE("re-entry resumes an unfinished session and completion locks the participant") {
  Rig rig(none_treated());
  const Session s = rig.service->create_session("again");
  rig.service->record_vote(s.session_id, s.assignments[0].question_id, "Yes");
  const Session resumed = rig.service->create_session("again");
  CHECK(resumed.session_id == s.session_id);
  CHECK(resumed.assignment(s.assignments[0].question_id).vote.has_value());
  CHECK(rig.store.load("again").size() == 3);

  for (std::size_t i = 1; i < resumed.assignments.size(); ++i)
    rig.service->record_vote(s.session_id, resumed.assignments[i].question_id, "No");
  CHECK_THROWS_AS(rig.service->create_session("again"), DuplicateParticipant);
  rig.restart();
  CHECK_THROWS_AS(rig.service->create_session("again"), DuplicateParticipant);
  CHECK_THROWS_AS(rig.service->create_session("  "), InvalidChoice);
}

TEST_CASE("event store keeps each participant in its own log") {
  TempDir dir;
  EventStore store(dir.path(), true);
  store.append("a", R"({"type":"created","participant_id":"a"})");
  store.append("b", R"({"type":"created","participant_id":"b"})");
  store.append("a", R"({"type":"z"})");
  CHECK(store.load("a").size() == 2);
  CHECK(store.load("b").size() == 1);
  CHECK(store.exists("a"));
  CHECK_FALSE(store.exists("c"));
  CHECK(store.participants() == std::vector<std::string>{"a", "b"});
  store.append("broken", "{");
  CHECK_THROWS_AS((void)store.participants(), CorruptLog);

  TempDir other;
  EventStore busy(other.path(), false);
  std::vector<std::thread> pool;
  for (int t = 0; t < 4; ++t)
    pool.emplace_back([&, t] {
      for (int k = 0; k < 50; ++k) busy.append("c", json{{"t", t}, {"k", k}}.dump());
    });
  for (auto& th : pool) th.join();
  const auto lines = busy.load("c");
  CHECK(lines.size() == 200);
  for (const auto& l : lines) CHECK_NOTHROW((void)json::parse(l));
}

TEST_CASE("configuration validation and JSON round trip") {
  const auto c = default_experiment_config();
  CHECK_NOTHROW(c.validate());
  const auto back = experiment_config_from_json(experiment_config_to_json(c));
  CHECK(experiment_config_to_json(back) == experiment_config_to_json(c));

  auto bad = c;
  bad.topics.pop_back();
  CHECK_THROWS_AS(bad.validate(), ConfigInvalid);
  bad = c;
  bad.treatment_probability = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigInvalid);
  bad = c;
  bad.topics[0].pool[0].llm_answer = "Perhaps";
  CHECK_THROWS_AS(bad.validate(), ConfigInvalid);
  bad = c;
  bad.topics[1].pool[0].id = bad.topics[0].pool[0].id;
  CHECK_THROWS_AS(bad.validate(), ConfigInvalid);
  bad = c;
  bad.topics[2].provider_ref = "nobody";
  CHECK_THROWS_AS(bad.validate(), ConfigInvalid);
  bad = c;
  bad.pretreatment[3].correct.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigInvalid);
  CHECK_THROWS_AS(experiment_config_from_json("{not json"), ConfigInvalid);
}

TEST_CASE("HTTP router status codes") {
  Rig rig(all_treated());
  ExperimentApi api(*rig.service, "sekret");
  auto call = [&](const std::string& m, const std::string& p, const json& body = json::object(),
                  const std::string& auth = "") { return api.handle(m, p, {}, body.dump(), auth); };

  HttpReply r = call("POST", "/session", {{"participant_id", "web1"}});
  REQUIRE(r.status == 201);
  const json view = json::parse(r.body);
  const std::string sid = view.at("session_id");
  const std::string q = view.at("assignments")[0].at("question_id");
  CHECK(r.body.find("provider_ref") == std::string::npos);

  CHECK(call("GET", "/session/" + sid).status == 200);
  CHECK(call("GET", "/session/s-unknown").status == 404);
  CHECK(api.handle("POST", "/session", {}, "{oops", "").status == 400);
  CHECK(call("POST", "/session/" + sid + "/display", {{"question_id", q}}).status == 200);

  r = call("POST", "/session/" + sid + "/chat", {{"question_id", q}, {"message", "hello"}});
  CHECK(r.status == 200);
  CHECK_FALSE(json::parse(r.body).at("reply").get<std::string>().empty());
  CHECK(call("POST", "/session/" + sid + "/chat", {{"question_id", q}, {"message", ""}}).status == 400);
  CHECK(call("POST", "/session/" + sid + "/chat", {{"question_id", "nah"}, {"message", "x"}}).status == 404);

  rig.clock.advance(60);
  r = call("POST", "/session/" + sid + "/vote", {{"question_id", q}, {"choice", "Yes"}});
  CHECK(r.status == 409);
  CHECK(json::parse(r.body).at("remaining_seconds").get<double>() == doctest::Approx(120.0));
  CHECK(call("POST", "/session/" + sid + "/vote", {{"question_id", q}, {"choice", "Sure"}}).status == 400);
  rig.clock.advance(120);
  r = call("POST", "/session/" + sid + "/vote", {{"question_id", q}, {"choice", "Yes"}});
  CHECK(r.status == 200);
  CHECK(json::parse(r.body).at("recorded").get<bool>());
  CHECK(call("POST", "/session/" + sid + "/vote", {{"question_id", q}, {"choice", "Yes"}}).status == 409);

  CHECK(call("GET", "/export").status == 401);
  CHECK(call("GET", "/export", json::object(), "Bearer wrong").status == 401);
  r = call("GET", "/export", json::object(), "Bearer sekret");
  CHECK(r.status == 200);
  CHECK(r.content_type.rfind("text/csv", 0) == 0);
  CHECK(trials_from_csv(r.body).size() == 1);
  CHECK(call("DELETE", "/session/" + sid).status >= 400);
}

TEST_CASE("provider outage maps to 503") {
  Rig rig(all_treated(), false);
  ExperimentApi api(*rig.service, "t");
  const json view = json::parse(api.handle("POST", "/session", {}, R"({"participant_id":"x"})", "").body);
  const std::string sid = view.at("session_id");
  const std::string q = view.at("assignments")[0].at("question_id");
  const json body{{"question_id", q}, {"message", "hi"}};
  CHECK(api.handle("POST", "/session/" + sid + "/chat", {}, body.dump(), "").status == 503);
}

TEST_CASE("live HTTP server") {
  Rig rig(none_treated());
  ExperimentApi api(*rig.service, "tok");
  const int port = api.bind_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server([&] { api.listen_after_bind(); });

  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Post("/session", R"({"participant_id":"net1"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 201);
  const json view = json::parse(res->body);
  const std::string sid = view.at("session_id");
  for (const auto& a : view.at("assignments")) {
    const json vote{{"question_id", a.at("question_id")}, {"choice", "No"}};
    auto v = cli.Post("/session/" + sid + "/vote", vote.dump(), "application/json");
    REQUIRE(v);
    CHECK(v->status == 200);
  }
  auto g = cli.Get("/session/" + sid);
  REQUIRE(g);
  CHECK(json::parse(g->body).at("completed").get<bool>());

  auto denied = cli.Get("/export");
  REQUIRE(denied);
  CHECK(denied->status == 401);
  auto ok = cli.Get("/export?wave=wave1", {{"Authorization", "Bearer tok"}});
  REQUIRE(ok);
  CHECK(ok->status == 200);
  CHECK(trials_from_csv(ok->body).size() == 4);

  api.stop();
  server.join();
}
