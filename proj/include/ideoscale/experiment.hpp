#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ideoscale/clock.hpp"
#include "ideoscale/llm.hpp"

namespace ideo {

IDEO_DEFINE_ERROR(DuplicateParticipant);
IDEO_DEFINE_ERROR(ConfigInvalid);
IDEO_DEFINE_ERROR(UnknownSession);
IDEO_DEFINE_ERROR(UnknownQuestion);
IDEO_DEFINE_ERROR(UntreatedQuestion);
IDEO_DEFINE_ERROR(SessionCompleted);
IDEO_DEFINE_ERROR(ProviderUnavailable);
IDEO_DEFINE_ERROR(AlreadyVoted);
IDEO_DEFINE_ERROR(InvalidChoice);
IDEO_DEFINE_ERROR(EmptyMessage);
IDEO_DEFINE_ERROR(CorruptLog);

class TimerNotElapsed : public Error {
 public:
  TimerNotElapsed(double remaining_seconds, const std::string& what)
      : Error(what), remaining_(remaining_seconds) {}
  const char* kind() const noexcept override { return "TimerNotElapsed"; }
  double remaining_seconds() const { return remaining_; }

 private:
  double remaining_;
};

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentQuestion {
  std::string id;
  std::string text;
  std::vector<std::string> options = {"Yes", "No"};  // options[0] is the affirmative answer
  std::string llm_answer;                            // the assigned model's recorded answer
};

struct ExperimentTopic {
  std::string name;
  std::string provider_ref;  // key into ExperimentConfig::providers
  std::vector<ExperimentQuestion> pool;
};

enum class PretreatmentKind { political_interest, news_sources, llm_familiarity, attention_check, other };
std::string_view to_string(PretreatmentKind k);
PretreatmentKind parse_pretreatment_kind(std::string_view s);

struct PretreatmentQuestion {
  std::string id;
  PretreatmentKind kind = PretreatmentKind::other;
  std::string text;
  std::vector<std::string> options;
  std::string correct;  // attention checks only
};

struct ExperimentConfig {
  std::vector<ExperimentTopic> topics;
  double treatment_probability = 0.5;
  double min_chat_seconds = 180.0;
  std::vector<PretreatmentQuestion> pretreatment;
  std::string wave_label = "wave1";
  std::map<std::string, ProviderConfig> providers;
  std::uint64_t seed = 42;

  void validate() const;  // throws ConfigInvalid
  const ExperimentQuestion& question(std::string_view id) const;  // throws UnknownQuestion
  const ExperimentTopic& topic_of(std::string_view question_id) const;
};

// Four topics with two questions each and the recorded model answers used as
// the alignment reference.
ExperimentConfig default_experiment_config();
ExperimentConfig experiment_config_from_json(const std::string& text);
std::string experiment_config_to_json(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Session state

struct ChatEntry {
  std::string role;  // "user" or "assistant"
  std::string text;
  double at = 0.0;
};

struct VoteEntry {
  std::string choice;
  double at = 0.0;
};

struct Assignment {
  std::string topic;
  std::string question_id;
  bool treated = false;
  std::string provider_ref;
  std::optional<double> first_display;
  std::vector<ChatEntry> transcript;
  std::size_t failed_replies = 0;
  std::optional<VoteEntry> vote;
};

struct Session {
  std::string session_id;
  std::string participant_id;
  double created_at = 0.0;
  std::string wave_label;
  std::vector<Assignment> assignments;  // in presentation order
  std::map<std::string, std::string> pretreatment_answers;
  bool completed = false;

  Assignment& assignment(std::string_view question_id);  // throws UnknownQuestion
  const Assignment& assignment(std::string_view question_id) const;
};

// Canonical JSON of the full state. With include_private=false the provider
// reference is omitted (the respondent-facing view).
std::string session_to_json(const Session& session, bool include_private = true);

struct TrialRecord {
  std::string participant_id;
  std::string question_id;
  std::string topic;
  bool treated = false;
  int aligned = 0;
  std::size_t n_chat_questions = 0;
  double chat_minutes = 0.0;
  std::optional<int> political_interest;
  std::optional<int> news_source_count;
  std::optional<int> llm_familiarity;
  bool attention_passed = false;
  std::string wave_label;
};

TrialRecord derive_trial(const Session& session, const Assignment& assignment, const ExperimentConfig& config);

// Column order: participant_id, question_id, topic, treated, aligned,
// n_chat_questions, chat_minutes, political_interest, news_source_count,
// llm_familiarity, attention_passed, wave_label.
std::string trials_to_csv(const std::vector<TrialRecord>& rows);
std::vector<TrialRecord> trials_from_csv(const std::string& text);

// ---------------------------------------------------------------------------
// Persistence

// One append-only JSONL file per participant. Each append is a single
// write() of a complete line under a per-participant lock.
class EventStore {
 public:
  // durable=false skips fsync; for simulated panels only.
  explicit EventStore(std::filesystem::path dir, bool durable = true);
  void append(const std::string& participant_id, const std::string& json_line);
  std::vector<std::string> load(const std::string& participant_id) const;
  std::vector<std::string> participants() const;
  bool exists(const std::string& participant_id) const;
  std::filesystem::path path_for(const std::string& participant_id) const;

 private:
  std::mutex& lock_for(const std::string& participant_id);

  std::filesystem::path dir_;
  bool durable_ = true;
  mutable std::mutex map_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

// Rebuilds a session from its event lines.
Session replay_session(const std::vector<std::string>& events, const ExperimentConfig& config);

// Draws the assignments for one participant. The stream is determined by
// (seed, participant_id).
std::vector<Assignment> randomize_assignments(const ExperimentConfig& config, std::string_view participant_id,
                                              std::uint64_t seed);

// ---------------------------------------------------------------------------
// Service

class ExperimentService {
 public:
  // providers maps provider_ref to a live provider; refs absent from the map
  // make relay_chat fail with ProviderUnavailable.
  ExperimentService(ExperimentConfig config, EventStore& store, Clock& clock,
                    std::map<std::string, Provider*> providers);

  // Creates a session, or resumes the participant's unfinished one.
  Session create_session(const std::string& participant_id);
  Session get_session(const std::string& session_id) const;
  Session submit_pretreatment(const std::string& session_id, const std::map<std::string, std::string>& answers);
  // Records the first display of a question; later calls are no-ops.
  Session display_question(const std::string& session_id, const std::string& question_id);
  std::string relay_chat(const std::string& session_id, const std::string& question_id, const std::string& message);
  TrialRecord record_vote(const std::string& session_id, const std::string& question_id, const std::string& choice);

  std::vector<TrialRecord> export_trials(const std::optional<std::string>& wave = std::nullopt) const;
  const ExperimentConfig& config() const { return config_; }

 private:
  struct Live {
    std::mutex mu;
    Session session;
  };
  std::shared_ptr<Live> find(const std::string& session_id) const;
  void append(const Session& s, const std::string& line);
  void ensure_displayed(Live& live, Assignment& a);

  ExperimentConfig config_;
  EventStore& store_;
  Clock& clock_;
  std::map<std::string, Provider*> providers_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Live>> by_session_;
  std::map<std::string, std::string> session_of_participant_;
};

std::vector<TrialRecord> export_trials(const EventStore& store, const ExperimentConfig& config,
                                       const std::optional<std::string>& wave = std::nullopt);

// ---------------------------------------------------------------------------
// HTTP API

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

// Transport-independent router; serve() mounts it on an HTTP server.
//   POST /session                       {"participant_id"}
//   GET  /session/{id}
//   POST /session/{id}/pretreatment     {"answers": {...}}
//   POST /session/{id}/display          {"question_id"}
//   POST /session/{id}/chat             {"question_id", "message"}
//   POST /session/{id}/vote             {"question_id", "choice"}
//   GET  /export?wave=                  Authorization: Bearer <token>
class ExperimentApi {
 public:
  ExperimentApi(ExperimentService& service, std::string export_token);
  HttpReply handle(const std::string& method, const std::string& path, const std::map<std::string, std::string>& query,
                   const std::string& body, const std::string& authorization) const;
  // Blocks; returns when stop() is called from another thread.
  void serve(const std::string& host, int port);
  int bind_any_port(const std::string& host);
  void listen_after_bind();
  void stop();

 private:
  struct Server;
  ExperimentService& service_;
  std::string export_token_;
  std::shared_ptr<Server> server_;
};

}  // namespace ideo
