#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ideoscale/clock.hpp"
#include "ideoscale/corpus.hpp"
#include "ideoscale/metrics.hpp"

namespace ideo {

IDEO_DEFINE_ERROR(PersonaSourceMismatch);
IDEO_DEFINE_ERROR(AuthError);
IDEO_DEFINE_ERROR(RateLimitExhausted);
IDEO_DEFINE_ERROR(TransportError);
// Raised by providers for HTTP 429 style throttling; retried like a
// transport error and surfaced as RateLimitExhausted once retries run out.
IDEO_DEFINE_ERROR(ProviderThrottled);

// ---------------------------------------------------------------------------
// Prompts

enum class Persona { representative, justice, voter };
std::string_view to_string(Persona p);
Persona parse_persona(std::string_view s);
Persona persona_for(ItemSource source);

inline constexpr std::string_view kTemplateVersion = "v1";

struct PromptSpec {
  Persona persona = Persona::voter;
  std::string item_id;
  std::string template_version{kTemplateVersion};
  std::string rendered_text;
  std::vector<std::string> answer_vocabulary;
};

// Renders the persona template around the item text. The representative
// template lists the item's whole answer domain; the justice and voter
// templates offer the substantive pair only.
PromptSpec build_prompt(Persona persona, const Item& item);

// ---------------------------------------------------------------------------
// Parsing

enum class ResponseCode { liberal, missing, conservative, unparseable };
std::string_view to_string(ResponseCode c);

struct ParsedResponse {
  std::string raw_text;
  std::optional<std::string> extracted_answer;
  std::optional<std::size_t> answer_index;  // into the vocabulary
  ResponseCode code = ResponseCode::unparseable;
  std::size_t repeat_index = 0;
};

// Vocabulary entries are matched case-insensitively as whole tokens
// ("Agree" does not match inside "Disagree"). Exactly one distinct entry
// must occur; otherwise the response is unparseable.
ParsedResponse parse_vote(std::string_view raw_text, const std::vector<std::string>& vocabulary,
                          std::size_t conservative_answer);
ParsedResponse parse_vote(std::string_view raw_text, const Item& item);

// Items are subjects, repeats are raters, categories are the vocabulary plus
// one extra column for unparseable replies.
KappaReport stability_audit(const std::vector<std::vector<ParsedResponse>>& responses, std::size_t vocabulary_size);

// ---------------------------------------------------------------------------
// Providers

struct ChatMessage {
  std::string role;  // "system", "user" or "assistant"
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  double top_p = 0.0;
};

class Provider {
 public:
  virtual ~Provider() = default;
  // Returns the assistant text. Throws TransportError or ProviderThrottled
  // for transient failures and AuthError for credential problems.
  virtual std::string complete(const ChatRequest& request) = 0;
};

enum class MockFailure { none, transport, throttled, auth };

// Deterministic in-process provider. Replies come from the responder
// callback (default: echo the configured reply). The failure schedule is
// consumed one entry per call before the responder is consulted.
class MockProvider final : public Provider {
 public:
  using Responder = std::function<std::string(const ChatRequest&)>;

  explicit MockProvider(std::string fixed_reply = "Yay");
  explicit MockProvider(Responder responder);

  std::string complete(const ChatRequest& request) override;

  void set_failures(std::vector<MockFailure> schedule);
  std::size_t request_count() const { return requests_.load(); }
  void reset_count() { requests_ = 0; }
  std::vector<ChatRequest> captured() const;

 private:
  Responder responder_;
  mutable std::mutex mu_;
  std::deque<MockFailure> failures_;
  std::vector<ChatRequest> captured_;
  std::atomic<std::size_t> requests_{0};
};

struct ProviderConfig {
  std::string provider_id = "mock";
  std::string endpoint;  // base URL, e.g. https://api.example.com
  std::string model_name = "mock-model";
  double temperature = 0.0;
  double top_p = 0.0;
  bool allow_decoding_override = false;
  int max_retries = 3;
  int requests_per_minute = 60;
  std::filesystem::path cache_dir;  // empty disables caching
  std::string api_key_env_var;
  int max_in_flight = 4;
  double backoff_initial_seconds = 1.0;
  double backoff_factor = 2.0;

  void validate() const;  // throws ConfigError
};

// JSON object form; unknown keys are rejected, absent keys keep defaults.
ProviderConfig provider_config_from_json(const std::string& json_text);
std::string provider_config_to_json(const ProviderConfig& config);

// OpenAI-compatible chat-completions client. POSTs to
// <endpoint>/v1/chat/completions with {model, messages, temperature, top_p}
// and reads choices[0].message.content. The key is read from the named
// environment variable at construction.
class HttpProvider final : public Provider {
 public:
  explicit HttpProvider(const ProviderConfig& config);
  std::string complete(const ChatRequest& request) override;

 private:
  std::string endpoint_;
  std::string api_key_;
  double timeout_seconds_ = 60.0;
};

std::unique_ptr<Provider> make_provider(const ProviderConfig& config);

// ---------------------------------------------------------------------------
// Cache, rate limiting, querying

// One JSON file per key: {"request": <canonical request>, "response": text}.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);
  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& canonical_request, const std::string& response);
  std::filesystem::path path_for(const std::string& key) const;

 private:
  std::filesystem::path dir_;
};

// Admits at most `per_minute` acquisitions in any window [t, t + 60).
class RateLimiter {
 public:
  RateLimiter(Clock& clock, int per_minute);
  void acquire();
  const std::vector<double>& history() const { return history_; }

 private:
  Clock& clock_;
  int per_minute_;
  std::mutex mu_;
  std::deque<double> window_;
  std::vector<double> history_;
};

struct AttemptLog {
  std::string item_id;
  std::size_t repeat_index = 0;
  int attempt = 0;  // 1-based
  std::string outcome;  // "ok", "transport", "throttled", "auth"
};

std::string canonical_request(const ProviderConfig& config, const PromptSpec& prompt, std::size_t repeat_index);

class QueryEngine {
 public:
  QueryEngine(ProviderConfig config, Provider& provider, Clock& clock);

  // n_repeats raw replies; each served from cache when possible.
  std::vector<std::string> query(const PromptSpec& prompt, int n_repeats);

  // Runs prompts with at most max_in_flight concurrent requests; results keep
  // input order.
  std::vector<std::vector<std::string>> query_all(const std::vector<PromptSpec>& prompts, int n_repeats);

  std::size_t cache_hits() const { return cache_hits_.load(); }
  std::size_t network_calls() const { return network_calls_.load(); }
  std::vector<AttemptLog> attempts() const;
  const ProviderConfig& config() const { return config_; }

 private:
  std::string fetch(const PromptSpec& prompt, std::size_t repeat_index);

  ProviderConfig config_;
  Provider& provider_;
  Clock& clock_;
  std::optional<ResponseCache> cache_;
  RateLimiter limiter_;
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> network_calls_{0};
  mutable std::mutex log_mu_;
  std::vector<AttemptLog> log_;
};

std::vector<std::string> query_model(QueryEngine& engine, const PromptSpec& prompt, int n_repeats);

// Queries one model on every item and turns the first repeat into vote
// records for the given actor id. Unparseable replies produce no record (the
// cell stays missing) and are tallied.
struct InstrumentRun {
  std::vector<VoteRecord> records;
  std::vector<std::vector<ParsedResponse>> parsed;  // per item, per repeat
  std::size_t unparseable = 0;
  std::optional<KappaReport> stability;  // when n_repeats >= 2 and margins allow
};

InstrumentRun run_instrument(QueryEngine& engine, const std::vector<Item>& items, const std::string& actor_id,
                             int n_repeats);

}  // namespace ideo
