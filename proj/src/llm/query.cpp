#include <cmath>
#include <exception>
#include <thread>

#include <nlohmann/json.hpp>

#include "ideoscale/hash.hpp"
#include "ideoscale/llm.hpp"

namespace ideo {

std::string canonical_request(const ProviderConfig& config, const PromptSpec& prompt, std::size_t repeat_index) {
  nlohmann::json j;
  j["provider"] = config.provider_id;
  j["model"] = config.model_name;
  j["template_version"] = prompt.template_version;
  j["persona"] = std::string(to_string(prompt.persona));
  j["item_id"] = prompt.item_id;
  j["prompt"] = prompt.rendered_text;
  j["repeat_index"] = repeat_index;
  j["temperature"] = config.temperature;
  j["top_p"] = config.top_p;
  return j.dump();
}

QueryEngine::QueryEngine(ProviderConfig config, Provider& provider, Clock& clock)
    : config_(std::move(config)), provider_(provider), clock_(clock), limiter_(clock, config_.requests_per_minute) {
  config_.validate();
  if (!config_.cache_dir.empty()) cache_.emplace(config_.cache_dir);
}

std::vector<AttemptLog> QueryEngine::attempts() const {
  std::lock_guard lock(log_mu_);
  return log_;
}

std::string QueryEngine::fetch(const PromptSpec& prompt, std::size_t repeat_index) {
  ChatRequest req;
  req.model = config_.model_name;
  req.temperature = config_.temperature;
  req.top_p = config_.top_p;
  req.messages.push_back({"user", prompt.rendered_text});

  const int max_attempts = 1 + config_.max_retries;
  bool throttled = false;
  std::string last_error;
  auto log = [&](int attempt, const char* outcome) {
    std::lock_guard lock(log_mu_);
    log_.push_back({prompt.item_id, repeat_index, attempt, outcome});
  };

  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    limiter_.acquire();
    ++network_calls_;
    try {
      std::string reply = provider_.complete(req);
      log(attempt, "ok");
      return reply;
    } catch (const AuthError&) {
      log(attempt, "auth");
      throw;
    } catch (const ProviderThrottled& e) {
      log(attempt, "throttled");
      throttled = true;
      last_error = e.what();
    } catch (const TransportError& e) {
      log(attempt, "transport");
      throttled = false;
      last_error = e.what();
    }
    if (attempt < max_attempts)
      clock_.sleep_for(config_.backoff_initial_seconds * std::pow(config_.backoff_factor, attempt - 1));
  }
  const std::string msg = config_.provider_id + "/" + config_.model_name + ": giving up on " + prompt.item_id +
                          " after " + std::to_string(max_attempts) + " attempts: " + last_error;
  if (throttled) throw RateLimitExhausted(msg);
  throw TransportError(msg);
}

std::vector<std::string> QueryEngine::query(const PromptSpec& prompt, int n_repeats) {
  if (n_repeats < 1) throw ConfigError("n_repeats must be >= 1");
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n_repeats));
  for (std::size_t r = 0; r < static_cast<std::size_t>(n_repeats); ++r) {
    const std::string canonical = canonical_request(config_, prompt, r);
    const std::string key = sha256_hex(canonical);
    if (cache_) {
      if (auto hit = cache_->get(key)) {
        ++cache_hits_;
        out.push_back(std::move(*hit));
        continue;
      }
    }
    std::string reply = fetch(prompt, r);
    if (cache_) cache_->put(key, canonical, reply);
    out.push_back(std::move(reply));
  }
  return out;
}

std::vector<std::vector<std::string>> QueryEngine::query_all(const std::vector<PromptSpec>& prompts, int n_repeats) {
  std::vector<std::vector<std::string>> out(prompts.size());
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config_.max_in_flight), prompts.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < prompts.size(); ++i) out[i] = query(prompts[i], n_repeats);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < prompts.size(); i = next++) {
        try {
          out[i] = query(prompts[i], n_repeats);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
          next = prompts.size();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<std::string> query_model(QueryEngine& engine, const PromptSpec& prompt, int n_repeats) {
  return engine.query(prompt, n_repeats);
}

InstrumentRun run_instrument(QueryEngine& engine, const std::vector<Item>& items, const std::string& actor_id,
                             int n_repeats) {
  std::vector<PromptSpec> prompts;
  prompts.reserve(items.size());
  std::size_t vocab = 0;
  for (const auto& item : items) {
    prompts.push_back(build_prompt(persona_for(item.source), item));
    vocab = std::max(vocab, item.answer_domain.size());
  }
  const auto replies = engine.query_all(prompts, n_repeats);

  InstrumentRun run;
  run.parsed.resize(items.size());
  for (std::size_t j = 0; j < items.size(); ++j) {
    for (std::size_t r = 0; r < replies[j].size(); ++r) {
      ParsedResponse p = parse_vote(replies[j][r], items[j]);
      p.repeat_index = r;
      run.parsed[j].push_back(std::move(p));
    }
    const ParsedResponse& first = run.parsed[j].front();
    if (first.extracted_answer) run.records.push_back({actor_id, items[j].id, *first.extracted_answer});
    else ++run.unparseable;
  }
  if (n_repeats >= 2 && !items.empty()) {
    try {
      run.stability = stability_audit(run.parsed, vocab);
    } catch (const DegenerateMargins&) {
      run.stability.reset();
    }
  }
  return run;
}

}  // namespace ideo
