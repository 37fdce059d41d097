#include "ideoscale/llm.hpp"

#include <nlohmann/json.hpp>

namespace ideo {

MockProvider::MockProvider(std::string fixed_reply)
    : responder_([reply = std::move(fixed_reply)](const ChatRequest&) { return reply; }) {}

MockProvider::MockProvider(Responder responder) : responder_(std::move(responder)) {}

std::string MockProvider::complete(const ChatRequest& request) {
  ++requests_;
  MockFailure failure = MockFailure::none;
  {
    std::lock_guard lock(mu_);
    captured_.push_back(request);
    if (!failures_.empty()) {
      failure = failures_.front();
      failures_.pop_front();
    }
  }
  switch (failure) {
    case MockFailure::transport: throw TransportError("mock: scripted transport failure");
    case MockFailure::throttled: throw ProviderThrottled("mock: scripted 429");
    case MockFailure::auth: throw AuthError("mock: scripted credential rejection");
    case MockFailure::none: break;
  }
  return responder_(request);
}

void MockProvider::set_failures(std::vector<MockFailure> schedule) {
  std::lock_guard lock(mu_);
  failures_.assign(schedule.begin(), schedule.end());
}

std::vector<ChatRequest> MockProvider::captured() const {
  std::lock_guard lock(mu_);
  return captured_;
}

void ProviderConfig::validate() const {
  if (provider_id.empty()) throw ConfigError("provider_id is empty");
  if (model_name.empty()) throw ConfigError("provider " + provider_id + ": model_name is empty");
  if (!allow_decoding_override && (temperature != 0.0 || top_p != 0.0))
    throw ConfigError("provider " + provider_id +
                      ": temperature and top_p must be 0 unless allow_decoding_override is set");
  if (temperature < 0.0 || top_p < 0.0 || top_p > 1.0)
    throw ConfigError("provider " + provider_id + ": decoding parameters out of range");
  if (requests_per_minute < 1) throw ConfigError("provider " + provider_id + ": requests_per_minute must be >= 1");
  if (max_retries < 0) throw ConfigError("provider " + provider_id + ": max_retries must be >= 0");
  if (max_in_flight < 1) throw ConfigError("provider " + provider_id + ": max_in_flight must be >= 1");
  if (backoff_initial_seconds < 0.0 || backoff_factor < 1.0)
    throw ConfigError("provider " + provider_id + ": invalid backoff settings");
  if (provider_id != "mock" && endpoint.empty()) throw ConfigError("provider " + provider_id + ": endpoint is empty");
}

ProviderConfig provider_config_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("provider config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("provider config must be an object");
  ProviderConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "provider_id") c.provider_id = v.get<std::string>();
      else if (key == "endpoint") c.endpoint = v.get<std::string>();
      else if (key == "model_name") c.model_name = v.get<std::string>();
      else if (key == "temperature") c.temperature = v.get<double>();
      else if (key == "top_p") c.top_p = v.get<double>();
      else if (key == "allow_decoding_override") c.allow_decoding_override = v.get<bool>();
      else if (key == "max_retries") c.max_retries = v.get<int>();
      else if (key == "requests_per_minute") c.requests_per_minute = v.get<int>();
      else if (key == "cache_dir") c.cache_dir = v.get<std::string>();
      else if (key == "api_key_env_var") c.api_key_env_var = v.get<std::string>();
      else if (key == "max_in_flight") c.max_in_flight = v.get<int>();
      else if (key == "backoff_initial_seconds") c.backoff_initial_seconds = v.get<double>();
      else if (key == "backoff_factor") c.backoff_factor = v.get<double>();
      else throw ConfigError("provider config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("provider config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string provider_config_to_json(const ProviderConfig& c) {
  nlohmann::json j;
  j["provider_id"] = c.provider_id;
  j["endpoint"] = c.endpoint;
  j["model_name"] = c.model_name;
  j["temperature"] = c.temperature;
  j["top_p"] = c.top_p;
  j["allow_decoding_override"] = c.allow_decoding_override;
  j["max_retries"] = c.max_retries;
  j["requests_per_minute"] = c.requests_per_minute;
  j["cache_dir"] = c.cache_dir.string();
  j["api_key_env_var"] = c.api_key_env_var;
  j["max_in_flight"] = c.max_in_flight;
  j["backoff_initial_seconds"] = c.backoff_initial_seconds;
  j["backoff_factor"] = c.backoff_factor;
  return j.dump();
}

std::unique_ptr<Provider> make_provider(const ProviderConfig& config) {
  config.validate();
  if (config.provider_id == "mock") return std::make_unique<MockProvider>();
  return std::make_unique<HttpProvider>(config);
}

}  // namespace ideo
