// Eigen must be seen before httplib: <resolv.h> defines a `_res` macro.
#include "ideoscale/llm.hpp"

#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace ideo {

using nlohmann::json;

HttpProvider::HttpProvider(const ProviderConfig& config) : endpoint_(config.endpoint) {
  while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
  if (!config.api_key_env_var.empty()) {
    const char* key = std::getenv(config.api_key_env_var.c_str());
    if (!key || !*key) throw AuthError("environment variable " + config.api_key_env_var + " is not set");
    api_key_ = key;
  }
}

std::string HttpProvider::complete(const ChatRequest& request) {
  json body;
  body["model"] = request.model;
  body["temperature"] = request.temperature;
  body["top_p"] = request.top_p;
  body["messages"] = json::array();
  for (const auto& m : request.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});

  httplib::Client client(endpoint_);
  client.set_connection_timeout(static_cast<time_t>(timeout_seconds_));
  client.set_read_timeout(static_cast<time_t>(timeout_seconds_));
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
  if (!res) throw TransportError("request to " + endpoint_ + " failed: " + httplib::to_string(res.error()));
  if (res->status == 401 || res->status == 403) throw AuthError("provider rejected credentials (HTTP " + std::to_string(res->status) + ")");
  if (res->status == 429) throw ProviderThrottled("provider returned HTTP 429");
  if (res->status >= 500) throw TransportError("provider returned HTTP " + std::to_string(res->status));
  if (res->status != 200) throw TransportError("unexpected HTTP " + std::to_string(res->status) + ": " + res->body);

  try {
    const json reply = json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed completion payload: ") + e.what());
  }
}

}  // namespace ideo
