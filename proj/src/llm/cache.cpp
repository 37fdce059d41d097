#include <algorithm>

#include <nlohmann/json.hpp>

#include "ideoscale/hash.hpp"
#include "ideoscale/llm.hpp"

namespace ideo {

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  const auto path = path_for(key);
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    auto j = nlohmann::json::parse(read_file(path));
    return j.at("response").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;  // unreadable entry: refetch and overwrite
  }
}

void ResponseCache::put(const std::string& key, const std::string& canonical_request, const std::string& response) {
  nlohmann::json j;
  j["request"] = nlohmann::json::parse(canonical_request);
  j["response"] = response;
  const auto path = path_for(key);
  std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, j.dump(2) + "\n");
}

RateLimiter::RateLimiter(Clock& clock, int per_minute) : clock_(clock), per_minute_(per_minute) {
  if (per_minute < 1) throw ConfigError("requests_per_minute must be >= 1");
}

void RateLimiter::acquire() {
  for (;;) {
    double wait = 0.0;
    {
      std::lock_guard lock(mu_);
      const double now = clock_.now();
      while (!window_.empty() && now - window_.front() >= 60.0) window_.pop_front();
      if (static_cast<int>(window_.size()) < per_minute_) {
        window_.push_back(now);
        history_.push_back(now);
        return;
      }
      wait = std::max(60.0 - (now - window_.front()), 1e-3);
    }
    clock_.sleep_for(wait);
  }
}

}  // namespace ideo
