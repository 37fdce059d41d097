#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ideoscale/experiment.hpp"
#include "ideoscale/hash.hpp"

namespace ideo {

namespace {

bool safe_name(const std::string& id) {
  if (id.empty() || id.size() > 100 || id[0] == '.') return false;
  for (char c : id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) return false;
  return true;
}

}  // namespace

EventStore::EventStore(std::filesystem::path dir, bool durable) : dir_(std::move(dir)), durable_(durable) { std::filesystem::create_directories(dir_); }

std::filesystem::path EventStore::path_for(const std::string& participant_id) const {
  // Unusual ids are hashed so they can never escape the directory.
  const std::string stem = safe_name(participant_id) ? participant_id : "h-" + sha256_hex(participant_id).substr(0, 32);
  return dir_ / (stem + ".jsonl");
}

std::mutex& EventStore::lock_for(const std::string& participant_id) {
  std::lock_guard lock(map_mu_);
  auto& slot = locks_[participant_id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

void EventStore::append(const std::string& participant_id, const std::string& json_line) {
  if (json_line.find('\n') != std::string::npos) throw Error("event line contains a newline");
  std::lock_guard lock(lock_for(participant_id));
  const auto path = path_for(participant_id);
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error("cannot open " + path.string() + ": " + std::strerror(errno));
  const std::string line = json_line + "\n";
  const ssize_t n = ::write(fd, line.data(), line.size());
  const int err = errno;
  if (durable_) ::fsync(fd);
  ::close(fd);
  if (n != static_cast<ssize_t>(line.size())) throw Error("short write to " + path.string() + ": " + std::strerror(err));
}

std::vector<std::string> EventStore::load(const std::string& participant_id) const {
  std::vector<std::string> out;
  std::ifstream in(path_for(participant_id), std::ios::binary);
  if (!in) return out;
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t start = 0;
  for (std::size_t nl = text.find('\n'); nl != std::string::npos; nl = text.find('\n', start)) {
    if (nl > start) out.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  // A trailing fragment without newline is a torn write and is ignored.
  return out;
}

bool EventStore::exists(const std::string& participant_id) const {
  return std::filesystem::exists(path_for(participant_id));
}

std::vector<std::string> EventStore::participants() const {
  std::vector<std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(dir_))
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  std::vector<std::string> ids;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string first;
    if (!std::getline(in, first)) continue;
    try {
      ids.push_back(nlohmann::json::parse(first).at("participant_id").get<std::string>());
    } catch (const nlohmann::json::exception&) {
      throw CorruptLog("first event of " + f + " is unreadable");
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace ideo
