#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ideoscale/corpus.hpp"

namespace testing {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "ideo-test-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline std::filesystem::path fixture(const std::string& rel) {
  return std::filesystem::path(IDEO_FIXTURE_DIR) / rel;
}

inline ideo::Item binary_item(const std::string& id, ideo::ItemSource source = ideo::ItemSource::house_bill,
                              std::vector<std::string> domain = {"Yay", "Nay", "Abstain"}, std::size_t cons = 0) {
  ideo::Item it;
  it.id = id;
  it.source = source;
  it.text = "Item " + id;
  it.answer_domain = std::move(domain);
  it.conservative_answer = cons;
  return it;
}

// Rows of +1 / -1 / 0 (missing); groups optional.
inline ideo::ResponseMatrix matrix_from(const std::vector<std::vector<int>>& rows,
                                        const std::vector<std::string>& groups = {},
                                        ideo::ActorKind kind = ideo::ActorKind::legislator) {
  std::vector<ideo::Actor> actors;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ideo::Actor a;
    a.id = "a" + std::to_string(i);
    a.kind = kind;
    a.display_name = a.id;
    a.group = i < groups.size() && !groups[i].empty() ? groups[i] : "Independent";
    actors.push_back(a);
  }
  std::vector<ideo::Item> items;
  for (std::size_t j = 0; j < (rows.empty() ? 0 : rows[0].size()); ++j) items.push_back(binary_item("i" + std::to_string(j)));
  std::vector<ideo::Code> codes;
  for (const auto& r : rows)
    for (int v : r) codes.push_back(static_cast<ideo::Code>(v));
  return ideo::ResponseMatrix(actors, items, codes, "fixture");
}

inline double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd x = a.array() - a.mean();
  const Eigen::VectorXd y = b.array() - b.mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

}  // namespace testing
