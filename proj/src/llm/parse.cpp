#include <algorithm>
#include <cctype>

#include "ideoscale/llm.hpp"

namespace ideo {

std::string_view to_string(ResponseCode c) {
  switch (c) {
    case ResponseCode::liberal: return "liberal";
    case ResponseCode::missing: return "missing";
    case ResponseCode::conservative: return "conservative";
    case ResponseCode::unparseable: return "unparseable";
  }
  return "?";
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Position of the first whole-token occurrence of needle, or npos.
std::size_t find_token(const std::string& hay, const std::string& needle) {
  if (needle.empty()) return std::string::npos;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) {
    const bool left = pos == 0 || !is_word(hay[pos - 1]);
    const std::size_t end = pos + needle.size();
    const bool right = end == hay.size() || !is_word(hay[end]);
    if (left && right) return pos;
  }
  return std::string::npos;
}

}  // namespace

ParsedResponse parse_vote(std::string_view raw_text, const std::vector<std::string>& vocabulary,
                          std::size_t conservative_answer) {
  ParsedResponse out;
  out.raw_text = std::string(raw_text);
  const std::string hay = lower(raw_text);

  std::optional<std::size_t> found;
  for (std::size_t k = 0; k < vocabulary.size(); ++k) {
    if (find_token(hay, lower(vocabulary[k])) == std::string::npos) continue;
    if (found) return out;  // two different answers named: refuse to guess
    found = k;
  }
  if (!found) return out;

  out.answer_index = found;
  out.extracted_answer = vocabulary[*found];
  const std::size_t liberal = conservative_answer == 0 ? 1 : 0;
  if (*found == conservative_answer) out.code = ResponseCode::conservative;
  else if (*found == liberal) out.code = ResponseCode::liberal;
  else out.code = ResponseCode::missing;
  return out;
}

ParsedResponse parse_vote(std::string_view raw_text, const Item& item) {
  return parse_vote(raw_text, item.answer_domain, item.conservative_answer);
}

KappaReport stability_audit(const std::vector<std::vector<ParsedResponse>>& responses, std::size_t vocabulary_size) {
  if (responses.empty()) throw UnequalRaterCounts("stability_audit: no items");
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(responses.size()),
                                                 static_cast<Eigen::Index>(vocabulary_size + 1));
  for (std::size_t i = 0; i < responses.size(); ++i) {
    if (responses[i].size() != responses[0].size())
      throw UnequalRaterCounts("stability_audit: item " + std::to_string(i) + " has " +
                               std::to_string(responses[i].size()) + " repeats, expected " +
                               std::to_string(responses[0].size()));
    for (const auto& r : responses[i]) {
      const std::size_t col = r.answer_index ? *r.answer_index : vocabulary_size;
      if (col > vocabulary_size) throw DimensionMismatch("stability_audit: answer index outside vocabulary");
      ++counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col));
    }
  }
  return fleiss_kappa(counts);
}

}  // namespace ideo
