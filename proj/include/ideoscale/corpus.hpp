#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ideoscale/error.hpp"

namespace ideo {

IDEO_DEFINE_ERROR(UnknownActor);
IDEO_DEFINE_ERROR(UnknownItem);
IDEO_DEFINE_ERROR(UnrecognizedAnswer);
IDEO_DEFINE_ERROR(DuplicateActor);
IDEO_DEFINE_ERROR(ItemMismatch);
IDEO_DEFINE_ERROR(InvalidCorpus);

enum class ActorKind { legislator, justice, respondent, llm };
enum class ItemSource { house_bill, senate_bill, scotus_case, survey_question };
enum class Topic {
  abortion,
  climate,
  government_spending,
  gun_control,
  healthcare,
  immigration,
  police,
  taxes,
  miscellaneous
};

std::string_view to_string(ActorKind k);
std::string_view to_string(ItemSource s);
std::string_view to_string(Topic t);
ActorKind parse_actor_kind(std::string_view s);
ItemSource parse_item_source(std::string_view s);
Topic parse_topic(std::string_view s);
const std::vector<Topic>& all_topics();

// Recoded response. Abstention and nonresponse are both `missing`.
enum class Code : std::int8_t { liberal = -1, missing = 0, conservative = 1 };

struct Actor {
  std::string id;
  ActorKind kind = ActorKind::respondent;
  std::string display_name;
  std::optional<std::string> group;  // party or partisan self-identification
  std::map<std::string, std::string> tags;
};

// The first two entries of answer_domain are the substantive pair; any
// further entries (Abstain, Present, Not Voting...) code as missing.
struct Item {
  std::string id;
  ItemSource source = ItemSource::survey_question;
  std::optional<Topic> topic;
  std::string text;
  std::vector<std::string> answer_domain;
  std::size_t conservative_answer = 0;

  std::size_t liberal_answer() const { return conservative_answer == 0 ? 1 : 0; }
  const std::string& conservative_text() const { return answer_domain.at(conservative_answer); }
  const std::string& liberal_text() const { return answer_domain.at(liberal_answer()); }

  // Case-insensitive lookup; nullopt when the answer is outside the domain.
  std::optional<std::size_t> find_answer(std::string_view answer) const;
  std::optional<Code> code_for(std::string_view answer) const;
  Code code_for_index(std::size_t idx) const;

  void validate() const;  // throws InvalidCorpus
};

// Immutable actor-by-item table of recoded responses.
class ResponseMatrix {
 public:
  ResponseMatrix() = default;
  ResponseMatrix(std::vector<Actor> actors, std::vector<Item> items, std::vector<Code> codes,
                 std::string provenance);

  std::size_t n_actors() const { return actors_.size(); }
  std::size_t n_items() const { return items_.size(); }
  const std::vector<Actor>& actors() const { return actors_; }
  const std::vector<Item>& items() const { return items_; }
  const std::string& provenance() const { return provenance_; }

  Code code(std::size_t actor, std::size_t item) const { return codes_[actor * items_.size() + item]; }
  std::span<const Code> row(std::size_t actor) const {
    return {codes_.data() + actor * items_.size(), items_.size()};
  }
  const std::vector<Code>& codes() const { return codes_; }

  std::optional<std::size_t> actor_index(std::string_view id) const;
  std::optional<std::size_t> item_index(std::string_view id) const;
  std::size_t require_actor(std::string_view id) const;  // throws UnknownActor

  // Codes as doubles (+1, -1, 0 for missing).
  Eigen::MatrixXd dense() const;
  std::size_t n_observed() const;

 private:
  std::vector<Actor> actors_;
  std::vector<Item> items_;
  std::vector<Code> codes_;
  std::string provenance_;
  std::unordered_map<std::string, std::size_t> actor_pos_;
  std::unordered_map<std::string, std::size_t> item_pos_;
};

struct Registry {
  std::vector<Actor> actors;
  std::vector<Item> items;
};

struct VoteRecord {
  std::string actor_id;
  std::string item_id;
  std::string answer;
};

// Counts of answers that mapped to `missing`, keyed by the answer string as
// written in the item's domain.
struct IngestReport {
  std::map<std::string, std::size_t> missing_by_answer;
  std::size_t dropped_actors = 0;
  std::size_t dropped_items = 0;
};

ResponseMatrix ingest_votes(const std::vector<VoteRecord>& records, const Registry& registry,
                            std::string provenance = {}, IngestReport* report = nullptr);

struct FilterOptions {
  double min_minority_share = 0.025;
  std::size_t min_responses = 10;
};

ResponseMatrix filter_items(const ResponseMatrix& matrix, const FilterOptions& opts = {});
ResponseMatrix merge_actors(const ResponseMatrix& base, const ResponseMatrix& extra);
ResponseMatrix subset_by_topic(const ResponseMatrix& matrix, Topic topic);

// Restrict to a subset of actors (in the given order), dropping items left
// without observations.
ResponseMatrix select_actors(const ResponseMatrix& matrix, const std::vector<std::size_t>& rows);

// Normalized on-disk format: actors.csv, items.csv, responses.csv.
struct CorpusFiles {
  Registry registry;
  std::vector<VoteRecord> records;
};

CorpusFiles read_corpus_files(const std::filesystem::path& dir);
ResponseMatrix read_corpus(const std::filesystem::path& dir, IngestReport* report = nullptr);
void write_corpus(const ResponseMatrix& matrix, const std::filesystem::path& dir,
                  std::string_view header_comment = {});

}  // namespace ideo
