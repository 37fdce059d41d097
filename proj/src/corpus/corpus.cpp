#include "ideoscale/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

namespace ideo {

namespace {

constexpr std::array<std::string_view, 4> kActorKinds = {"legislator", "justice", "respondent", "llm"};
constexpr std::array<std::string_view, 4> kSources = {"house_bill", "senate_bill", "scotus_case",
                                                      "survey_question"};
constexpr std::array<std::string_view, 9> kTopics = {
    "abortion",    "climate", "government_spending", "gun_control", "healthcare",
    "immigration", "police",  "taxes",               "miscellaneous"};

template <std::size_t N>
std::size_t lookup(const std::array<std::string_view, N>& names, std::string_view s, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return i;
  throw InvalidCorpus(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  return true;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view to_string(ActorKind k) { return kActorKinds[static_cast<std::size_t>(k)]; }
std::string_view to_string(ItemSource s) { return kSources[static_cast<std::size_t>(s)]; }
std::string_view to_string(Topic t) { return kTopics[static_cast<std::size_t>(t)]; }

ActorKind parse_actor_kind(std::string_view s) {
  return static_cast<ActorKind>(lookup(kActorKinds, s, "actor kind"));
}
ItemSource parse_item_source(std::string_view s) {
  return static_cast<ItemSource>(lookup(kSources, s, "item source"));
}
Topic parse_topic(std::string_view s) { return static_cast<Topic>(lookup(kTopics, s, "topic")); }

const std::vector<Topic>& all_topics() {
  static const std::vector<Topic> topics = [] {
    std::vector<Topic> t;
    for (std::size_t i = 0; i < kTopics.size(); ++i) t.push_back(static_cast<Topic>(i));
    return t;
  }();
  return topics;
}

// ---------------------------------------------------------------------------
// Item

std::optional<std::size_t> Item::find_answer(std::string_view answer) const {
  answer = trim(answer);
  for (std::size_t i = 0; i < answer_domain.size(); ++i)
    if (iequals(answer_domain[i], answer)) return i;
  return std::nullopt;
}

Code Item::code_for_index(std::size_t idx) const {
  if (idx == conservative_answer) return Code::conservative;
  if (idx == liberal_answer()) return Code::liberal;
  return Code::missing;
}

std::optional<Code> Item::code_for(std::string_view answer) const {
  auto idx = find_answer(answer);
  if (!idx) return std::nullopt;
  return code_for_index(*idx);
}

void Item::validate() const {
  if (id.empty()) throw InvalidCorpus("item with empty id");
  if (answer_domain.size() < 2) throw InvalidCorpus("item " + id + ": answer_domain needs >= 2 entries");
  if (conservative_answer > 1)
    throw InvalidCorpus("item " + id + ": conservative_answer must be one of the first two (substantive) entries");
  if (source == ItemSource::survey_question && !topic)
    throw InvalidCorpus("item " + id + ": survey questions require a topic");
  for (std::size_t i = 0; i < answer_domain.size(); ++i)
    for (std::size_t j = i + 1; j < answer_domain.size(); ++j)
      if (iequals(answer_domain[i], answer_domain[j]))
        throw InvalidCorpus("item " + id + ": duplicate answer '" + answer_domain[i] + "'");
}

// ---------------------------------------------------------------------------
// ResponseMatrix

ResponseMatrix::ResponseMatrix(std::vector<Actor> actors, std::vector<Item> items, std::vector<Code> codes,
                               std::string provenance)
    : actors_(std::move(actors)),
      items_(std::move(items)),
      codes_(std::move(codes)),
      provenance_(std::move(provenance)) {
  const std::size_t n = actors_.size(), m = items_.size();
  if (codes_.size() != n * m)
    throw InvalidCorpus("codes table is " + std::to_string(codes_.size()) + " cells, expected " +
                        std::to_string(n * m));
  for (std::size_t i = 0; i < n; ++i) {
    const Actor& a = actors_[i];
    if (a.id.empty()) throw InvalidCorpus("actor with empty id");
    if ((a.kind == ActorKind::legislator || a.kind == ActorKind::justice) && !a.group)
      throw InvalidCorpus("actor " + a.id + ": group required for legislators and justices");
    if (!actor_pos_.emplace(a.id, i).second) throw DuplicateActor("duplicate actor id " + a.id);
  }
  for (std::size_t j = 0; j < m; ++j) {
    items_[j].validate();
    if (!item_pos_.emplace(items_[j].id, j).second) throw InvalidCorpus("duplicate item id " + items_[j].id);
  }
  std::vector<char> item_seen(m, 0);
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < m; ++j) {
      Code c = codes_[i * m + j];
      auto v = static_cast<int>(c);
      if (v < -1 || v > 1) throw InvalidCorpus("invalid code value");
      if (c != Code::missing) {
        any = true;
        item_seen[j] = 1;
      }
    }
    if (!any) throw InvalidCorpus("actor " + actors_[i].id + " has no non-missing codes");
  }
  for (std::size_t j = 0; j < m; ++j)
    if (!item_seen[j]) throw InvalidCorpus("item " + items_[j].id + " has no non-missing codes");
}

std::optional<std::size_t> ResponseMatrix::actor_index(std::string_view id) const {
  auto it = actor_pos_.find(std::string(id));
  if (it == actor_pos_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> ResponseMatrix::item_index(std::string_view id) const {
  auto it = item_pos_.find(std::string(id));
  if (it == item_pos_.end()) return std::nullopt;
  return it->second;
}

std::size_t ResponseMatrix::require_actor(std::string_view id) const {
  auto idx = actor_index(id);
  if (!idx) throw UnknownActor("unknown actor " + std::string(id));
  return *idx;
}

Eigen::MatrixXd ResponseMatrix::dense() const {
  Eigen::MatrixXd out(n_actors(), n_items());
  for (std::size_t i = 0; i < n_actors(); ++i)
    for (std::size_t j = 0; j < n_items(); ++j) out(i, j) = static_cast<double>(code(i, j));
  return out;
}

std::size_t ResponseMatrix::n_observed() const {
  return static_cast<std::size_t>(std::count_if(codes_.begin(), codes_.end(), [](Code c) { return c != Code::missing; }));
}

// ---------------------------------------------------------------------------
// Operations

namespace {

// Build a matrix from a full table, dropping all-missing rows and columns.
ResponseMatrix compact(const std::vector<Actor>& actors, const std::vector<Item>& items,
                       const std::vector<Code>& codes, std::string provenance, IngestReport* report = nullptr) {
  const std::size_t n = actors.size(), m = items.size();
  std::vector<char> keep_item(m, 0), keep_actor(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (codes[i * m + j] != Code::missing) keep_item[j] = keep_actor[i] = 1;

  std::vector<Actor> out_actors;
  std::vector<Item> out_items;
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < m; ++j)
    if (keep_item[j]) {
      out_items.push_back(items[j]);
      cols.push_back(j);
    }
  std::vector<Code> out_codes;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep_actor[i]) continue;
    out_actors.push_back(actors[i]);
    for (std::size_t j : cols) out_codes.push_back(codes[i * m + j]);
  }
  if (report) {
    report->dropped_actors += n - out_actors.size();
    report->dropped_items += m - out_items.size();
  }
  return ResponseMatrix(std::move(out_actors), std::move(out_items), std::move(out_codes), std::move(provenance));
}

}  // namespace

ResponseMatrix ingest_votes(const std::vector<VoteRecord>& records, const Registry& registry,
                            std::string provenance, IngestReport* report) {
  std::unordered_map<std::string, std::size_t> actor_pos, item_pos;
  for (std::size_t i = 0; i < registry.actors.size(); ++i)
    if (!actor_pos.emplace(registry.actors[i].id, i).second)
      throw DuplicateActor("duplicate actor id " + registry.actors[i].id);
  for (std::size_t j = 0; j < registry.items.size(); ++j) {
    registry.items[j].validate();
    if (!item_pos.emplace(registry.items[j].id, j).second)
      throw InvalidCorpus("duplicate item id " + registry.items[j].id);
  }
  const std::size_t m = registry.items.size();
  std::vector<Code> codes(registry.actors.size() * m, Code::missing);
  for (const auto& r : records) {
    auto a = actor_pos.find(r.actor_id);
    if (a == actor_pos.end()) throw UnknownActor("unknown actor " + r.actor_id);
    auto it = item_pos.find(r.item_id);
    if (it == item_pos.end()) throw UnknownItem("unknown item " + r.item_id);
    const Item& item = registry.items[it->second];
    auto idx = item.find_answer(r.answer);
    if (!idx)
      throw UnrecognizedAnswer("answer '" + r.answer + "' not in the domain of item " + item.id);
    Code c = item.code_for_index(*idx);
    if (c == Code::missing && report) ++report->missing_by_answer[item.answer_domain[*idx]];
    codes[a->second * m + it->second] = c;
  }
  return compact(registry.actors, registry.items, codes, std::move(provenance), report);
}

ResponseMatrix filter_items(const ResponseMatrix& matrix, const FilterOptions& opts) {
  if (!(opts.min_minority_share >= 0.0 && opts.min_minority_share < 0.5))
    throw std::invalid_argument("min_minority_share must be in [0, 0.5)");
  const std::size_t n = matrix.n_actors(), m = matrix.n_items();
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < m; ++j) {
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      Code c = matrix.code(i, j);
      if (c == Code::conservative) ++pos;
      else if (c == Code::liberal) ++neg;
    }
    const std::size_t total = pos + neg;
    if (total == 0 || total < opts.min_responses) continue;
    const double minority = static_cast<double>(std::min(pos, neg)) / static_cast<double>(total);
    if (minority < opts.min_minority_share) continue;
    keep.push_back(j);
  }
  if (keep.empty()) throw EmptyResult("filter_items: no items survive the thresholds");

  std::vector<Item> items;
  for (std::size_t j : keep) items.push_back(matrix.items()[j]);
  std::vector<Code> codes;
  codes.reserve(n * keep.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j : keep) codes.push_back(matrix.code(i, j));
  return compact(matrix.actors(), items, codes, matrix.provenance());
}

ResponseMatrix merge_actors(const ResponseMatrix& base, const ResponseMatrix& extra) {
  for (const Item& it : extra.items())
    if (!base.item_index(it.id))
      throw ItemMismatch("item " + it.id + " of the extra matrix is absent from the base matrix");
  for (const Actor& a : extra.actors())
    if (base.actor_index(a.id)) throw DuplicateActor("actor " + a.id + " present in both matrices");
  if (extra.n_actors() == 0) return base;

  const std::size_t m = base.n_items();
  std::vector<Actor> actors = base.actors();
  actors.insert(actors.end(), extra.actors().begin(), extra.actors().end());
  std::vector<Code> codes = base.codes();
  codes.resize(actors.size() * m, Code::missing);
  std::vector<std::size_t> col_map(extra.n_items());
  for (std::size_t j = 0; j < extra.n_items(); ++j) col_map[j] = *base.item_index(extra.items()[j].id);
  for (std::size_t i = 0; i < extra.n_actors(); ++i)
    for (std::size_t j = 0; j < extra.n_items(); ++j)
      codes[(base.n_actors() + i) * m + col_map[j]] = extra.code(i, j);
  std::string prov = base.provenance();
  if (!extra.provenance().empty()) prov += (prov.empty() ? "" : " + ") + extra.provenance();
  // Base items an extra actor never answered stay missing; compact() only
  // drops fully empty rows or columns, of which there are none here.
  return ResponseMatrix(std::move(actors), base.items(), std::move(codes), std::move(prov));
}

ResponseMatrix subset_by_topic(const ResponseMatrix& matrix, Topic topic) {
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < matrix.n_items(); ++j)
    if (matrix.items()[j].topic == topic) cols.push_back(j);
  if (cols.empty()) throw EmptyResult("no items with topic " + std::string(to_string(topic)));
  std::vector<Item> items;
  for (std::size_t j : cols) items.push_back(matrix.items()[j]);
  std::vector<Code> codes;
  for (std::size_t i = 0; i < matrix.n_actors(); ++i)
    for (std::size_t j : cols) codes.push_back(matrix.code(i, j));
  return compact(matrix.actors(), items, codes, matrix.provenance());
}

ResponseMatrix select_actors(const ResponseMatrix& matrix, const std::vector<std::size_t>& rows) {
  std::vector<Actor> actors;
  std::vector<Code> codes;
  std::set<std::size_t> seen;
  for (std::size_t i : rows) {
    if (i >= matrix.n_actors()) throw std::out_of_range("select_actors: row out of range");
    if (!seen.insert(i).second) throw DuplicateActor("row selected twice: " + matrix.actors()[i].id);
    actors.push_back(matrix.actors()[i]);
    auto r = matrix.row(i);
    codes.insert(codes.end(), r.begin(), r.end());
  }
  if (actors.empty()) throw EmptyResult("select_actors: no rows selected");
  return compact(actors, matrix.items(), codes, matrix.provenance());
}

}  // namespace ideo
