#include <set>
#include <sstream>

#include "ideoscale/corpus.hpp"
#include "ideoscale/csv.hpp"
#include "ideoscale/hash.hpp"

namespace ideo {

namespace {

std::vector<std::string> split_pipe(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == '|') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string join_pipe(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i].find('|') != std::string::npos) throw InvalidCorpus("answer '" + v[i] + "' contains '|'");
    if (i) out.push_back('|');
    out += v[i];
  }
  return out;
}

const std::vector<std::string> kActorColumns = {"id", "kind", "display_name", "group"};

}  // namespace

CorpusFiles read_corpus_files(const std::filesystem::path& dir) {
  CorpusFiles out;
  {
    auto t = csv::read_file(dir / "actors.csv");
    for (std::size_t c = 0; c < kActorColumns.size(); ++c)
      if (c >= t.header.size() || t.header[c] != kActorColumns[c])
        throw ParseError("actors.csv: expected leading columns id,kind,display_name,group");
    for (const auto& r : t.rows) {
      Actor a;
      a.id = r[0];
      a.kind = parse_actor_kind(r[1]);
      a.display_name = r[2];
      if (!r[3].empty()) a.group = r[3];
      for (std::size_t c = kActorColumns.size(); c < t.header.size(); ++c)
        if (!r[c].empty()) a.tags[t.header[c]] = r[c];
      out.registry.actors.push_back(std::move(a));
    }
  }
  {
    auto t = csv::read_file(dir / "items.csv");
    const int id = t.require_column("id"), src = t.require_column("source"), top = t.require_column("topic"),
              cons = t.require_column("conservative_answer"), dom = t.require_column("answer_domain"),
              txt = t.require_column("text");
    for (const auto& r : t.rows) {
      Item it;
      it.id = r[id];
      it.source = parse_item_source(r[src]);
      if (!r[top].empty()) it.topic = parse_topic(r[top]);
      it.text = r[txt];
      it.answer_domain = split_pipe(r[dom]);
      // Accept either the answer string or its index.
      if (auto idx = it.find_answer(r[cons])) {
        it.conservative_answer = *idx;
      } else {
        try {
          it.conservative_answer = std::stoul(r[cons]);
        } catch (const std::exception&) {
          throw ParseError("items.csv: conservative_answer '" + r[cons] + "' not in domain of " + it.id);
        }
      }
      out.registry.items.push_back(std::move(it));
    }
  }
  {
    auto t = csv::read_file(dir / "responses.csv");
    const int a = t.require_column("actor_id"), i = t.require_column("item_id"), ans = t.require_column("answer");
    out.records.reserve(t.rows.size());
    for (auto& r : t.rows) out.records.push_back({std::move(r[a]), std::move(r[i]), std::move(r[ans])});
  }
  return out;
}

ResponseMatrix read_corpus(const std::filesystem::path& dir, IngestReport* report) {
  auto files = read_corpus_files(dir);
  return ingest_votes(files.records, files.registry, dir.filename().string(), report);
}

void write_corpus(const ResponseMatrix& matrix, const std::filesystem::path& dir, std::string_view header_comment) {
  std::string prefix;
  if (!header_comment.empty()) prefix = "# " + std::string(header_comment) + "\n";

  std::set<std::string> tag_keys;
  for (const auto& a : matrix.actors())
    for (const auto& [k, v] : a.tags) tag_keys.insert(k);

  std::ostringstream actors;
  actors << prefix;
  csv::Row header = kActorColumns;
  header.insert(header.end(), tag_keys.begin(), tag_keys.end());
  csv::write_row(actors, header);
  for (const auto& a : matrix.actors()) {
    csv::Row r = {a.id, std::string(to_string(a.kind)), a.display_name, a.group.value_or("")};
    for (const auto& k : tag_keys) {
      auto it = a.tags.find(k);
      r.push_back(it == a.tags.end() ? "" : it->second);
    }
    csv::write_row(actors, r);
  }

  std::ostringstream items;
  items << prefix;
  csv::write_row(items, {"id", "source", "topic", "conservative_answer", "answer_domain", "text"});
  for (const auto& it : matrix.items())
    csv::write_row(items, {it.id, std::string(to_string(it.source)),
                           it.topic ? std::string(to_string(*it.topic)) : "", it.conservative_text(),
                           join_pipe(it.answer_domain), it.text});

  std::ostringstream responses;
  responses << prefix;
  csv::write_row(responses, {"actor_id", "item_id", "answer"});
  for (std::size_t i = 0; i < matrix.n_actors(); ++i)
    for (std::size_t j = 0; j < matrix.n_items(); ++j) {
      Code c = matrix.code(i, j);
      if (c == Code::missing) continue;
      const Item& it = matrix.items()[j];
      csv::write_row(responses, {matrix.actors()[i].id, it.id,
                                 c == Code::conservative ? it.conservative_text() : it.liberal_text()});
    }

  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "actors.csv", actors.str());
  write_file_atomic(dir / "items.csv", items.str());
  write_file_atomic(dir / "responses.csv", responses.str());
}

}  // namespace ideo
