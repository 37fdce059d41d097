#include "ideoscale/adapters.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "ideoscale/csv.hpp"
#include "ideoscale/hash.hpp"

namespace ideo::adapters {

using nlohmann::json;

namespace {

std::string slug(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    else if (!out.empty() && out.back() != '_') out.push_back('_');
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

std::string party_name(const std::string& code) {
  if (code == "D") return "Democrat";
  if (code == "R") return "Republican";
  if (code == "I" || code == "ID") return "Independent";
  return code;
}

// Same vocabulary as the representative prompt, so legislator and model rows
// share one answer domain.
const std::vector<std::string> kCongressDomain = {"Yay", "Nay", "Abstain"};

std::string congress_answer(std::string position) {
  if (position == "Yea" || position == "Aye" || position == "Yes" || position == "Guilty") return "Yay";
  if (position == "No" || position == "Not Guilty") return "Nay";
  if (position == "Present" || position == "Not Voting") return "Abstain";
  return position;
}

}  // namespace

AdapterOutput read_congress_votes(const std::filesystem::path& votes_dir,
                                  const std::filesystem::path& orientation_csv) {
  AdapterOutput out;
  struct Orientation {
    std::string conservative;
    std::string text;
  };
  std::map<std::string, Orientation> orientation;
  {
    auto t = csv::read_file(orientation_csv);
    const int id = t.require_column("vote_id"), cons = t.require_column("conservative_answer");
    const int txt = t.column("text");
    for (const auto& r : t.rows) orientation[r[id]] = {r[cons], txt >= 0 ? r[txt] : ""};
  }

  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(votes_dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());

  std::map<std::string, Actor> actors;
  for (const auto& path : files) {
    json j = json::parse(read_file(path));
    const std::string vote_id = j.at("vote_id").get<std::string>();
    const std::string category = j.value("category", "");
    if (category == "procedural" || category == "quorum") {
      ++out.skipped["procedural"];
      continue;
    }
    auto o = orientation.find(vote_id);
    if (o == orientation.end()) {
      ++out.skipped["no_orientation"];
      continue;
    }
    Item item;
    item.id = "congress:" + vote_id;
    item.source = j.value("chamber", "h") == "s" ? ItemSource::senate_bill : ItemSource::house_bill;
    item.text = o->second.text.empty() ? j.value("question", vote_id) : o->second.text;
    item.answer_domain = kCongressDomain;
    auto idx = item.find_answer(congress_answer(o->second.conservative));
    if (!idx || *idx > 1) throw ConfigError("vote " + vote_id + ": conservative_answer must be Yea or Nay");
    item.conservative_answer = *idx;
    out.files.registry.items.push_back(item);

    for (const auto& [position, members] : j.at("votes").items()) {
      // Senate files use "Guilty"/"Not Guilty" for impeachment; "Aye"/"No" in the House.
      const std::string answer = congress_answer(position);
      if (answer == "Abstain") ++out.skipped["position:" + position];
      for (const auto& m : members) {
        if (!m.is_object()) continue;  // e.g. "VP" tie-breaker strings
        Actor a;
        a.id = "congress:" + m.at("id").get<std::string>();
        a.kind = ActorKind::legislator;
        a.display_name = m.value("display_name", a.id);
        a.group = party_name(m.value("party", ""));
        if (m.contains("state")) a.tags["state"] = m.at("state").get<std::string>();
        actors.emplace(a.id, a);
        out.files.records.push_back({a.id, item.id, answer});
      }
    }
  }
  for (auto& [id, a] : actors) out.files.registry.actors.push_back(std::move(a));
  return out;
}

AdapterOutput read_scotus_votes(const std::filesystem::path& votes_csv, const std::filesystem::path& cases_csv,
                                const std::filesystem::path& justices_csv) {
  AdapterOutput out;
  std::map<std::string, std::string> groups;
  {
    auto t = csv::read_file(justices_csv);
    const int name = t.require_column("justice"), group = t.require_column("group");
    for (const auto& r : t.rows) groups[r[name]] = r[group];
  }
  struct Case {
    std::size_t majority;
  };
  std::map<std::string, Case> cases;
  {
    auto t = csv::read_file(cases_csv);
    const int id = t.require_column("case_id"), text = t.require_column("text"),
              vocab = t.require_column("vocabulary"), maj = t.require_column("majority_option"),
              cons = t.require_column("conservative_option");
    for (const auto& r : t.rows) {
      Item item;
      item.id = "scotus:" + r[id];
      item.source = ItemSource::scotus_case;
      item.text = r[text];
      std::string v = r[vocab].empty() ? "Decision A|Decision B" : r[vocab];
      std::size_t bar = v.find('|');
      if (bar == std::string::npos) throw ConfigError("case " + r[id] + ": vocabulary needs two options");
      item.answer_domain = {v.substr(0, bar), v.substr(bar + 1)};
      item.conservative_answer = std::stoul(r[cons]);
      std::size_t majority = std::stoul(r[maj]);
      if (majority > 1 || item.conservative_answer > 1) throw ConfigError("case " + r[id] + ": options are 0 or 1");
      cases[r[id]] = {majority};
      out.files.registry.items.push_back(std::move(item));
    }
  }
  std::set<std::string> seen;
  auto t = csv::read_file(votes_csv);
  const int cid = t.require_column("case_id"), jus = t.require_column("justice"), vote = t.require_column("vote");
  for (const auto& r : t.rows) {
    auto c = cases.find(r[cid]);
    if (c == cases.end()) {
      ++out.skipped["unknown_case"];
      continue;
    }
    const std::string actor_id = "scotus:" + slug(r[jus]);
    if (seen.insert(actor_id).second) {
      Actor a;
      a.id = actor_id;
      a.kind = ActorKind::justice;
      a.display_name = r[jus];
      auto g = groups.find(r[jus]);
      if (g == groups.end()) throw ConfigError("justice " + r[jus] + " missing from justices file");
      a.group = g->second;
      out.files.registry.actors.push_back(std::move(a));
    }
    const Item& item = *std::find_if(out.files.registry.items.begin(), out.files.registry.items.end(),
                                     [&](const Item& it) { return it.id == "scotus:" + r[cid]; });
    std::size_t option;
    if (r[vote] == "majority") option = c->second.majority;
    else if (r[vote] == "dissent") option = 1 - c->second.majority;
    else {
      ++out.report.missing_by_answer[r[vote].empty() ? "<blank>" : r[vote]];
      continue;  // recused / not participating
    }
    out.files.records.push_back({actor_id, item.id, item.answer_domain[option]});
  }
  return out;
}

AdapterOutput read_ces(const std::filesystem::path& responses_csv, const std::filesystem::path& respondents_csv,
                       const std::filesystem::path& orientation_json, const std::string& namespace_prefix) {
  AdapterOutput out;
  struct Question {
    std::map<std::string, std::string> answers;  // raw value -> answer label
    std::set<std::string> missing;
    std::string item_id;
  };
  std::map<std::string, Question> questions;
  json cfg = json::parse(read_file(orientation_json));
  for (const auto& q : cfg.at("questions")) {
    Item item;
    const std::string column = q.at("column").get<std::string>();
    item.id = namespace_prefix + ":" + column;
    item.source = ItemSource::survey_question;
    item.topic = parse_topic(q.at("topic").get<std::string>());
    item.text = q.at("text").get<std::string>();
    Question rec;
    rec.item_id = item.id;
    std::vector<std::string> labels;
    for (const auto& [raw, label] : q.at("answers").items()) {
      rec.answers[raw] = label.get<std::string>();
      if (std::find(labels.begin(), labels.end(), label.get<std::string>()) == labels.end())
        labels.push_back(label.get<std::string>());
    }
    if (labels.size() != 2)
      throw ConfigError("question " + column + ": answers must reduce to exactly two labels");
    // Keep a stable order: the liberal/conservative pair as declared.
    const std::string conservative = q.at("conservative").get<std::string>();
    if (conservative != labels[0] && conservative != labels[1])
      throw ConfigError("question " + column + ": conservative label not among answers");
    item.answer_domain = labels;
    item.conservative_answer = conservative == labels[0] ? 0 : 1;
    for (const auto& m : q.value("missing", json::array())) rec.missing.insert(m.get<std::string>());
    questions[column] = std::move(rec);
    out.files.registry.items.push_back(std::move(item));
  }

  {
    auto t = csv::read_file(respondents_csv);
    const int id = t.require_column("respondent_id"), group = t.require_column("group");
    for (const auto& r : t.rows) {
      Actor a;
      a.id = namespace_prefix + ":" + r[id];
      a.kind = ActorKind::respondent;
      a.display_name = r[id];
      if (!r[group].empty()) a.group = r[group];
      for (std::size_t c = 0; c < t.header.size(); ++c)
        if (static_cast<int>(c) != id && static_cast<int>(c) != group && !r[c].empty()) a.tags[t.header[c]] = r[c];
      out.files.registry.actors.push_back(std::move(a));
    }
  }

  auto t = csv::read_file(responses_csv);
  const int rid = t.require_column("respondent_id"), qcol = t.require_column("question"),
            ans = t.require_column("answer");
  for (const auto& r : t.rows) {
    auto q = questions.find(r[qcol]);
    if (q == questions.end()) {
      ++out.skipped["undeclared_question"];
      continue;
    }
    if (q->second.missing.count(r[ans]) || r[ans].empty()) {
      ++out.report.missing_by_answer[r[ans].empty() ? "<blank>" : r[ans]];
      continue;
    }
    auto label = q->second.answers.find(r[ans]);
    if (label == q->second.answers.end())
      throw UnrecognizedAnswer("CES value '" + r[ans] + "' for " + r[qcol] + " is neither mapped nor declared missing");
    out.files.records.push_back({namespace_prefix + ":" + r[rid], q->second.item_id, label->second});
  }
  return out;
}

}  // namespace ideo::adapters
