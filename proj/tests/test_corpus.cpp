#include <doctest.h>

#include <random>

#include "ideoscale/adapters.hpp"
#include "ideoscale/corpus.hpp"
#include "ideoscale/synthetic.hpp"
#include "support.hpp"

using namespace ideo;
using testing::binary_item;
using testing::matrix_from;

namespace {

Registry small_registry() {
  Registry reg;
  for (const char* id : {"rep1", "rep2", "rep3"}) {
    Actor a;
    a.id = id;
    a.kind = ActorKind::legislator;
    a.display_name = id;
    a.group = "Democrat";
    reg.actors.push_back(a);
  }
  reg.items.push_back(binary_item("hr1"));
  reg.items.push_back(binary_item("hr2", ItemSource::house_bill, {"Yay", "Nay", "Abstain"}, 1));
  return reg;
}

std::vector<Code> codes_of(const ResponseMatrix& m) { return m.codes(); }

}  // namespace

TEST_CASE("recoding follows the item's conservative answer") {
  const Registry reg = small_registry();
  SUBCASE("conservative answer codes +1") {
    const auto m = ingest_votes({{"rep1", "hr1", "Yay"}, {"rep2", "hr1", "Nay"}}, reg);
    CHECK(m.code(*m.actor_index("rep1"), *m.item_index("hr1")) == Code::conservative);
    CHECK(m.code(*m.actor_index("rep2"), *m.item_index("hr1")) == Code::liberal);
  }
  SUBCASE("abstain is missing and counted") {
    IngestReport report;
    const auto m = ingest_votes({{"rep1", "hr1", "Abstain"}, {"rep1", "hr2", "Nay"}, {"rep2", "hr1", "yay"}}, reg, "", &report);
    CHECK(m.code(*m.actor_index("rep1"), *m.item_index("hr1")) == Code::missing);
    CHECK(report.missing_by_answer.at("Abstain") == 1);
  }
  SUBCASE("answers outside the domain are rejected") {
    CHECK_THROWS_AS(ingest_votes({{"rep1", "hr1", "Maybe"}}, reg), UnrecognizedAnswer);
    CHECK_THROWS_AS(ingest_votes({{"nobody", "hr1", "Yay"}}, reg), UnknownActor);
    CHECK_THROWS_AS(ingest_votes({{"rep1", "hr9", "Yay"}}, reg), UnknownItem);
  }
  SUBCASE("second entry is the liberal alternative when the first is conservative") {
    const auto m = ingest_votes({{"rep1", "hr2", "Yay"}, {"rep2", "hr2", "Nay"}}, reg);
    CHECK(m.code(*m.actor_index("rep1"), *m.item_index("hr2")) == Code::liberal);
    CHECK(m.code(*m.actor_index("rep2"), *m.item_index("hr2")) == Code::conservative);
  }
}

TEST_CASE("flipping an item's orientation negates exactly that item") {
  std::mt19937_64 rng(7);
  Registry reg;
  for (int i = 0; i < 12; ++i) {
    Actor a;
    a.id = "x" + std::to_string(i);
    reg.actors.push_back(a);
  }
  for (int j = 0; j < 6; ++j) reg.items.push_back(binary_item("q" + std::to_string(j)));
  std::vector<VoteRecord> records;
  const char* answers[] = {"Yay", "Nay", "Abstain"};
  for (const auto& a : reg.actors)
    for (const auto& it : reg.items) records.push_back({a.id, it.id, answers[rng() % 3]});
  records.push_back({"x0", "q0", "Yay"});
  records.push_back({"x1", "q0", "Nay"});

  const auto before = ingest_votes(records, reg);
  Registry flipped = reg;
  flipped.items[3].conservative_answer = 1;
  const auto after = ingest_votes(records, flipped);
  REQUIRE(before.n_items() == after.n_items());
  for (std::size_t i = 0; i < before.n_actors(); ++i)
    for (std::size_t j = 0; j < before.n_items(); ++j) {
      const auto b = static_cast<int>(before.code(i, j));
      const auto a = static_cast<int>(after.code(i, j));
      if (before.items()[j].id == "q3") CHECK(a == -b);
      else CHECK(a == b);
    }
}

TEST_CASE("filter_items thresholds") {
  SUBCASE("unanimous item dropped, 60/40 item kept") {
    std::vector<std::vector<int>> rows;
    for (int i = 0; i < 10; ++i) rows.push_back({1, i < 6 ? 1 : -1});
    const auto m = matrix_from(rows);
    const auto f = filter_items(m, {0.025, 1});
    REQUIRE(f.n_items() == 1);
    CHECK(f.items()[0].id == "i1");
  }
  SUBCASE("an actor left without responses is dropped") {
    // 4 actors x 3 items; item 0 is unanimous and a3 only answered item 0.
    const auto m = matrix_from({{1, 1, -1}, {1, -1, 1}, {1, 1, 1}, {1, 0, 0}});
    const auto f = filter_items(m, {0.025, 1});
    CHECK(f.n_items() == 2);
    REQUIRE(f.n_actors() == 3);
    CHECK_FALSE(f.actor_index("a3").has_value());
    const std::vector<Code> expected = {Code::conservative, Code::liberal, Code::liberal, Code::conservative,
                                        Code::conservative, Code::conservative};
    CHECK(f.codes() == expected);
  }
  SUBCASE("min_responses") {
    const auto m = matrix_from({{1, 1}, {-1, 0}, {1, -1}});
    CHECK(filter_items(m, {0.0, 3}).n_items() == 1);
  }
  SUBCASE("nothing survives") {
    const auto m = matrix_from({{1, 1}, {1, 1}});
    CHECK_THROWS_AS(filter_items(m, {0.1, 1}), EmptyResult);
  }
}

TEST_CASE("filter_items is idempotent") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto m = synthetic::spatial(30, 40, 2, 6.0, {1.0, 0.5}, seed).matrix;
    const FilterOptions opts{0.1, 5};
    const auto once = filter_items(m, opts);
    const auto twice = filter_items(once, opts);
    CHECK(once.codes() == twice.codes());
    CHECK(once.n_actors() == twice.n_actors());
    CHECK(once.n_items() == twice.n_items());
  }
}

TEST_CASE("merge_actors") {
  const auto base = matrix_from({{1, -1, 1}, {-1, 1, -1}});
  SUBCASE("empty extra leaves base unchanged") {
    const ResponseMatrix empty({}, {}, {}, "");
    const auto merged = merge_actors(base, empty);
    CHECK(merged.codes() == base.codes());
    CHECK(merged.n_actors() == 2);
  }
  SUBCASE("item absent from base") {
    Actor a;
    a.id = "llm:x";
    a.kind = ActorKind::llm;
    a.group = "model";
    const ResponseMatrix extra({a}, {binary_item("zz")}, {Code::liberal}, "x");
    CHECK_THROWS_AS(merge_actors(base, extra), ItemMismatch);
  }
  SUBCASE("duplicate actor") {
    CHECK_THROWS_AS(merge_actors(base, base), DuplicateActor);
  }
  SUBCASE("associative over disjoint actor sets") {
    auto make = [&](const std::string& id, std::vector<int> row, std::vector<std::size_t> cols) {
      Actor a;
      a.id = id;
      a.kind = ActorKind::llm;
      std::vector<Item> items;
      std::vector<Code> codes;
      for (std::size_t k = 0; k < cols.size(); ++k) {
        items.push_back(base.items()[cols[k]]);
        codes.push_back(static_cast<Code>(row[k]));
      }
      return ResponseMatrix({a}, items, codes, id);
    };
    const auto b = make("llm:b", {1, -1, 1}, {2, 0, 1});
    const auto c = make("llm:c", {-1}, {1});
    const auto left = merge_actors(merge_actors(base, b), c);
    const auto right = merge_actors(base, merge_actors(b, c));
    CHECK(left.codes() == right.codes());
    CHECK(left.n_actors() == 4);
    CHECK(left.code(2, 0) == Code::liberal);
    CHECK(left.code(2, 2) == Code::conservative);
    CHECK(left.code(3, 0) == Code::missing);
    CHECK(left.code(3, 1) == Code::liberal);
  }
}

TEST_CASE("subset_by_topic") {
  const auto m = synthetic::survey(50, 16, 3).matrix;
  const auto abortion = subset_by_topic(m, Topic::abortion);
  CHECK(abortion.n_items() == 2);
  for (const auto& it : abortion.items()) CHECK(it.topic == Topic::abortion);
  CHECK_THROWS_AS(subset_by_topic(abortion, Topic::taxes), EmptyResult);
  const auto again = subset_by_topic(abortion, Topic::abortion);
  CHECK(again.codes() == abortion.codes());
  CHECK(again.n_actors() == abortion.n_actors());
}

TEST_CASE("on-disk round trip reproduces codes, groups and tags") {
  testing::TempDir dir;
  const auto m = synthetic::survey(40, 16, 11).matrix;
  write_corpus(m, dir.path(), "config_hash=abc");
  const auto back = read_corpus(dir.path());
  CHECK(back.codes() == m.codes());
  REQUIRE(back.n_actors() == m.n_actors());
  for (std::size_t i = 0; i < m.n_actors(); ++i) {
    CHECK(back.actors()[i].id == m.actors()[i].id);
    CHECK(back.actors()[i].group == m.actors()[i].group);
    CHECK(back.actors()[i].tags == m.actors()[i].tags);
  }
  for (std::size_t j = 0; j < m.n_items(); ++j) {
    CHECK(back.items()[j].topic == m.items()[j].topic);
    CHECK(back.items()[j].conservative_answer == m.items()[j].conservative_answer);
  }
}

TEST_CASE("congress adapter") {
  const auto out = adapters::read_congress_votes(testing::fixture("congress/votes"),
                                                 testing::fixture("congress/orientation.csv"));
  CHECK(out.skipped.at("procedural") == 1);
  CHECK(out.skipped.at("no_orientation") == 1);
  CHECK(out.skipped.at("position:Not Voting") == 1);
  CHECK(out.skipped.at("position:Present") == 1);
  const auto m = ingest_votes(out.files.records, out.files.registry, "congress fixture");
  CHECK(m.n_items() == 3);
  CHECK(m.n_actors() == 6);
  for (const auto& it : m.items()) CHECK(it.answer_domain == std::vector<std::string>{"Yay", "Nay", "Abstain"});
  const auto dunn = *m.actor_index("congress:D000004");
  const auto chen = *m.actor_index("congress:C000003");
  // h101: conservative answer Nay; Dunn voted Nay.
  CHECK(m.code(dunn, *m.item_index("congress:h101-2023")) == Code::conservative);
  CHECK(m.code(chen, *m.item_index("congress:h101-2023")) == Code::liberal);
  // h102 uses Aye/No; Chen did not vote.
  CHECK(m.code(dunn, *m.item_index("congress:h102-2023")) == Code::conservative);
  CHECK(m.code(chen, *m.item_index("congress:h102-2023")) == Code::missing);
  CHECK(m.actors()[dunn].group == "Republican");
  CHECK(m.actors()[dunn].tags.at("state") == "TX");
}

TEST_CASE("scotus adapter") {
  const auto out = adapters::read_scotus_votes(testing::fixture("scotus/votes.csv"), testing::fixture("scotus/cases.csv"),
                                               testing::fixture("scotus/justices.csv"));
  CHECK(out.skipped.at("unknown_case") == 1);
  CHECK(out.report.missing_by_answer.at("recused") == 1);
  const auto m = ingest_votes(out.files.records, out.files.registry, "scotus fixture");
  CHECK(m.n_actors() == 5);
  CHECK(m.n_items() == 3);
  const auto avery = *m.actor_index("scotus:justice_avery");
  const auto cole = *m.actor_index("scotus:justice_cole");
  CHECK(m.code(cole, *m.item_index("scotus:21-101")) == Code::conservative);
  CHECK(m.code(avery, *m.item_index("scotus:21-101")) == Code::liberal);
  // 21-102: majority option 1 is conservative; Avery joined the majority.
  CHECK(m.code(avery, *m.item_index("scotus:21-102")) == Code::conservative);
  CHECK(m.items()[*m.item_index("scotus:21-103")].answer_domain ==
        std::vector<std::string>{"Decision A", "Decision B"});
}

TEST_CASE("ces adapter") {
  const auto out = adapters::read_ces(testing::fixture("ces/responses.csv"), testing::fixture("ces/respondents.csv"),
                                      testing::fixture("ces/orientation.json"));
  CHECK(out.skipped.at("undeclared_question") == 1);
  CHECK(out.report.missing_by_answer.at("9") == 1);
  CHECK(out.report.missing_by_answer.at("<blank>") == 1);
  const auto m = ingest_votes(out.files.records, out.files.registry, "ces fixture");
  CHECK(m.n_actors() == 4);
  const auto r1 = *m.actor_index("ces2022:1001");
  const auto r4 = *m.actor_index("ces2022:1004");
  CHECK(m.code(r1, *m.item_index("ces2022:CC22_330a")) == Code::liberal);
  CHECK(m.code(r4, *m.item_index("ces2022:CC22_330a")) == Code::conservative);
  CHECK(m.code(r4, *m.item_index("ces2022:CC22_331a")) == Code::conservative);
  CHECK(m.items()[*m.item_index("ces2022:CC22_332a")].topic == Topic::abortion);
  CHECK(m.actors()[r1].tags.at("gender") == "Woman");
}

TEST_CASE("matrix invariants") {
  const auto m = synthetic::spatial(20, 30, 2, 8.0, {1.0, 0.5}, 5).matrix;
  CHECK(m.codes().size() == m.n_actors() * m.n_items());
  for (std::size_t i = 0; i < m.n_actors(); ++i) {
    bool any = false;
    for (Code c : m.row(i)) any |= c != Code::missing;
    CHECK(any);
  }
  CHECK_THROWS_AS(ResponseMatrix(m.actors(), m.items(), {}, "bad"), InvalidCorpus);
}
