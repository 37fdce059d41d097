#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ideoscale/corpus.hpp"

// Ingestion adapters for the three upstream data sources. Each produces the
// registry + records pair consumed by ingest_votes(); field mappings are
// documented in docs/ingestion.md.
namespace ideo::adapters {

struct AdapterOutput {
  CorpusFiles files;
  IngestReport report;  // counts of values that mapped to missing or were skipped
  std::map<std::string, std::size_t> skipped;  // reason -> count
};

// Congressional roll calls: a directory tree of per-vote JSON files (any
// file named *.json) with "vote_id", "chamber", "category", "question" and a
// "votes" object keyed by position ("Yea", "Nay", "Present", "Not Voting").
// orientation_csv columns: vote_id,conservative_answer[,text]. Votes absent
// from the orientation file or categorized as procedural are skipped.
// Positions are recoded to Yay/Nay/Abstain; Present and Not Voting become
// Abstain and are counted under skipped["position:<raw>"].
AdapterOutput read_congress_votes(const std::filesystem::path& votes_dir,
                                  const std::filesystem::path& orientation_csv);

// Supreme Court: votes_csv (case_id,justice,vote with vote in
// {majority,dissent}), cases_csv (case_id,text,vocabulary,majority_option,
// conservative_option) and justices_csv (justice,group).
AdapterOutput read_scotus_votes(const std::filesystem::path& votes_csv, const std::filesystem::path& cases_csv,
                                const std::filesystem::path& justices_csv);

// CES extract: responses_csv (respondent_id,question,answer) in long format,
// respondents_csv (respondent_id,group,<demographic columns...>), and a JSON
// orientation file declaring each retained question's topic, text, raw-value
// to answer mapping, conservative answer and missing values.
AdapterOutput read_ces(const std::filesystem::path& responses_csv, const std::filesystem::path& respondents_csv,
                       const std::filesystem::path& orientation_json, const std::string& namespace_prefix = "ces2022");

}  // namespace ideo::adapters
