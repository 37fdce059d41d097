#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "ideoscale/csv.hpp"
#include "ideoscale/stats.hpp"

namespace ideo {

std::string regression_csv(const std::vector<NamedModel>& models) {
  std::ostringstream out;
  csv::write_row(out, {"model", "term", "coef", "se", "t", "p", "se_type", "n_obs"});
  for (const auto& m : models)
    for (const auto& t : m.result.terms)
      csv::write_row(out, {m.label, t.name, csv::format_double(t.coefficient), csv::format_double(t.std_error),
                           csv::format_double(t.t_stat), csv::format_double(t.p_value),
                           std::string(to_string(m.result.se_type)), std::to_string(m.result.n_obs)});
  return out.str();
}

namespace {

std::string stars(double p) {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  return "";
}

std::string thousands(std::size_t n) {
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

std::string num(double v) {
  std::string s = fmt::format("{:.3f}", v);
  if (s == "-0.000") s = "0.000";
  return s;
}

}  // namespace

std::string regression_text_table(const std::vector<NamedModel>& models, const std::string& title,
                                  const std::map<std::string, std::string>& term_labels) {
  std::vector<std::string> terms;
  for (const auto& m : models)
    for (const auto& t : m.result.terms)
      if (t.name != "(Intercept)" && std::find(terms.begin(), terms.end(), t.name) == terms.end())
        terms.push_back(t.name);
  std::vector<std::string> footer_keys;
  for (const auto& m : models)
    for (const auto& [k, v] : m.footer)
      if (std::find(footer_keys.begin(), footer_keys.end(), k) == footer_keys.end()) footer_keys.push_back(k);

  auto label = [&](const std::string& t) {
    auto it = term_labels.find(t);
    return it == term_labels.end() ? t : it->second;
  };
  std::size_t lw = 16;
  for (const auto& t : terms) lw = std::max(lw, label(t).size() + 2);
  for (const auto& k : footer_keys) lw = std::max(lw, k.size() + 2);
  const std::size_t cw = 12;
  const std::string rule(lw + cw * models.size(), '-');

  std::ostringstream out;
  out << title << "\n" << std::string(rule.size(), '=') << "\n";
  out << fmt::format("{:<{}}", "", lw);
  for (const auto& m : models) out << fmt::format("{:>{}}", m.label, cw);
  out << "\n" << rule << "\n";
  for (const auto& t : terms) {
    std::string coef_line = fmt::format("{:<{}}", label(t), lw), se_line = fmt::format("{:<{}}", "", lw);
    for (const auto& m : models) {
      const auto it = std::find_if(m.result.terms.begin(), m.result.terms.end(),
                                   [&](const RegressionTerm& x) { return x.name == t; });
      if (it == m.result.terms.end()) {
        coef_line += std::string(cw, ' ');
        se_line += std::string(cw, ' ');
        continue;
      }
      coef_line += fmt::format("{:>{}}", num(it->coefficient) + stars(it->p_value), cw);
      se_line += fmt::format("{:>{}}", "(" + num(it->std_error) + ")", cw);
    }
    out << coef_line << "\n" << se_line << "\n\n";
  }
  out << rule << "\n";
  for (const auto& k : footer_keys) {
    out << fmt::format("{:<{}}", k, lw);
    for (const auto& m : models) {
      auto it = m.footer.find(k);
      out << fmt::format("{:>{}}", it == m.footer.end() ? "" : it->second, cw);
    }
    out << "\n";
  }
  out << fmt::format("{:<{}}", "Observations", lw);
  for (const auto& m : models) out << fmt::format("{:>{}}", thousands(m.result.n_obs), cw);
  out << "\n" << fmt::format("{:<{}}", "Adjusted R2", lw);
  for (const auto& m : models) out << fmt::format("{:>{}}", num(m.result.adjusted_r_squared), cw);
  out << "\n" << std::string(rule.size(), '=') << "\n";

  std::set<std::string> se_types;
  for (const auto& m : models) se_types.insert(std::string(to_string(m.result.se_type)));
  std::string se_note;
  for (const auto& s : se_types) se_note += (se_note.empty() ? "" : ", ") + s;
  out << "Note: * p<0.1; ** p<0.05; *** p<0.01. Standard errors: " << se_note
      << ". No clustering beyond the stated estimator.\n";
  return out.str();
}

namespace {

const std::string kOutcome = "aligned";
const std::string kKey = "participant_id";

DataTable attentive(const DataTable& t) {
  const auto& a = t.numeric("attention_passed");
  std::vector<bool> keep(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) keep[i] = a[i] == 1.0;
  return t.filter(keep);
}

}  // namespace

std::vector<NamedModel> headline_models(const DataTable& trials, SeType se) {
  const DataTable att = attentive(trials);
  auto footer = [](bool fe, bool attention) {
    return std::map<std::string, std::string>{{"Fixed Effects", fe ? "Yes" : "No"},
                                              {"Attention filter", attention ? "Yes" : "No"}};
  };
  std::vector<NamedModel> out;
  out.push_back({"(1)", fe_ols(trials, kOutcome, "treated", std::nullopt, se), footer(false, false)});
  out.push_back({"(2)", fe_ols(trials, kOutcome, "treated", kKey, se), footer(true, false)});
  out.push_back({"(3)", fe_ols(att, kOutcome, "treated", kKey, se), footer(true, true)});
  out.push_back({"(4)", fe_ols(trials, kOutcome, "n_chat_questions", kKey, se), footer(true, false)});
  out.push_back({"(5)", fe_ols(att, kOutcome, "n_chat_questions", kKey, se), footer(true, true)});
  out.push_back({"(6)", fe_ols(trials, kOutcome, "chat_minutes", kKey, se), footer(true, false)});
  out.push_back({"(7)", fe_ols(att, kOutcome, "chat_minutes", kKey, se), footer(true, true)});
  return out;
}

std::vector<NamedModel> moderator_models(const DataTable& trials, SeType se) {
  const DataTable att = attentive(trials);
  const std::map<std::string, std::string> footer{{"Fixed Effects", "Yes"}, {"Attention filter", "Yes"}};
  std::vector<NamedModel> out;
  int k = 1;
  for (const auto& mods : std::vector<std::vector<std::string>>{
           {"political_interest"}, {"llm_familiarity"}, {"news_source_count"},
           {"political_interest", "llm_familiarity", "news_source_count"}}) {
    out.push_back({"(" + std::to_string(k++) + ")", interaction_fe_ols(att, kOutcome, "treated", mods, kKey, se), footer});
  }
  return out;
}

std::vector<NamedModel> wave_models(const DataTable& trials, SeType se) {
  const auto waves_col = trials.as_keys("wave_label");
  std::vector<std::string> waves(waves_col.begin(), waves_col.end());
  std::sort(waves.begin(), waves.end());
  waves.erase(std::unique(waves.begin(), waves.end()), waves.end());
  std::vector<NamedModel> out;
  int k = 1;
  for (const std::string treatment : {"treated", "n_chat_questions", "chat_minutes"}) {
    for (const auto& w : waves) {
      std::vector<bool> keep(waves_col.size());
      for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = waves_col[i] == w;
      out.push_back({"(" + std::to_string(k++) + ")", fe_ols(trials.filter(keep), kOutcome, treatment, kKey, se),
                     {{"Fixed Effects", "Yes"}, {"Wave", w}}});
    }
  }
  return out;
}

}  // namespace ideo
