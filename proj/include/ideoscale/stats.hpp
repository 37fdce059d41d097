#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ideoscale/error.hpp"
#include "ideoscale/experiment.hpp"

namespace ideo {

IDEO_DEFINE_ERROR(NoWithinVariation);
IDEO_DEFINE_ERROR(CollinearModerators);
IDEO_DEFINE_ERROR(UnknownColumn);

// Column store for regression inputs. Numeric columns use NaN for missing.
class DataTable {
 public:
  void add_numeric(const std::string& name, std::vector<double> values);
  void add_text(const std::string& name, std::vector<std::string> values);

  std::size_t rows() const { return rows_; }
  bool has(const std::string& name) const;
  bool is_numeric(const std::string& name) const { return numeric_.count(name) > 0; }
  const std::vector<double>& numeric(const std::string& name) const;  // throws UnknownColumn
  const std::vector<std::string>& text(const std::string& name) const;
  // Any column rendered as strings (numeric values via shortest round-trip).
  std::vector<std::string> as_keys(const std::string& name) const;
  std::vector<std::string> column_names() const { return order_; }

  DataTable filter(const std::vector<bool>& keep) const;

  // Columns whose non-empty cells all parse as numbers become numeric.
  static DataTable from_csv(const std::string& text);
  static DataTable from_trials(const std::vector<TrialRecord>& rows);

 private:
  void check_length(std::size_t n, const std::string& name);
  std::size_t rows_ = 0;
  bool sized_ = false;
  std::vector<std::string> order_;
  std::map<std::string, std::vector<double>> numeric_;
  std::map<std::string, std::vector<std::string>> text_;
};

enum class SeType { classical, hc1_robust };
std::string_view to_string(SeType s);

struct RegressionTerm {
  std::string name;
  double coefficient = 0.0;
  double std_error = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
};

struct RegressionResult {
  std::vector<RegressionTerm> terms;
  std::size_t n_obs = 0;
  std::size_t n_dropped_missing = 0;    // listwise deletion
  std::size_t n_dropped_singleton = 0;  // fixed-effect groups of size one
  std::size_t n_groups = 0;
  std::optional<std::string> fixed_effect_key;
  double r_squared = 0.0;
  double adjusted_r_squared = 0.0;
  double within_r_squared = 0.0;  // fixed-effect models only
  double df_resid = 0.0;
  SeType se_type = SeType::hc1_robust;

  const RegressionTerm& term(std::string_view name) const;  // throws UnknownColumn
};

// OLS of outcome on treatment (plus optional controls) absorbing
// fixed_effect_key by within-group demeaning. Without a key an intercept is
// estimated instead. Residual degrees of freedom are n - k - G.
RegressionResult fe_ols(const DataTable& table, const std::string& outcome, const std::string& treatment,
                        const std::optional<std::string>& fixed_effect_key, SeType se_type = SeType::hc1_robust,
                        const std::vector<std::string>& controls = {});

// Adds treatment x moderator interactions. Moderator main effects are
// reported only without a fixed-effect key (they are absorbed otherwise).
RegressionResult interaction_fe_ols(const DataTable& table, const std::string& outcome, const std::string& treatment,
                                    const std::vector<std::string>& moderators,
                                    const std::optional<std::string>& fixed_effect_key,
                                    SeType se_type = SeType::hc1_robust);

// ---------------------------------------------------------------------------
// Reporting

struct NamedModel {
  std::string label;
  RegressionResult result;
  std::map<std::string, std::string> footer;  // e.g. "Fixed Effects" -> "Yes"
};

// model,term,coef,se,t,p,se_type,n_obs
std::string regression_csv(const std::vector<NamedModel>& models);
// Side-by-side table: coefficient rows with significance stars, standard
// errors in parentheses, footer rows, observations.
std::string regression_text_table(const std::vector<NamedModel>& models, const std::string& title,
                                  const std::map<std::string, std::string>& term_labels = {});

// The seven headline specifications over an exported trial table: binary,
// count and minutes treatments, with and without fixed effects and the
// attention filter.
std::vector<NamedModel> headline_models(const DataTable& trials, SeType se_type = SeType::hc1_robust);
// Single and joint moderator interactions (interest, news, familiarity).
std::vector<NamedModel> moderator_models(const DataTable& trials, SeType se_type = SeType::hc1_robust);
// Binary-treatment FE model per wave label.
std::vector<NamedModel> wave_models(const DataTable& trials, SeType se_type = SeType::hc1_robust);

}  // namespace ideo
