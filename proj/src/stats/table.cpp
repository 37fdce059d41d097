#include <charconv>
#include <cmath>
#include <limits>

#include "ideoscale/csv.hpp"
#include "ideoscale/stats.hpp"

namespace ideo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::optional<double> to_number(const std::string& s) {
  if (s.empty() || s == "NA") return kNaN;
  double v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) return std::nullopt;
  return v;
}

}  // namespace

void DataTable::check_length(std::size_t n, const std::string& name) {
  if (has(name)) throw ConfigError("duplicate column '" + name + "'");
  if (sized_ && n != rows_)
    throw DimensionMismatch("column '" + name + "' has " + std::to_string(n) + " rows, table has " + std::to_string(rows_));
  rows_ = n;
  sized_ = true;
  order_.push_back(name);
}

void DataTable::add_numeric(const std::string& name, std::vector<double> values) {
  check_length(values.size(), name);
  numeric_[name] = std::move(values);
}

void DataTable::add_text(const std::string& name, std::vector<std::string> values) {
  check_length(values.size(), name);
  text_[name] = std::move(values);
}

bool DataTable::has(const std::string& name) const { return numeric_.count(name) || text_.count(name); }

const std::vector<double>& DataTable::numeric(const std::string& name) const {
  auto it = numeric_.find(name);
  if (it == numeric_.end())
    throw UnknownColumn(text_.count(name) ? "column '" + name + "' is not numeric" : "no column '" + name + "'");
  return it->second;
}

const std::vector<std::string>& DataTable::text(const std::string& name) const {
  auto it = text_.find(name);
  if (it == text_.end()) throw UnknownColumn("no text column '" + name + "'");
  return it->second;
}

std::vector<std::string> DataTable::as_keys(const std::string& name) const {
  if (auto it = text_.find(name); it != text_.end()) return it->second;
  std::vector<std::string> out;
  for (double v : numeric(name)) out.push_back(std::isnan(v) ? std::string() : csv::format_double(v));
  return out;
}

DataTable DataTable::filter(const std::vector<bool>& keep) const {
  if (keep.size() != rows_) throw DimensionMismatch("filter mask length differs from row count");
  DataTable out;
  for (const auto& name : order_) {
    if (auto it = numeric_.find(name); it != numeric_.end()) {
      std::vector<double> v;
      for (std::size_t i = 0; i < rows_; ++i)
        if (keep[i]) v.push_back(it->second[i]);
      out.add_numeric(name, std::move(v));
    } else {
      std::vector<std::string> v;
      const auto& src = text_.at(name);
      for (std::size_t i = 0; i < rows_; ++i)
        if (keep[i]) v.push_back(src[i]);
      out.add_text(name, std::move(v));
    }
  }
  if (order_.empty()) out.rows_ = 0;
  return out;
}

DataTable DataTable::from_csv(const std::string& text) {
  const auto t = csv::parse(text, true);
  DataTable out;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    std::vector<double> nums;
    bool numeric = true;
    for (const auto& row : t.rows) {
      auto v = c < row.size() ? to_number(row[c]) : std::optional<double>(kNaN);
      if (!v) {
        numeric = false;
        break;
      }
      nums.push_back(*v);
    }
    if (numeric) {
      out.add_numeric(t.header[c], std::move(nums));
    } else {
      std::vector<std::string> strs;
      for (const auto& row : t.rows) strs.push_back(c < row.size() ? row[c] : std::string());
      out.add_text(t.header[c], std::move(strs));
    }
  }
  return out;
}

DataTable DataTable::from_trials(const std::vector<TrialRecord>& rows) {
  return from_csv(trials_to_csv(rows));
}

}  // namespace ideo
