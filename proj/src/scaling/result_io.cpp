#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ideoscale/csv.hpp"
#include "ideoscale/hash.hpp"
#include "ideoscale/scaling.hpp"

namespace ideo {

using nlohmann::json;

namespace {

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd json_vec(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

}  // namespace

// Column order is fixed: actor_id, dim1, dim2, sd1. dim2 is blank for
// one-dimensional results, sd1 is blank unless the method is IRT.
void write_scaling(const ScalingResult& result, const std::filesystem::path& csv_path,
                   const std::filesystem::path& sidecar_path, std::string_view header_comment) {
  std::ostringstream out;
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  csv::write_row(out, {"actor_id", "dim1", "dim2", "sd1"});
  for (std::size_t i = 0; i < result.actor_ids.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    csv::write_row(out, {result.actor_ids[i], csv::format_double(result.coordinates(r, 0)),
                         result.dims() > 1 ? csv::format_double(result.coordinates(r, 1)) : "",
                         result.coordinate_sd ? csv::format_double((*result.coordinate_sd)[r]) : ""});
  }
  write_file_atomic(csv_path, out.str());

  json side;
  if (!header_comment.empty()) side["header"] = std::string(header_comment);
  side["method"] = std::string(to_string(result.method));
  side["dims"] = std::min<std::size_t>(result.dims(), 2);  // CSV carries at most two dimensions
  side["converged"] = result.converged;
  side["iterations"] = result.iterations;
  side["warnings"] = result.warnings;
  json fit;
  fit["correct_classification"] = result.fit.correct_classification;
  fit["aggregate_proportional_reduction_in_error"] = result.fit.aggregate_proportional_reduction_in_error;
  if (result.fit.explained_variance_ratio) fit["explained_variance_ratio"] = *result.fit.explained_variance_ratio;
  if (result.fit.log_likelihood) fit["log_likelihood"] = *result.fit.log_likelihood;
  side["fit"] = fit;
  json items = json::array();
  for (std::size_t j = 0; j < result.item_ids.size(); ++j) {
    json it;
    it["id"] = result.item_ids[j];
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, NominateItem>) {
            it["midpoint"] = vec_json(p.midpoint);
            it["normal"] = vec_json(p.normal);
          } else if constexpr (std::is_same_v<T, IrtItem>) {
            it["discrimination"] = p.discrimination;
            it["difficulty"] = p.difficulty;
            it["discrimination_sd"] = p.discrimination_sd;
            it["difficulty_sd"] = p.difficulty_sd;
          } else {
            it["loading"] = vec_json(p.loading);
            it["mean"] = p.mean;
          }
        },
        result.item_params[j]);
    items.push_back(it);
  }
  side["items"] = items;
  write_file_atomic(sidecar_path, side.dump(2) + "\n");
}

ScalingResult read_scaling(const std::filesystem::path& csv_path, const std::filesystem::path& sidecar_path) {
  json side = json::parse(read_file(sidecar_path));
  ScalingResult res;
  res.method = parse_scaling_method(side.at("method").get<std::string>());
  const auto dims = side.at("dims").get<Eigen::Index>();
  res.converged = side.value("converged", true);
  res.iterations = side.value("iterations", 0);
  res.warnings = side.value("warnings", std::vector<std::string>{});
  const json& fit = side.at("fit");
  res.fit.correct_classification = fit.at("correct_classification").get<double>();
  res.fit.aggregate_proportional_reduction_in_error = fit.at("aggregate_proportional_reduction_in_error").get<double>();
  if (fit.contains("explained_variance_ratio"))
    res.fit.explained_variance_ratio = fit["explained_variance_ratio"].get<std::vector<double>>();
  if (fit.contains("log_likelihood")) res.fit.log_likelihood = fit["log_likelihood"].get<double>();
  for (const auto& it : side.at("items")) {
    res.item_ids.push_back(it.at("id").get<std::string>());
    switch (res.method) {
      case ScalingMethod::nominate:
        res.item_params.emplace_back(NominateItem{json_vec(it.at("midpoint")), json_vec(it.at("normal"))});
        break;
      case ScalingMethod::irt:
        res.item_params.emplace_back(IrtItem{it.at("discrimination").get<double>(), it.at("difficulty").get<double>(),
                                             it.at("discrimination_sd").get<double>(),
                                             it.at("difficulty_sd").get<double>()});
        break;
      case ScalingMethod::pca:
        res.item_params.emplace_back(PcaItem{json_vec(it.at("loading")), it.at("mean").get<double>()});
        break;
    }
  }

  auto t = csv::read_file(csv_path);
  res.coordinates.resize(static_cast<Eigen::Index>(t.rows.size()), dims);
  if (res.method == ScalingMethod::irt) res.coordinate_sd = Eigen::VectorXd(static_cast<Eigen::Index>(t.rows.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const auto row = static_cast<Eigen::Index>(i);
    res.actor_ids.push_back(r[0]);
    res.coordinates(row, 0) = std::stod(r[1]);
    if (dims > 1) res.coordinates(row, 1) = std::stod(r[2]);
    if (res.coordinate_sd) (*res.coordinate_sd)[row] = std::stod(r[3]);
  }
  return res;
}

}  // namespace ideo
