#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ideoscale/hash.hpp"
#include "ideoscale/pipeline.hpp"

namespace ideo {

namespace {

using nlohmann::json;
using csv::format_double;

const ResponseMatrix& primary(const FigureInputs& in, std::string_view id) {
  if (in.corpora.empty() || !in.corpora.front().second)
    throw MissingUpstream(std::string(id) + " needs a response matrix");
  return *in.corpora.front().second;
}

const ScalingResult& need(const ScalingResult* r, std::string_view id, std::string_view what) {
  if (!r) throw MissingUpstream(std::string(id) + " needs a " + std::string(what) + " scaling result");
  return *r;
}

const Actor* find_actor(const ResponseMatrix& m, const std::string& id) {
  const auto i = m.actor_index(id);
  return i ? &m.actors()[*i] : nullptr;
}

std::string kind_of(const ResponseMatrix& m, const std::string& id) {
  const Actor* a = find_actor(m, id);
  return a ? std::string(to_string(a->kind)) : "";
}

std::string group_of(const ResponseMatrix& m, const std::string& id) {
  const Actor* a = find_actor(m, id);
  return a && a->group ? *a->group : "";
}

json base_spec(std::string_view id, const std::string& title) {
  return json{{"$schema", "https://vega.github.io/schema/vega-lite/v5.json"},
              {"title", title},
              {"data", {{"url", std::string(id) + ".csv"}, {"format", {{"type", "csv"}}}}},
              {"usermeta", {{"figure", std::string(id)}}}};
}

json field(const std::string& name, const std::string& type, const std::string& title = {}) {
  json f{{"field", name}, {"type", type}};
  if (!title.empty()) f["title"] = title;
  return f;
}

FigureData scatter_map(const FigureInputs& in, std::string_view id, const std::string& title) {
  const auto& m = primary(in, id);
  const auto& r = need(in.nominate, id, "nominate");
  FigureData fd;
  fd.header = {"actor_id", "kind", "group", "dim1"};
  if (r.dims() >= 2) fd.header.push_back("dim2");
  for (std::size_t i = 0; i < r.actor_ids.size(); ++i) {
    const auto& aid = r.actor_ids[i];
    csv::Row row{aid, kind_of(m, aid), group_of(m, aid), format_double(r.coordinates(static_cast<Eigen::Index>(i), 0))};
    if (r.dims() >= 2) row.push_back(format_double(r.coordinates(static_cast<Eigen::Index>(i), 1)));
    fd.rows.push_back(std::move(row));
  }
  json spec = base_spec(id, title);
  spec["mark"] = {{"type", "point"}, {"filled", true}};
  spec["encoding"] = {{"x", field("dim1", "quantitative", "First dimension")},
                      {"color", field("group", "nominal")},
                      {"shape", field("kind", "nominal")},
                      {"tooltip", json::array({field("actor_id", "nominal")})}};
  if (r.dims() >= 2) spec["encoding"]["y"] = field("dim2", "quantitative", "Second dimension");
  fd.plot_spec = spec.dump(2);
  return fd;
}

FigureData alignment_figure(const FigureInputs& in, std::string_view id) {
  const auto& m = primary(in, id);
  FigureData fd;
  fd.header = {"actor_id", "dem_alignment", "rep_alignment", "kind"};
  for (const auto& a : m.actors()) {
    try {
      const auto p = party_alignment(m, a.id, in.group_a, in.group_b);
      fd.rows.push_back({a.id, format_double(p.dem_alignment), format_double(p.rep_alignment),
                         std::string(to_string(a.kind))});
    } catch (const Error&) {
      // Actors sharing no items with either group have no alignment.
    }
  }
  if (fd.rows.empty()) throw MissingUpstream(std::string(id) + ": no actor overlaps both groups");
  json spec = base_spec(id, "Alignment with each party");
  spec["mark"] = {{"type", "point"}, {"filled", true}};
  spec["encoding"] = {{"x", field("dem_alignment", "quantitative", "Alignment with " + in.group_a)},
                      {"y", field("rep_alignment", "quantitative", "Alignment with " + in.group_b)},
                      {"color", field("kind", "nominal")},
                      {"tooltip", json::array({field("actor_id", "nominal")})}};
  fd.plot_spec = spec.dump(2);
  return fd;
}

FigureData group_means_figure(const FigureInputs& in, std::string_view id) {
  const auto& m = primary(in, id);
  const auto& r = need(in.pca, id, "pca");
  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> acc;
  std::vector<std::pair<std::string, double>> llms;
  for (std::size_t i = 0; i < r.actor_ids.size(); ++i) {
    const Actor* a = find_actor(m, r.actor_ids[i]);
    if (!a) continue;
    const double score = r.coordinates(static_cast<Eigen::Index>(i), 0);
    if (a->kind == ActorKind::llm) {
      llms.emplace_back(a->id, score);
      continue;
    }
    auto add = [&](const std::string& cat, const std::string& level) {
      auto& slot = acc[{cat, level}];
      slot.sum += score;
      ++slot.n;
    };
    if (a->group) add("group", *a->group);
    for (const auto& [k, v] : a->tags) add(k, v);
  }
  FigureData fd;
  fd.header = {"category", "level", "mean_pc1", "n"};
  for (const auto& [key, s] : acc)
    fd.rows.push_back({key.first, key.second, format_double(s.sum / static_cast<double>(s.n)), std::to_string(s.n)});
  std::sort(llms.begin(), llms.end());
  for (const auto& [aid, score] : llms) fd.rows.push_back({"llm", aid, format_double(score), "1"});
  json spec = base_spec(id, "Mean first principal component by group and model");
  spec["mark"] = {{"type", "point"}, {"filled", true}};
  spec["encoding"] = {{"x", field("mean_pc1", "quantitative", "Mean PC1 score")},
                      {"y", field("level", "nominal")},
                      {"row", field("category", "nominal")}};
  spec["resolve"] = {{"scale", {{"y", "independent"}}}};
  fd.plot_spec = spec.dump(2);
  return fd;
}

FigureData variance_figure(const FigureInputs& in, std::string_view id) {
  const auto& m = primary(in, id);
  FigureData fd;
  fd.header = {"actor_id", "variance", "kind"};
  for (std::size_t i = 0; i < m.n_actors(); ++i) {
    try {
      fd.rows.push_back({m.actors()[i].id, format_double(consistency_variance(m.row(i))),
                         std::string(to_string(m.actors()[i].kind))});
    } catch (const InsufficientResponses&) {
    }
  }
  json spec = base_spec(id, "Variance of recoded answers");
  spec["mark"] = {{"type", "tick"}};
  spec["encoding"] = {{"x", field("variance", "quantitative", "Variance")}, {"y", field("kind", "nominal")}};
  fd.plot_spec = spec.dump(2);
  return fd;
}

FigureData irt_figure(const FigureInputs& in, std::string_view id) {
  const auto& m = primary(in, id);
  const auto& r = need(in.irt, id, "irt");
  if (!r.coordinate_sd) throw MissingUpstream(std::string(id) + ": IRT result carries no posterior SD");
  FigureData fd;
  fd.header = {"actor_id", "kind", "mean", "sd", "ci_low", "ci_high"};
  for (std::size_t i = 0; i < r.actor_ids.size(); ++i) {
    const auto ei = static_cast<Eigen::Index>(i);
    csv::Row row{r.actor_ids[i], kind_of(m, r.actor_ids[i]), format_double(r.coordinates(ei, 0)),
                 format_double((*r.coordinate_sd)(ei))};
    if (r.credible_interval90) {
      row.push_back(format_double((*r.credible_interval90)(ei, 0)));
      row.push_back(format_double((*r.credible_interval90)(ei, 1)));
    } else {
      row.insert(row.end(), {"", ""});
    }
    fd.rows.push_back(std::move(row));
  }
  json spec = base_spec(id, "Posterior ideal points");
  spec["encoding"] = {{"y", field("actor_id", "nominal")}};
  spec["encoding"]["y"]["sort"] = {{"field", "mean"}};
  spec["encoding"]["y"]["axis"] = nullptr;
  spec["layer"] = json::array(
      {{{"mark", "rule"},
        {"encoding", {{"x", field("ci_low", "quantitative", "Ideal point")}, {"x2", {{"field", "ci_high"}}}}}},
       {{"mark", {{"type", "point"}, {"filled", true}}},
        {"encoding", {{"x", field("mean", "quantitative")}, {"color", field("kind", "nominal")}}}}});
  fd.plot_spec = spec.dump(2);
  return fd;
}

FigureData topic_figure(const FigureInputs& in, std::string_view id) {
  const auto& m = primary(in, id);
  std::set<Topic> topics;
  for (const auto& it : m.items())
    if (it.topic) topics.insert(*it.topic);
  FigureData fd;
  fd.header = {"topic", "actor_id", "kind", "score"};
  for (Topic t : topics) {
    const ResponseMatrix sub = subset_by_topic(m, t);
    if (sub.n_items() < 2) continue;
    const ScalingResult r = pca_scale(sub, 1, Imputation::mean);
    double sa = 0.0, sb = 0.0;
    std::size_t na = 0, nb = 0;
    std::vector<double> scores(r.actor_ids.size());
    for (std::size_t i = 0; i < r.actor_ids.size(); ++i) {
      scores[i] = r.coordinates(static_cast<Eigen::Index>(i), 0);
      const std::string g = group_of(sub, r.actor_ids[i]);
      if (g == in.strong_a) sa += scores[i], ++na;
      if (g == in.strong_b) sb += scores[i], ++nb;
    }
    if (na == 0 || nb == 0)
      throw MissingUpstream(std::string(id) + " needs members of '" + in.strong_a + "' and '" + in.strong_b + "'");
    const auto norm = normalize_to_partisan_anchors(scores, sa / static_cast<double>(na), sb / static_cast<double>(nb));
    for (std::size_t i = 0; i < r.actor_ids.size(); ++i) {
      const Actor* a = find_actor(sub, r.actor_ids[i]);
      if (!a || a->kind != ActorKind::llm) continue;
      fd.rows.push_back({std::string(to_string(t)), a->id, std::string(to_string(a->kind)), format_double(norm[i])});
    }
  }
  json spec = base_spec(id, "Topic scores relative to strong partisans");
  spec["mark"] = {{"type", "point"}, {"filled", true}};
  spec["encoding"] = {{"x", field("score", "quantitative", "Normalized PC1 (-1 and +1 are the strong partisans)")},
                      {"y", field("topic", "nominal")},
                      {"color", field("actor_id", "nominal")}};
  fd.plot_spec = spec.dump(2);
  return fd;
}

FigureData cross_corpus_variance(const FigureInputs& in, std::string_view id) {
  if (in.corpora.empty()) throw MissingUpstream(std::string(id) + " needs at least one response matrix");
  FigureData fd;
  fd.header = {"corpus", "actor_id", "kind", "variance"};
  for (const auto& [name, mp] : in.corpora) {
    if (!mp) throw MissingUpstream(std::string(id) + ": corpus '" + name + "' is missing");
    for (std::size_t i = 0; i < mp->n_actors(); ++i) {
      try {
        fd.rows.push_back({name, mp->actors()[i].id, std::string(to_string(mp->actors()[i].kind)),
                           format_double(consistency_variance(mp->row(i)))});
      } catch (const InsufficientResponses&) {
      }
    }
  }
  json spec = base_spec(id, "Variance of recoded answers by corpus");
  spec["mark"] = {{"type", "boxplot"}};
  spec["encoding"] = {{"x", field("corpus", "nominal")},
                      {"y", field("variance", "quantitative", "Variance")},
                      {"color", field("kind", "nominal")}};
  fd.plot_spec = spec.dump(2);
  return fd;
}

}  // namespace

FigureData figure_data(const FigureInputs& inputs, std::string_view figure_id) {
  FigureData fd;
  if (figure_id == "fig1") fd = scatter_map(inputs, figure_id, "Spatial map of legislators and models");
  else if (figure_id == "fig2") fd = scatter_map(inputs, figure_id, "Spatial map of justices and models");
  else if (figure_id == "fig3") fd = alignment_figure(inputs, figure_id);
  else if (figure_id == "fig4") fd = group_means_figure(inputs, figure_id);
  else if (figure_id == "fig5a") fd = variance_figure(inputs, figure_id);
  else if (figure_id == "fig5b") fd = irt_figure(inputs, figure_id);
  else if (figure_id == "fig5c") fd = topic_figure(inputs, figure_id);
  else if (figure_id == "fig6") fd = cross_corpus_variance(inputs, figure_id);
  else throw ConfigError("unknown figure id '" + std::string(figure_id) + "'");
  fd.id = std::string(figure_id);
  return fd;
}

std::vector<std::filesystem::path> emit_figure_data(const FigureInputs& inputs, std::string_view figure_id,
                                                    const std::filesystem::path& dir,
                                                    std::string_view header_comment) {
  const FigureData fd = figure_data(inputs, figure_id);
  std::filesystem::create_directories(dir);
  std::ostringstream table;
  if (!header_comment.empty()) table << "# " << header_comment << "\n";
  csv::write_row(table, fd.header);
  for (const auto& r : fd.rows) csv::write_row(table, r);
  const auto table_path = dir / (fd.id + ".csv");
  write_file_atomic(table_path, table.str());

  json spec = json::parse(fd.plot_spec);
  if (!header_comment.empty()) spec["usermeta"]["header"] = std::string(header_comment);
  const auto spec_path = dir / (fd.id + ".vl.json");
  write_file_atomic(spec_path, spec.dump(2) + "\n");
  return {table_path, spec_path};
}

}  // namespace ideo
