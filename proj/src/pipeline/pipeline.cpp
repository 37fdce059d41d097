#include <algorithm>
#include <future>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ideoscale/adapters.hpp"
#include "ideoscale/hash.hpp"
#include "ideoscale/pipeline.hpp"
#include "ideoscale/synthetic.hpp"

namespace ideo {

namespace fs = std::filesystem;
using nlohmann::json;

// ===========================================================================
// Configuration

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ConfigError("unknown key '" + k + "' in " + where);
}

const std::vector<std::string>& figure_ids() {
  static const std::vector<std::string> ids = {"fig1", "fig2", "fig3", "fig4", "fig5a", "fig5b", "fig5c", "fig6"};
  return ids;
}

const std::vector<std::string>& source_types() {
  static const std::vector<std::string> t = {"synthetic_spatial", "synthetic_court", "synthetic_survey",
                                             "corpus_dir",        "congress",        "scotus",
                                             "ces"};
  return t;
}

std::string path_str(const fs::path& p) { return p.generic_string(); }

CorpusSpec corpus_from_json(const json& j) {
  check_keys(j, {"name", "source", "filter", "query", "methods", "groups"}, "corpus");
  CorpusSpec c;
  c.name = j.at("name").get<std::string>();
  const std::string where = "corpus '" + c.name + "'";
  if (c.name.empty() || c.name.find_first_of("/\\.") != std::string::npos)
    throw ConfigError(where + ": name must be a plain identifier");
  const json& s = j.at("source");
  check_keys(s, {"type", "actors", "items", "dims", "beta", "dim_weights", "path", "orientation", "extra"},
             where + " source");
  c.source.type = s.at("type").get<std::string>();
  if (std::find(source_types().begin(), source_types().end(), c.source.type) == source_types().end())
    throw ConfigError(where + ": unknown source type '" + c.source.type + "'");
  c.source.actors = s.value("actors", c.source.actors);
  c.source.items = s.value("items", c.source.items);
  c.source.dims = s.value("dims", c.source.dims);
  c.source.beta = s.value("beta", c.source.beta);
  c.source.dim_weights = s.value("dim_weights", c.source.dim_weights);
  c.source.path = s.value("path", std::string());
  c.source.orientation = s.value("orientation", std::string());
  c.source.extra = s.value("extra", std::string());
  const bool synthetic = c.source.type.rfind("synthetic_", 0) == 0;
  if (!synthetic && c.source.path.empty()) throw ConfigError(where + ": source needs a path");
  if ((c.source.type == "congress" || c.source.type == "scotus" || c.source.type == "ces") &&
      c.source.orientation.empty())
    throw ConfigError(where + ": source needs an orientation file");
  if ((c.source.type == "scotus" || c.source.type == "ces") && c.source.extra.empty())
    throw ConfigError(where + ": source needs an extra file");
  if (synthetic && (c.source.actors < 2 || c.source.items < 2))
    throw ConfigError(where + ": synthetic sources need at least 2 actors and 2 items");
  if (j.contains("filter")) {
    check_keys(j["filter"], {"min_minority_share", "min_responses"}, where + " filter");
    c.filter.min_minority_share = j["filter"].value("min_minority_share", c.filter.min_minority_share);
    c.filter.min_responses = j["filter"].value("min_responses", c.filter.min_responses);
  }
  c.query = j.value("query", true);
  for (const auto& m : j.value("methods", json::array())) {
    try {
      c.methods.push_back(parse_scaling_method(m.get<std::string>()));
    } catch (const Error& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  if (j.contains("groups")) {
    const auto g = j["groups"].get<std::vector<std::string>>();
    if (g.size() != 2) throw ConfigError(where + ": groups must name exactly two groups");
    c.group_a = g[0];
    c.group_b = g[1];
  }
  return c;
}

json corpus_to_json(const CorpusSpec& c) {
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(std::string(to_string(m)));
  return json{{"name", c.name},
              {"source",
               {{"type", c.source.type},
                {"actors", c.source.actors},
                {"items", c.source.items},
                {"dims", c.source.dims},
                {"beta", c.source.beta},
                {"dim_weights", c.source.dim_weights},
                {"path", path_str(c.source.path)},
                {"orientation", path_str(c.source.orientation)},
                {"extra", path_str(c.source.extra)}}},
              {"filter",
               {{"min_minority_share", c.filter.min_minority_share}, {"min_responses", c.filter.min_responses}}},
              {"query", c.query},
              {"methods", methods},
              {"groups", {c.group_a, c.group_b}}};
}

ModelSpec model_from_json(const json& j) {
  check_keys(j, {"id", "provider", "mock"}, "model");
  ModelSpec m;
  m.id = j.at("id").get<std::string>();
  if (m.id.empty()) throw ConfigError("model id must be non-empty");
  if (j.contains("provider")) m.provider = provider_config_from_json(j["provider"].dump());
  m.provider.validate();
  if (j.contains("mock")) {
    const json& p = j["mock"];
    check_keys(p, {"lean", "noise", "flip_rate", "refusal_rate"}, "model '" + m.id + "' mock");
    m.mock.lean = p.value("lean", m.mock.lean);
    m.mock.noise = p.value("noise", m.mock.noise);
    m.mock.flip_rate = p.value("flip_rate", m.mock.flip_rate);
    m.mock.refusal_rate = p.value("refusal_rate", m.mock.refusal_rate);
  }
  return m;
}

json model_to_json(const ModelSpec& m) {
  return json{{"id", m.id},
              {"provider", json::parse(provider_config_to_json(m.provider))},
              {"mock",
               {{"lean", m.mock.lean},
                {"noise", m.mock.noise},
                {"flip_rate", m.mock.flip_rate},
                {"refusal_rate", m.mock.refusal_rate}}}};
}

void scaling_from_json(const json& j, PipelineConfig& c) {
  check_keys(j, {"nominate", "pca", "irt"}, "scaling");
  if (j.contains("nominate")) {
    const json& n = j["nominate"];
    check_keys(n, {"dims", "beta", "dim_weights", "max_iters", "tol", "init", "threads"}, "scaling.nominate");
    c.nominate.dims = n.value("dims", c.nominate.dims);
    c.nominate.beta = n.value("beta", c.nominate.beta);
    c.nominate.dim_weights = n.value("dim_weights", c.nominate.dim_weights);
    c.nominate.max_iters = n.value("max_iters", c.nominate.max_iters);
    c.nominate.tol = n.value("tol", c.nominate.tol);
    c.nominate.threads = n.value("threads", c.nominate.threads);
    const std::string init = n.value("init", "random");
    if (init != "random" && init != "eigen") throw ConfigError("scaling.nominate.init must be random or eigen");
    c.nominate.init = init == "eigen" ? SpatialInit::eigen : SpatialInit::random;
  }
  if (j.contains("pca")) {
    const json& p = j["pca"];
    check_keys(p, {"components", "imputation"}, "scaling.pca");
    c.pca_components = p.value("components", c.pca_components);
    const std::string imp = p.value("imputation", "mean");
    if (imp != "mean" && imp != "listwise") throw ConfigError("scaling.pca.imputation must be mean or listwise");
    c.pca_imputation = imp == "mean" ? Imputation::mean : Imputation::listwise;
    if (c.pca_components < 1) throw ConfigError("scaling.pca.components must be >= 1");
  }
  if (j.contains("irt")) {
    const json& r = j["irt"];
    check_keys(r,
               {"n_samples", "n_burnin", "thin", "prior_sd_theta", "prior_sd_item", "anchor_negative",
                "anchor_positive", "link", "proposal_sd"},
               "scaling.irt");
    c.irt.n_samples = r.value("n_samples", c.irt.n_samples);
    c.irt.n_burnin = r.value("n_burnin", c.irt.n_burnin);
    c.irt.thin = r.value("thin", c.irt.thin);
    c.irt.prior_sd_theta = r.value("prior_sd_theta", c.irt.prior_sd_theta);
    c.irt.prior_sd_item = r.value("prior_sd_item", c.irt.prior_sd_item);
    c.irt.anchor_negative = r.value("anchor_negative", c.irt.anchor_negative);
    c.irt.anchor_positive = r.value("anchor_positive", c.irt.anchor_positive);
    c.irt.proposal_sd = r.value("proposal_sd", c.irt.proposal_sd);
    const std::string link = r.value("link", "probit");
    if (link != "probit" && link != "logistic") throw ConfigError("scaling.irt.link must be probit or logistic");
    c.irt.link = link == "probit" ? IrtLink::probit : IrtLink::logistic;
  }
}

json scaling_to_json(const PipelineConfig& c) {
  return json{{"nominate",
               {{"dims", c.nominate.dims},
                {"beta", c.nominate.beta},
                {"dim_weights", c.nominate.dim_weights},
                {"max_iters", c.nominate.max_iters},
                {"tol", c.nominate.tol},
                {"init", c.nominate.init == SpatialInit::eigen ? "eigen" : "random"}}},
              {"pca",
               {{"components", c.pca_components},
                {"imputation", c.pca_imputation == Imputation::mean ? "mean" : "listwise"}}},
              {"irt",
               {{"n_samples", c.irt.n_samples},
                {"n_burnin", c.irt.n_burnin},
                {"thin", c.irt.thin},
                {"prior_sd_theta", c.irt.prior_sd_theta},
                {"prior_sd_item", c.irt.prior_sd_item},
                {"anchor_negative", c.irt.anchor_negative},
                {"anchor_positive", c.irt.anchor_positive},
                {"link", c.irt.link == IrtLink::probit ? "probit" : "logistic"},
                {"proposal_sd", c.irt.proposal_sd}}}};
}

void analysis_from_json(const json& j, AnalysisSpec& a) {
  check_keys(j, {"enabled", "trials_csv", "se_type", "experiment", "simulate"}, "analysis");
  a.enabled = j.value("enabled", a.enabled);
  if (j.contains("trials_csv")) a.trials_csv = fs::path(j["trials_csv"].get<std::string>());
  const std::string se = j.value("se_type", "hc1_robust");
  if (se != "hc1_robust" && se != "classical") throw ConfigError("analysis.se_type must be hc1_robust or classical");
  a.se_type = se == "classical" ? SeType::classical : SeType::hc1_robust;
  if (j.contains("experiment")) {
    try {
      a.experiment = experiment_config_from_json(j["experiment"].dump());
    } catch (const ConfigInvalid& e) {
      throw ConfigError(std::string("analysis.experiment: ") + e.what());
    }
  }
  if (j.contains("simulate")) {
    const json& s = j["simulate"];
    check_keys(s, {"waves", "effect", "propensity_sd", "attention_pass_rate", "incomplete_share"},
               "analysis.simulate");
    if (s.contains("waves")) {
      a.simulate.waves.clear();
      for (const auto& w : s["waves"]) {
        check_keys(w, {"label", "participants"}, "analysis.simulate.waves");
        a.simulate.waves.push_back({w.at("label").get<std::string>(), w.at("participants").get<std::size_t>()});
      }
    }
    a.simulate.effect = s.value("effect", a.simulate.effect);
    a.simulate.propensity_sd = s.value("propensity_sd", a.simulate.propensity_sd);
    a.simulate.attention_pass_rate = s.value("attention_pass_rate", a.simulate.attention_pass_rate);
    a.simulate.incomplete_share = s.value("incomplete_share", a.simulate.incomplete_share);
  }
  if (a.simulate.waves.empty() && !a.trials_csv) throw ConfigError("analysis.simulate needs at least one wave");
  std::set<std::string> labels;
  for (const auto& w : a.simulate.waves)
    if (w.label.empty() || !labels.insert(w.label).second)
      throw ConfigError("analysis.simulate wave labels must be unique and non-empty");
}

json analysis_to_json(const AnalysisSpec& a) {
  json waves = json::array();
  for (const auto& w : a.simulate.waves) waves.push_back({{"label", w.label}, {"participants", w.participants}});
  json j{{"enabled", a.enabled},
         {"se_type", std::string(to_string(a.se_type))},
         {"experiment", json::parse(experiment_config_to_json(a.experiment))},
         {"simulate",
          {{"waves", waves},
           {"effect", a.simulate.effect},
           {"propensity_sd", a.simulate.propensity_sd},
           {"attention_pass_rate", a.simulate.attention_pass_rate},
           {"incomplete_share", a.simulate.incomplete_share}}}};
  if (a.trials_csv) j["trials_csv"] = path_str(*a.trials_csv);
  return j;
}

}  // namespace

const CorpusSpec& PipelineConfig::corpus(std::string_view name) const {
  for (const auto& c : corpora)
    if (c.name == name) return c;
  throw ConfigError("unknown corpus '" + std::string(name) + "'");
}

PipelineConfig pipeline_config_from_json(const std::string& text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig c;
  c.base_dir = base_dir;
  try {
    check_keys(j, {"seed", "out_dir", "corpora", "models", "query", "scaling", "analysis", "figures"}, "config");
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", std::string("out"));
    std::set<std::string> names;
    for (const auto& cj : j.value("corpora", json::array())) {
      c.corpora.push_back(corpus_from_json(cj));
      if (!names.insert(c.corpora.back().name).second)
        throw ConfigError("duplicate corpus name '" + c.corpora.back().name + "'");
    }
    std::set<std::string> ids;
    for (const auto& mj : j.value("models", json::array())) {
      c.models.push_back(model_from_json(mj));
      if (!ids.insert(c.models.back().id).second) throw ConfigError("duplicate model id '" + c.models.back().id + "'");
    }
    if (j.contains("query")) {
      check_keys(j["query"], {"n_repeats"}, "query");
      c.n_repeats = j["query"].value("n_repeats", c.n_repeats);
      if (c.n_repeats < 1) throw ConfigError("query.n_repeats must be >= 1");
    }
    if (j.contains("scaling")) scaling_from_json(j["scaling"], c);
    c.nominate.seed = c.seed;
    c.irt.seed = c.seed;
    c.nominate.validate();
    if (j.contains("analysis")) analysis_from_json(j["analysis"], c.analysis);
    for (const auto& fj : j.value("figures", json::array())) {
      check_keys(fj, {"id", "corpora"}, "figure");
      FigureSpec f;
      f.id = fj.at("id").get<std::string>();
      if (std::find(figure_ids().begin(), figure_ids().end(), f.id) == figure_ids().end())
        throw ConfigError("unknown figure id '" + f.id + "'");
      f.corpora = fj.at("corpora").get<std::vector<std::string>>();
      if (f.corpora.empty()) throw ConfigError("figure " + f.id + " names no corpus");
      for (const auto& n : f.corpora) c.corpus(n);
      c.figures.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

std::string pipeline_config_to_json(const PipelineConfig& c) {
  json corpora = json::array(), models = json::array(), figures = json::array();
  for (const auto& x : c.corpora) corpora.push_back(corpus_to_json(x));
  for (const auto& m : c.models) models.push_back(model_to_json(m));
  for (const auto& f : c.figures) figures.push_back({{"id", f.id}, {"corpora", f.corpora}});
  const json j{{"seed", c.seed},
               {"corpora", corpora},
               {"models", models},
               {"query", {{"n_repeats", c.n_repeats}}},
               {"scaling", scaling_to_json(c)},
               {"analysis", analysis_to_json(c.analysis)},
               {"figures", figures}};
  return j.dump();
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  return pipeline_config_from_json(read_file(path), path.parent_path());
}

// ===========================================================================
// Manifest and output stamping

std::string RunManifest::to_json() const {
  json inputs = json::array(), stage_list = json::array();
  for (const auto& h : input_hashes) inputs.push_back({{"path", h.path}, {"sha256", h.sha256}});
  for (const auto& s : stages) {
    json sj{{"name", s.name}, {"status", s.status}, {"key", s.key}};
    if (!s.error.empty()) sj["error"] = s.error;
    stage_list.push_back(sj);
  }
  const json j{{"command", command},   {"config_hash", config_hash},   {"input_hashes", inputs},
               {"output_paths", output_paths}, {"started_at", started_at}, {"finished_at", finished_at},
               {"seed", seed},         {"stages", stage_list}};
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  RunManifest m;
  try {
    const json j = json::parse(text);
    m.command = j.at("command").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& h : j.at("input_hashes")) m.input_hashes.push_back({h.at("path"), h.at("sha256")});
    m.output_paths = j.at("output_paths").get<std::vector<std::string>>();
    m.started_at = j.at("started_at").get<double>();
    m.finished_at = j.at("finished_at").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("stages"))
      m.stages.push_back({s.at("name"), s.at("status"), s.at("key"), s.value("error", std::string())});
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  return m;
}

const StageRecord* RunManifest::stage(std::string_view name) const {
  for (const auto& s : stages)
    if (s.name == name) return &s;
  return nullptr;
}

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> s = {"ingest", "query", "scale", "metrics", "analyze", "report"};
  return s;
}

std::string config_header(const std::string& config_hash) { return "config_hash=" + config_hash; }

namespace {

bool is_json(const fs::path& p) { return p.extension() == ".json"; }

json* stamp_slot(json& j) {
  const bool plot = j.contains("$schema") && j["$schema"].is_string() &&
                    j["$schema"].get<std::string>().find("vega-lite") != std::string::npos;
  if (plot) return &j["usermeta"];
  return &j;
}

}  // namespace

std::optional<std::string> read_output_header(const fs::path& path) {
  const std::string text = read_file(path);
  if (is_json(path)) {
    json j = json::parse(text);
    json* slot = stamp_slot(j);
    if (slot->is_object() && slot->contains("header")) return (*slot)["header"].get<std::string>();
    return std::nullopt;
  }
  if (text.rfind("# ", 0) != 0) return std::nullopt;
  return text.substr(2, text.find('\n') - 2);
}

void restamp_output(const fs::path& path, const std::string& header) {
  const std::string text = read_file(path);
  if (is_json(path)) {
    json j = json::parse(text);
    json* slot = stamp_slot(j);
    if (slot->is_object() && slot->contains("header") && (*slot)["header"] == header) return;
    (*slot)["header"] = header;
    write_file_atomic(path, j.dump(2) + "\n");
    return;
  }
  std::string body = text;
  if (text.rfind("# ", 0) == 0) {
    const auto nl = text.find('\n');
    if (text.substr(2, nl - 2) == header) return;
    body = nl == std::string::npos ? std::string() : text.substr(nl + 1);
  }
  write_file_atomic(path, "# " + header + "\n" + body);
}

std::string output_body_hash(const fs::path& path) {
  const std::string text = read_file(path);
  if (is_json(path)) {
    json j = json::parse(text);
    json* slot = stamp_slot(j);
    if (slot->is_object()) slot->erase("header");
    return sha256_hex(j.dump());
  }
  if (text.rfind("# ", 0) == 0) {
    const auto nl = text.find('\n');
    return sha256_hex(nl == std::string::npos ? std::string_view() : std::string_view(text).substr(nl + 1));
  }
  return sha256_hex(text);
}

// ===========================================================================
// Stages

namespace {

fs::path resolve(const PipelineConfig& cfg, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return cfg.base_dir / p;
}

std::uint64_t stream_seed(std::uint64_t seed, std::string_view label) { return seed ^ fnv1a64(label); }

// Justices with case vocabulary on top of the spatial generator.
ResponseMatrix court_matrix(const CorpusSpec& spec, std::uint64_t seed) {
  const auto gen = synthetic::spatial(spec.source.actors, spec.source.items, spec.source.dims, spec.source.beta,
                                      spec.source.dim_weights, seed);
  const ResponseMatrix& m = gen.matrix;
  std::vector<Actor> actors;
  for (std::size_t i = 0; i < m.n_actors(); ++i) {
    Actor a = m.actors()[i];
    a.id = "justice:" + std::to_string(i + 1);
    a.display_name = "Justice " + std::to_string(i + 1);
    a.kind = ActorKind::justice;
    a.group = a.group == "Republican" ? "Republican appointee" : "Democratic appointee";
    actors.push_back(std::move(a));
  }
  std::vector<Item> items;
  for (std::size_t j = 0; j < m.n_items(); ++j) {
    Item it = m.items()[j];
    it.id = "case:" + std::to_string(j + 1);
    it.source = ItemSource::scotus_case;
    it.text = "Synthetic case " + std::to_string(j + 1) + ". The petitioner asks the Court to reverse the decision below.";
    it.answer_domain = {"Agree", "Disagree"};
    items.push_back(std::move(it));
  }
  return ResponseMatrix(std::move(actors), std::move(items), m.codes(), "synthetic court");
}

struct IngestResult {
  ResponseMatrix matrix;
  IngestReport report;
  std::map<std::string, std::size_t> skipped;
};

IngestResult load_source(const PipelineConfig& cfg, const CorpusSpec& spec) {
  const auto& s = spec.source;
  const std::uint64_t seed = stream_seed(cfg.seed, "corpus:" + spec.name);
  IngestResult out;
  if (s.type == "synthetic_spatial") {
    out.matrix = synthetic::spatial(s.actors, s.items, s.dims, s.beta, s.dim_weights, seed).matrix;
  } else if (s.type == "synthetic_court") {
    out.matrix = court_matrix(spec, seed);
  } else if (s.type == "synthetic_survey") {
    out.matrix = synthetic::survey(s.actors, s.items, seed).matrix;
  } else if (s.type == "corpus_dir") {
    out.matrix = read_corpus(resolve(cfg, s.path), &out.report);
  } else {
    adapters::AdapterOutput a;
    if (s.type == "congress")
      a = adapters::read_congress_votes(resolve(cfg, s.path), resolve(cfg, s.orientation));
    else if (s.type == "scotus")
      a = adapters::read_scotus_votes(resolve(cfg, s.path), resolve(cfg, s.orientation), resolve(cfg, s.extra));
    else
      a = adapters::read_ces(resolve(cfg, s.path), resolve(cfg, s.extra), resolve(cfg, s.orientation));
    out.matrix = ingest_votes(a.files.records, a.files.registry, s.type + " corpus " + spec.name, &out.report);
    for (const auto& [k, v] : a.report.missing_by_answer) out.report.missing_by_answer[k] += v;
    out.skipped = a.skipped;
  }
  return out;
}

std::vector<fs::path> input_files(const PipelineConfig& cfg, const CorpusSpec& spec) {
  std::vector<fs::path> files;
  for (const fs::path* p : {&spec.source.path, &spec.source.orientation, &spec.source.extra}) {
    if (p->empty()) continue;
    const fs::path r = resolve(cfg, *p);
    if (!fs::exists(r)) throw ConfigError("corpus '" + spec.name + "': input not found: " + r.string());
    if (fs::is_directory(r)) {
      std::vector<fs::path> inner;
      for (const auto& e : fs::recursive_directory_iterator(r))
        if (e.is_regular_file()) inner.push_back(e.path());
      std::sort(inner.begin(), inner.end());
      files.insert(files.end(), inner.begin(), inner.end());
    } else {
      files.push_back(r);
    }
  }
  return files;
}

double mean_code(std::span<const Code> row) {
  double s = 0;
  std::size_t n = 0;
  for (Code c : row)
    if (c != Code::missing) s += static_cast<double>(c), ++n;
  return n ? s / static_cast<double>(n) : 0.0;
}

bool two_sided(std::span<const Code> codes) {
  bool lib = false, con = false;
  for (Code c : codes) {
    lib |= c == Code::liberal;
    con |= c == Code::conservative;
  }
  return lib && con;
}

// The spatial model is undefined for actors or items with one-sided codes.
ResponseMatrix nominate_ready(ResponseMatrix m, std::vector<std::string>& warnings) {
  for (int round = 0; round < 20; ++round) {
    std::vector<std::size_t> keep;
    std::vector<std::string> dropped;
    for (std::size_t i = 0; i < m.n_actors(); ++i) {
      if (two_sided(m.row(i))) keep.push_back(i);
      else dropped.push_back(m.actors()[i].id);
    }
    bool items_ok = true;
    for (std::size_t j = 0; j < m.n_items() && items_ok; ++j) {
      std::vector<Code> col;
      for (std::size_t i : keep) col.push_back(m.code(i, j));
      items_ok = two_sided(col);
    }
    if (dropped.empty() && items_ok) return m;
    for (const auto& d : dropped) warnings.push_back("excluded one-sided actor " + d);
    m = select_actors(m, keep);
    m = filter_items(m, FilterOptions{1e-12, 1});
  }
  throw DegenerateMatrix("could not reach a matrix with two-sided actors and items");
}

struct Ctx {
  PipelineConfig cfg;
  fs::path out;
  std::string header;
  bool force = false;
};

fs::path rel(const Ctx& c, const fs::path& p) { return p.lexically_relative(c.out); }

void write_text(const Ctx& c, const fs::path& path, const std::string& body, std::vector<fs::path>& outs) {
  fs::create_directories(path.parent_path());
  write_file_atomic(path, "# " + c.header + "\n" + body);
  outs.push_back(path);
}

std::vector<fs::path> corpus_files(const fs::path& dir) {
  return {dir / "actors.csv", dir / "items.csv", dir / "responses.csv"};
}

std::vector<fs::path> stage_ingest(const Ctx& c) {
  std::vector<fs::path> outs;
  for (const auto& spec : c.cfg.corpora) {
    IngestResult r = load_source(c.cfg, spec);
    const ResponseMatrix filtered = filter_items(r.matrix, spec.filter);
    const fs::path dir = c.out / "ingest" / spec.name;
    write_corpus(filtered, dir, c.header);
    for (auto& f : corpus_files(dir)) outs.push_back(f);
    std::ostringstream rep;
    csv::write_row(rep, {"kind", "key", "count"});
    for (const auto& [k, v] : r.report.missing_by_answer) csv::write_row(rep, {"missing_answer", k, std::to_string(v)});
    for (const auto& [k, v] : r.skipped) csv::write_row(rep, {"skipped", k, std::to_string(v)});
    csv::write_row(rep, {"dropped_items_filter", "", std::to_string(r.matrix.n_items() - filtered.n_items())});
    write_text(c, dir / "ingest_report.csv", rep.str(), outs);
  }
  return outs;
}

std::vector<fs::path> stage_query(const Ctx& c) {
  std::vector<fs::path> outs;
  std::ostringstream stab;
  csv::write_row(stab, {"corpus", "model", "items", "repeats", "unparseable", "kappa", "observed_agreement",
                        "expected_agreement"});
  for (const auto& spec : c.cfg.corpora) {
    const ResponseMatrix base = read_corpus(c.out / "ingest" / spec.name);
    ResponseMatrix merged = base;
    if (spec.query) {
      for (const auto& model : c.cfg.models) {
        ProviderConfig pc = model.provider;
        std::unique_ptr<Provider> provider;
        std::unique_ptr<Clock> clock;
        if (pc.provider_id == "mock") {
          provider = std::make_unique<MockProvider>(mock_responder(model, base));
          clock = std::make_unique<VirtualClock>(0.0);
        } else {
          if (pc.cache_dir.empty()) pc.cache_dir = c.out / ".cache" / sha256_hex(model.id).substr(0, 16);
          provider = make_provider(pc);
          clock = std::make_unique<SystemClock>();
        }
        if (!pc.cache_dir.empty()) pc.cache_dir = resolve(c.cfg, pc.cache_dir);
        QueryEngine engine(pc, *provider, *clock);
        const InstrumentRun run = run_instrument(engine, base.items(), model.id, c.cfg.n_repeats);
        csv::Row row{spec.name, model.id, std::to_string(base.n_items()), std::to_string(c.cfg.n_repeats),
                     std::to_string(run.unparseable)};
        if (run.stability) {
          row.push_back(csv::format_double(run.stability->kappa));
          row.push_back(csv::format_double(run.stability->observed_agreement));
          row.push_back(csv::format_double(run.stability->expected_agreement));
        } else {
          row.insert(row.end(), {"", "", ""});
        }
        csv::write_row(stab, row);
        if (run.records.empty()) continue;
        Actor actor;
        actor.id = model.id;
        actor.kind = ActorKind::llm;
        actor.display_name = pc.model_name;
        Registry reg{{actor}, base.items()};
        merged = merge_actors(merged, ingest_votes(run.records, reg, "model " + model.id));
      }
    }
    const fs::path dir = c.out / "query" / spec.name;
    write_corpus(merged, dir, c.header);
    for (auto& f : corpus_files(dir)) outs.push_back(f);
  }
  write_text(c, c.out / "query" / "stability.csv", stab.str(), outs);
  return outs;
}

IrtConfig irt_for(const PipelineConfig& cfg, const ResponseMatrix& m) {
  IrtConfig ic = cfg.irt;
  if (!ic.anchor_negative.empty() && !ic.anchor_positive.empty()) return ic;
  // Default anchors: the actors with the most liberal and most conservative
  // mean code (first in row order on ties).
  std::size_t lo = 0, hi = 0;
  for (std::size_t i = 1; i < m.n_actors(); ++i) {
    if (mean_code(m.row(i)) < mean_code(m.row(lo))) lo = i;
    if (mean_code(m.row(i)) > mean_code(m.row(hi))) hi = i;
  }
  if (ic.anchor_negative.empty()) ic.anchor_negative = m.actors()[lo].id;
  if (ic.anchor_positive.empty()) ic.anchor_positive = m.actors()[hi].id;
  return ic;
}

std::vector<fs::path> stage_scale(const Ctx& c) {
  struct Job {
    const CorpusSpec* spec;
    ScalingMethod method;
  };
  std::vector<Job> jobs;
  for (const auto& spec : c.cfg.corpora)
    for (auto m : spec.methods) jobs.push_back({&spec, m});

  std::map<std::string, ResponseMatrix> matrices;
  for (const auto& spec : c.cfg.corpora)
    if (!spec.methods.empty()) matrices.emplace(spec.name, read_corpus(c.out / "query" / spec.name));

  auto run = [&](const Job& job) -> std::vector<fs::path> {
    const ResponseMatrix& m = matrices.at(job.spec->name);
    ScalingResult r;
    switch (job.method) {
      case ScalingMethod::nominate: {
        std::vector<std::string> warnings;
        const ResponseMatrix ready = nominate_ready(m, warnings);
        r = nominate_scale(ready, c.cfg.nominate);
        r.warnings.insert(r.warnings.begin(), warnings.begin(), warnings.end());
        break;
      }
      case ScalingMethod::pca:
        r = pca_scale(m, c.cfg.pca_components, c.cfg.pca_imputation);
        break;
      case ScalingMethod::irt:
        r = irt_estimate(m, irt_for(c.cfg, m));
        break;
    }
    const fs::path dir = c.out / "scale" / job.spec->name;
    fs::create_directories(dir);
    const std::string stem(to_string(job.method));
    write_scaling(r, dir / (stem + ".csv"), dir / (stem + ".json"), c.header);
    return {dir / (stem + ".csv"), dir / (stem + ".json")};
  };

  std::vector<std::future<std::vector<fs::path>>> futures;
  for (const auto& job : jobs) futures.push_back(std::async(std::launch::async, run, job));
  std::vector<fs::path> outs;
  std::exception_ptr first;
  for (auto& f : futures) {
    try {
      for (auto& p : f.get()) outs.push_back(p);
    } catch (...) {
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
  return outs;
}

std::optional<ScalingResult> load_scaling(const Ctx& c, const std::string& corpus, ScalingMethod m) {
  const fs::path dir = c.out / "scale" / corpus;
  const std::string stem(to_string(m));
  if (!fs::exists(dir / (stem + ".csv")) || !fs::exists(dir / (stem + ".json"))) return std::nullopt;
  return read_scaling(dir / (stem + ".csv"), dir / (stem + ".json"));
}

bool has_member(const ResponseMatrix& m, const std::string& group) {
  return std::any_of(m.actors().begin(), m.actors().end(), [&](const Actor& a) { return a.group == group; });
}

std::vector<fs::path> stage_metrics(const Ctx& c) {
  std::vector<fs::path> outs;
  for (const auto& spec : c.cfg.corpora) {
    const ResponseMatrix m = read_corpus(c.out / "query" / spec.name);
    std::vector<MetricRow> rows;
    const bool groups = has_member(m, spec.group_a) && has_member(m, spec.group_b);
    for (std::size_t i = 0; i < m.n_actors(); ++i) {
      const std::string& id = m.actors()[i].id;
      try {
        rows.push_back({id, "variance", consistency_variance(m.row(i))});
      } catch (const InsufficientResponses&) {
      }
      if (!groups) continue;
      try {
        const auto p = party_alignment(m, id, spec.group_a, spec.group_b);
        rows.push_back({id, "dem_alignment", p.dem_alignment});
        rows.push_back({id, "rep_alignment", p.rep_alignment});
        rows.push_back({id, "alignment_items", static_cast<double>(p.n_items_used)});
      } catch (const Error&) {
      }
    }
    if (const auto irt = load_scaling(c, spec.name, ScalingMethod::irt); irt && irt->coordinate_sd) {
      for (std::size_t i = 0; i < irt->actor_ids.size(); ++i) {
        rows.push_back({irt->actor_ids[i], "irt_mean", irt->coordinates(static_cast<Eigen::Index>(i), 0)});
        rows.push_back({irt->actor_ids[i], "irt_sd", (*irt->coordinate_sd)(static_cast<Eigen::Index>(i))});
      }
    }
    if (const auto pca = load_scaling(c, spec.name, ScalingMethod::pca); pca && pca->fit.explained_variance_ratio) {
      const auto& ev = *pca->fit.explained_variance_ratio;
      for (std::size_t k = 0; k < ev.size(); ++k) rows.push_back({"*", "pca_explained_variance_" + std::to_string(k + 1), ev[k]});
    }
    if (const auto nom = load_scaling(c, spec.name, ScalingMethod::nominate)) {
      rows.push_back({"*", "nominate_correct_classification", nom->fit.correct_classification});
      rows.push_back({"*", "nominate_apre", nom->fit.aggregate_proportional_reduction_in_error});
      if (nom->fit.log_likelihood) rows.push_back({"*", "nominate_log_likelihood", *nom->fit.log_likelihood});
      std::vector<double> scores;
      std::vector<bool> labels;
      for (std::size_t i = 0; i < nom->actor_ids.size(); ++i) {
        const auto ai = m.actor_index(nom->actor_ids[i]);
        if (!ai || !m.actors()[*ai].group) continue;
        const std::string& g = *m.actors()[*ai].group;
        if (g != spec.group_a && g != spec.group_b) continue;
        scores.push_back(nom->coordinates(static_cast<Eigen::Index>(i), 0));
        labels.push_back(g == spec.group_b);
      }
      if (std::count(labels.begin(), labels.end(), true) > 0 && std::count(labels.begin(), labels.end(), false) > 0) {
        const auto sep = separability_margin(scores, labels);
        rows.push_back({"*", "separability_threshold", sep.threshold});
        rows.push_back({"*", "separability_violations", static_cast<double>(sep.violations)});
      }
    }
    const fs::path path = c.out / "metrics" / (spec.name + ".csv");
    fs::create_directories(path.parent_path());
    write_metric_rows(rows, path, c.header);
    outs.push_back(path);
  }
  return outs;
}

std::vector<fs::path> stage_analyze(const Ctx& c) {
  std::vector<fs::path> outs;
  const AnalysisSpec& a = c.cfg.analysis;
  std::vector<TrialRecord> trials;
  if (a.trials_csv) {
    trials = trials_from_csv(read_file(resolve(c.cfg, *a.trials_csv)));
  } else {
    const fs::path work = c.out / ".work" / "events";
    fs::remove_all(work);
    EventStore store(work, false);
    VirtualClock clock(1735689600.0);
    std::map<std::string, std::unique_ptr<MockProvider>> owned;
    std::map<std::string, Provider*> providers;
    for (const auto& t : a.experiment.topics) {
      if (owned.count(t.provider_ref)) continue;
      owned[t.provider_ref] = std::make_unique<MockProvider>(
          "There are reasonable arguments on several sides of this question; here is a short overview.");
      providers[t.provider_ref] = owned[t.provider_ref].get();
    }
    std::size_t offset = 0;
    for (const auto& wave : a.simulate.waves) {
      ExperimentConfig ec = a.experiment;
      ec.wave_label = wave.label;
      ec.seed = c.cfg.seed;
      ExperimentService service(ec, store, clock, providers);
      simulate_panel(service, clock, a.simulate, wave.label, wave.participants, offset, c.cfg.seed);
      offset += wave.participants;
    }
    trials = export_trials(store, a.experiment);
  }
  const std::string trials_csv = trials_to_csv(trials);
  write_text(c, c.out / "analyze" / "trials.csv", trials_csv, outs);

  const DataTable table = DataTable::from_csv(trials_csv);
  const std::vector<std::pair<std::string, std::vector<NamedModel>>> sets = {
      {"headline", headline_models(table, a.se_type)},
      {"moderators", moderator_models(table, a.se_type)},
      {"waves", wave_models(table, a.se_type)}};
  const std::map<std::string, std::string> labels = {{"treated", "Treated"},
                                                     {"n_chat_questions", "Chat questions"},
                                                     {"chat_minutes", "Chat minutes"},
                                                     {"(Intercept)", "Constant"}};
  for (const auto& [name, models] : sets) {
    write_text(c, c.out / "analyze" / (name + ".csv"), regression_csv(models), outs);
    write_text(c, c.out / "analyze" / (name + ".txt"), regression_text_table(models, "Alignment with the model's answer", labels),
               outs);
  }
  return outs;
}

std::vector<fs::path> stage_report(const Ctx& c) {
  std::vector<fs::path> outs;
  for (const auto& fig : c.cfg.figures) {
    std::vector<ResponseMatrix> matrices;
    matrices.reserve(fig.corpora.size());
    for (const auto& name : fig.corpora) {
      const fs::path dir = c.out / "query" / name;
      if (!fs::exists(dir / "responses.csv")) throw MissingUpstream(fig.id + ": corpus '" + name + "' has not been queried");
      matrices.push_back(read_corpus(dir));
    }
    FigureInputs in;
    for (std::size_t k = 0; k < matrices.size(); ++k) in.corpora.emplace_back(fig.corpora[k], &matrices[k]);
    const auto& spec = c.cfg.corpus(fig.corpora.front());
    in.group_a = spec.group_a;
    in.group_b = spec.group_b;
    const auto nom = load_scaling(c, spec.name, ScalingMethod::nominate);
    const auto pca = load_scaling(c, spec.name, ScalingMethod::pca);
    const auto irt = load_scaling(c, spec.name, ScalingMethod::irt);
    if (nom) in.nominate = &*nom;
    if (pca) in.pca = &*pca;
    if (irt) in.irt = &*irt;
    for (auto& p : emit_figure_data(in, fig.id, c.out / "report", c.header)) outs.push_back(p);
  }
  return outs;
}

struct StageDef {
  std::string name;
  std::vector<std::string> deps;
  std::vector<fs::path> (*run)(const Ctx&);
};

const std::vector<StageDef>& stage_defs() {
  static const std::vector<StageDef> defs = {
      {"ingest", {}, stage_ingest},
      {"query", {"ingest"}, stage_query},
      {"scale", {"query"}, stage_scale},
      {"metrics", {"query", "scale"}, stage_metrics},
      {"analyze", {}, stage_analyze},
      {"report", {"query", "scale", "metrics", "analyze"}, stage_report}};
  return defs;
}

json stage_settings(const PipelineConfig& cfg, const std::string& stage, std::vector<fs::path>& inputs) {
  const json full = json::parse(pipeline_config_to_json(cfg));
  json s{{"seed", cfg.seed}};
  json corpora = json::array();
  for (std::size_t k = 0; k < cfg.corpora.size(); ++k) {
    const json& cj = full["corpora"][k];
    if (stage == "ingest") {
      corpora.push_back({{"name", cj["name"]}, {"source", cj["source"]}, {"filter", cj["filter"]}});
      for (auto& f : input_files(cfg, cfg.corpora[k])) inputs.push_back(f);
    } else if (stage == "query") {
      corpora.push_back({{"name", cj["name"]}, {"query", cj["query"]}});
    } else if (stage == "scale") {
      corpora.push_back({{"name", cj["name"]}, {"methods", cj["methods"]}});
    } else if (stage == "metrics" || stage == "report") {
      corpora.push_back({{"name", cj["name"]}, {"groups", cj["groups"]}});
    }
  }
  s["corpora"] = corpora;
  if (stage == "query") {
    s["models"] = full["models"];
    s["query"] = full["query"];
  } else if (stage == "scale") {
    s["scaling"] = full["scaling"];
  } else if (stage == "analyze") {
    s["analysis"] = full["analysis"];
    if (cfg.analysis.trials_csv) {
      const fs::path p = resolve(cfg, *cfg.analysis.trials_csv);
      if (!fs::exists(p)) throw ConfigError("analysis.trials_csv not found: " + p.string());
      inputs.push_back(p);
    }
  } else if (stage == "report") {
    s["figures"] = full["figures"];
  }
  return s;
}

std::vector<std::string> closure(const std::string& target) {
  std::set<std::string> need{target};
  for (auto it = stage_defs().rbegin(); it != stage_defs().rend(); ++it)
    if (need.count(it->name))
      for (const auto& d : it->deps) need.insert(d);
  std::vector<std::string> order;
  for (const auto& d : stage_defs())
    if (need.count(d.name)) order.push_back(d.name);
  return order;
}

struct StageState {
  std::string key;
  std::map<std::string, std::string> outputs;  // relative path -> body hash
};

std::optional<StageState> read_state(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  try {
    const json j = json::parse(read_file(path));
    StageState s;
    s.key = j.at("key").get<std::string>();
    s.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    return s;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

bool intact(const Ctx& c, const StageState& s) {
  for (const auto& [relpath, hash] : s.outputs) {
    const fs::path p = c.out / relpath;
    if (!fs::exists(p)) return false;
    try {
      if (output_body_hash(p) != hash) return false;
    } catch (const std::exception&) {
      return false;
    }
  }
  return true;
}

std::string describe(const std::exception& e) {
  if (const auto* ie = dynamic_cast<const Error*>(&e)) return std::string(ie->kind()) + ": " + e.what();
  return e.what();
}

}  // namespace

RunManifest run_pipeline(const PipelineConfig& config, const PipelineOptions& options,
                         const std::vector<fs::path>& extra_inputs) {
  const auto& names = pipeline_stages();
  if (std::find(names.begin(), names.end(), options.target) == names.end())
    throw ConfigError("unknown stage '" + options.target + "'");

  Ctx c;
  c.cfg = config;
  if (options.seed) {
    c.cfg.seed = *options.seed;
    c.cfg.nominate.seed = *options.seed;
    c.cfg.irt.seed = *options.seed;
  }
  if (!options.providers.empty()) {
    std::vector<ModelSpec> kept;
    for (const auto& m : c.cfg.models)
      if (std::find(options.providers.begin(), options.providers.end(), m.id) != options.providers.end() ||
          std::find(options.providers.begin(), options.providers.end(), m.provider.provider_id) !=
              options.providers.end())
        kept.push_back(m);
    if (kept.empty()) throw ConfigError("--providers matched no configured model");
    c.cfg.models = std::move(kept);
  }
  c.out = options.out_dir ? *options.out_dir : resolve(c.cfg, c.cfg.out_dir);
  c.force = options.force;
  const std::string config_hash = sha256_hex(pipeline_config_to_json(c.cfg));
  c.header = config_header(config_hash);

  SystemClock system_clock;
  Clock& clock = options.clock ? *options.clock : system_clock;

  RunManifest manifest;
  manifest.command = options.command;
  manifest.config_hash = config_hash;
  manifest.seed = c.cfg.seed;
  manifest.started_at = clock.now();
  std::set<std::string> input_seen;
  auto note_input = [&](const fs::path& p) {
    if (input_seen.insert(p.generic_string()).second) manifest.input_hashes.push_back({p.generic_string(), sha256_file(p)});
  };
  for (const auto& p : extra_inputs) note_input(p);

  fs::create_directories(c.out / ".state");
  std::map<std::string, std::string> keys;
  std::set<std::string> all_outputs;

  auto finish = [&] {
    manifest.output_paths.assign(all_outputs.begin(), all_outputs.end());
    manifest.finished_at = clock.now();
    write_file_atomic(c.out / "manifest.json", manifest.to_json());
  };

  for (const auto& name : closure(options.target)) {
    const StageDef& def = *std::find_if(stage_defs().begin(), stage_defs().end(),
                                        [&](const StageDef& d) { return d.name == name; });
    std::vector<fs::path> inputs;
    const json settings = stage_settings(c.cfg, name, inputs);
    std::string material = name + "\n" + settings.dump() + "\n";
    for (const auto& d : def.deps) material += d + "=" + keys.at(d) + "\n";
    for (const auto& p : inputs) {
      note_input(p);
      material += p.generic_string() + "=" + sha256_file(p) + "\n";
    }
    const std::string key = sha256_hex(material);
    keys[name] = key;

    const fs::path state_path = c.out / ".state" / (name + ".json");
    const auto previous = read_state(state_path);
    if (!c.force && previous && previous->key == key && intact(c, *previous)) {
      for (const auto& [relpath, hash] : previous->outputs) {
        restamp_output(c.out / relpath, c.header);
        all_outputs.insert(relpath);
      }
      manifest.stages.push_back({name, "skipped", key, ""});
      continue;
    }

    if (previous)
      for (const auto& [relpath, hash] : previous->outputs) fs::remove(c.out / relpath);
    fs::remove(state_path);
    try {
      const auto produced = def.run(c);
      StageState st{key, {}};
      for (const auto& p : produced) {
        restamp_output(p, c.header);
        const std::string r = rel(c, p).generic_string();
        st.outputs[r] = output_body_hash(p);
        all_outputs.insert(r);
      }
      json sj{{"key", st.key}, {"outputs", st.outputs}};
      write_file_atomic(state_path, sj.dump(2) + "\n");
      manifest.stages.push_back({name, "ran", key, ""});
    } catch (const std::exception& e) {
      manifest.stages.push_back({name, "failed", key, describe(e)});
      finish();
      throw StageFailure("stage " + name + " failed: " + describe(e));
    }
  }
  finish();
  return manifest;
}

RunManifest run_pipeline(const fs::path& config_path, const PipelineOptions& options) {
  const PipelineConfig cfg = load_pipeline_config(config_path);
  return run_pipeline(cfg, options, {config_path});
}

}  // namespace ideo
