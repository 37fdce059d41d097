#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ideoscale/clock.hpp"
#include "ideoscale/corpus.hpp"
#include "ideoscale/csv.hpp"
#include "ideoscale/experiment.hpp"
#include "ideoscale/llm.hpp"
#include "ideoscale/metrics.hpp"
#include "ideoscale/scaling.hpp"
#include "ideoscale/stats.hpp"

namespace ideo {

IDEO_DEFINE_ERROR(StageFailure);
IDEO_DEFINE_ERROR(MissingUpstream);

// ---------------------------------------------------------------------------
// Configuration

struct CorpusSource {
  // synthetic_spatial | synthetic_court | synthetic_survey | corpus_dir |
  // congress | scotus | ces
  std::string type;
  std::size_t actors = 100;
  std::size_t items = 120;
  int dims = 2;
  double beta = 8.0;
  std::vector<double> dim_weights = {1.0, 0.5};
  std::filesystem::path path;         // corpus_dir and adapters
  std::filesystem::path orientation;  // adapters
  std::filesystem::path extra;        // scotus justice roster, ces codebook
};

struct CorpusSpec {
  std::string name;
  CorpusSource source;
  FilterOptions filter;
  bool query = true;  // add model actors
  std::vector<ScalingMethod> methods;
  std::string group_a = "Democrat";
  std::string group_b = "Republican";
};

// Deterministic stand-in for a model: answers conservative with probability
// logistic(lean * 3 * polarity + noise * z) where polarity is the item's
// partisan gap in the corpus and z a hash-derived normal draw.
struct MockPolicy {
  double lean = 0.0;
  double noise = 0.5;
  double flip_rate = 0.0;     // chance a later repeat differs from the first
  double refusal_rate = 0.0;  // chance of an unparseable reply
};

struct ModelSpec {
  std::string id;  // actor id, e.g. "llm:mock-progressive"
  ProviderConfig provider;
  MockPolicy mock;
};

struct WaveSpec {
  std::string label;
  std::size_t participants = 0;
};

struct PanelSimulation {
  std::vector<WaveSpec> waves = {{"wave1", 1500}};
  double effect = 0.05;         // added to P(aligned) on treated questions
  double propensity_sd = 0.12;  // participant-level shift in P(aligned)
  double attention_pass_rate = 0.92;
  double incomplete_share = 0.025;
};

struct AnalysisSpec {
  bool enabled = true;
  std::optional<std::filesystem::path> trials_csv;  // use recorded trials instead of simulating
  PanelSimulation simulate;
  ExperimentConfig experiment = default_experiment_config();
  SeType se_type = SeType::hc1_robust;
};

struct FigureSpec {
  std::string id;                    // fig1 ... fig6
  std::vector<std::string> corpora;  // fig6 takes several
};

struct PipelineConfig {
  std::uint64_t seed = 42;
  std::filesystem::path out_dir = "out";
  std::filesystem::path base_dir;  // relative input paths resolve here
  std::vector<CorpusSpec> corpora;
  std::vector<ModelSpec> models;
  int n_repeats = 3;
  SpatialConfig nominate;
  int pca_components = 2;
  Imputation pca_imputation = Imputation::mean;
  IrtConfig irt;
  AnalysisSpec analysis;
  std::vector<FigureSpec> figures;

  const CorpusSpec& corpus(std::string_view name) const;  // throws ConfigError
};

// Unknown keys and malformed values raise ConfigError.
PipelineConfig pipeline_config_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
// Canonical form (sorted keys, no out_dir); the basis of config_hash.
std::string pipeline_config_to_json(const PipelineConfig& config);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Run manifest

struct StageRecord {
  std::string name;
  std::string status;  // ran | skipped | failed
  std::string key;
  std::string error;
};

struct InputHash {
  std::string path;
  std::string sha256;
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::vector<InputHash> input_hashes;
  std::vector<std::string> output_paths;  // relative to the output directory
  double started_at = 0.0;
  double finished_at = 0.0;
  std::uint64_t seed = 0;
  std::vector<StageRecord> stages;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
  const StageRecord* stage(std::string_view name) const;
};

// ingest, query, scale, metrics, analyze, report
const std::vector<std::string>& pipeline_stages();

struct PipelineOptions {
  std::string command = "run";
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::vector<std::string> providers;  // restrict models by id or provider_id
  std::string target = "report";       // last stage; its dependencies run too
  Clock* clock = nullptr;              // manifest timestamps
};

// Runs the target stage and everything it depends on. A stage is skipped
// when its key (own settings, seed, upstream keys and input hashes) is
// unchanged and its recorded outputs are intact. Outputs of skipped stages
// are restamped with the current config hash. On a stage error the manifest
// is written with that stage marked failed and StageFailure is thrown.
RunManifest run_pipeline(const std::filesystem::path& config_path, const PipelineOptions& options = {});
RunManifest run_pipeline(const PipelineConfig& config, const PipelineOptions& options = {},
                         const std::vector<std::filesystem::path>& extra_inputs = {});

// Header line carried by every output: "config_hash=<hex>".
std::string config_header(const std::string& config_hash);
// Rewrites the header of a CSV/text file (first "# " line) or JSON file
// ("header" field, or usermeta.header for plot specs).
void restamp_output(const std::filesystem::path& path, const std::string& header);
// Hash of a file's contents with its header removed.
std::string output_body_hash(const std::filesystem::path& path);
std::optional<std::string> read_output_header(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Model querying with mock providers

// Partisan gap per item: mean code of actors whose group mentions
// "Republican" minus that of actors whose group mentions "Democrat".
std::map<std::string, double> item_polarity(const ResponseMatrix& matrix);
MockProvider::Responder mock_responder(const ModelSpec& model, const ResponseMatrix& matrix);

// ---------------------------------------------------------------------------
// Experiment panel simulation

struct PanelSummary {
  std::size_t participants = 0;
  std::size_t completed = 0;
  std::vector<TrialRecord> trials;
};

// Drives simulated participants through the service (pretreatment, display,
// chat, timer, vote) with deterministic draws from `seed`.
PanelSummary simulate_panel(ExperimentService& service, Clock& clock, const PanelSimulation& sim,
                            const std::string& wave_label, std::size_t participants, std::size_t id_offset,
                            std::uint64_t seed);

// ---------------------------------------------------------------------------
// Figure data

struct FigureInputs {
  std::vector<std::pair<std::string, const ResponseMatrix*>> corpora;  // first is primary
  const ScalingResult* nominate = nullptr;
  const ScalingResult* pca = nullptr;
  const ScalingResult* irt = nullptr;
  std::string group_a = "Democrat";
  std::string group_b = "Republican";
  std::string strong_a = "Strong Democrat";
  std::string strong_b = "Strong Republican";
};

struct FigureData {
  std::string id;
  csv::Row header;
  std::vector<csv::Row> rows;
  std::string plot_spec;  // Vega-Lite JSON reading <id>.csv
};

FigureData figure_data(const FigureInputs& inputs, std::string_view figure_id);  // throws MissingUpstream
// Writes <dir>/<id>.csv and <dir>/<id>.vl.json; returns both paths.
std::vector<std::filesystem::path> emit_figure_data(const FigureInputs& inputs, std::string_view figure_id,
                                                    const std::filesystem::path& dir,
                                                    std::string_view header_comment = {});

}  // namespace ideo
