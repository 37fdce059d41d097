#include <csignal>
#include <cstdlib>
#include <iostream>
#include <memory>

#include <fmt/format.h>

#include "ideoscale/experiment.hpp"
#include "ideoscale/hash.hpp"
#include "ideoscale/pipeline.hpp"

#include <CLI11.hpp>

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kStageFailure = 3;

struct PipelineArgs {
  std::string config;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool force = false;
  std::vector<std::string> providers;
};

void add_pipeline_flags(CLI::App* cmd, PipelineArgs& args, bool config_required) {
  auto* c = cmd->add_option("--config", args.config, "Pipeline configuration (JSON)");
  if (config_required) c->required();
  cmd->add_option("--out-dir", args.out_dir, "Output directory (overrides the config)");
  cmd->add_option("--seed", args.seed, "Seed for every random stream (overrides the config)");
  cmd->add_flag("--force", args.force, "Re-run every stage regardless of recorded hashes");
  cmd->add_option("--providers", args.providers, "Only query these model ids or provider ids")->delimiter(',');
}

void print_manifest(const ideo::RunManifest& m, const std::filesystem::path& out) {
  for (const auto& s : m.stages) fmt::print("{:<8} {}\n", s.name, s.status);
  fmt::print("config_hash {}\n", m.config_hash);
  fmt::print("{} outputs, manifest at {}\n", m.output_paths.size(), (out / "manifest.json").string());
}

int run_stage(const std::string& target, const std::string& command, const PipelineArgs& args, const CLI::App& cmd) {
  const std::filesystem::path config_path = args.config.empty() ? std::filesystem::path(IDEO_DEMO_CONFIG) : std::filesystem::path(args.config);
  ideo::PipelineConfig cfg = ideo::load_pipeline_config(config_path);
  ideo::PipelineOptions opts;
  opts.command = command;
  opts.target = target;
  opts.force = args.force;
  opts.providers = args.providers;
  if (cmd.count("--seed")) opts.seed = args.seed;
  if (!args.out_dir.empty()) opts.out_dir = args.out_dir;
  else if (command == "demo") opts.out_dir = "demo-out";
  const auto out = opts.out_dir ? *opts.out_dir : (cfg.out_dir.is_absolute() ? cfg.out_dir : cfg.base_dir / cfg.out_dir);
  const auto manifest = ideo::run_pipeline(cfg, opts, {config_path});
  print_manifest(manifest, out);
  return kOk;
}

ideo::ExperimentApi* g_api = nullptr;

void on_signal(int) {
  if (g_api) g_api->stop();
}

int serve(const std::string& config_path, const std::string& events_dir, const std::string& host, int port) {
  ideo::ExperimentConfig cfg = ideo::default_experiment_config();
  if (!config_path.empty()) cfg = ideo::experiment_config_from_json(ideo::read_file(config_path));
  cfg.validate();
  std::map<std::string, std::unique_ptr<ideo::Provider>> owned;
  std::map<std::string, ideo::Provider*> providers;
  for (const auto& [ref, pc] : cfg.providers) {
    try {
      owned[ref] = ideo::make_provider(pc);
      providers[ref] = owned[ref].get();
    } catch (const ideo::Error& e) {
      fmt::print(stderr, "provider {} unavailable: {}\n", ref, e.what());
    }
  }
  const char* token = std::getenv("IDEO_EXPORT_TOKEN");
  if (!token || !*token) fmt::print(stderr, "IDEO_EXPORT_TOKEN is not set; /export will refuse every request\n");
  ideo::SystemClock clock;
  ideo::EventStore store(events_dir);
  ideo::ExperimentService service(cfg, store, clock, providers);
  ideo::ExperimentApi api(service, token ? token : "");
  g_api = &api;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  fmt::print("serving on {}:{} (events in {})\n", host, port, events_dir);
  std::fflush(stdout);
  api.serve(host, port);
  g_api = nullptr;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ideological scaling of legislators, justices, voters and language models"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* target;
    const char* help;
  };
  const Sub subs[] = {{"ingest", "ingest", "Load and filter the configured corpora"},
                      {"query", "query", "Query the configured models on every item"},
                      {"scale", "scale", "Fit the configured scaling models"},
                      {"metrics", "metrics", "Alignment, variance and separability metrics"},
                      {"analyze", "analyze", "Experiment regressions (recorded or simulated trials)"},
                      {"report", "report", "Run everything and write figure data"}};
  std::vector<std::pair<CLI::App*, const Sub*>> pipeline_cmds;
  PipelineArgs args;
  for (const auto& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_pipeline_flags(cmd, args, true);
    pipeline_cmds.emplace_back(cmd, &s);
  }
  auto* demo = app.add_subcommand("demo", "Full pipeline on the bundled synthetic fixtures with mock models");
  add_pipeline_flags(demo, args, false);

  std::string exp_config, events_dir = "events", host = "127.0.0.1";
  int port = 8080;
  auto* srv = app.add_subcommand("serve", "Run the experiment HTTP API");
  srv->add_option("--config", exp_config, "Experiment configuration (JSON); defaults to the built-in design");
  srv->add_option("--events-dir", events_dir, "Directory for the append-only session logs");
  srv->add_option("--host", host, "Bind address");
  srv->add_option("--port", port, "Port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    for (const auto& [cmd, s] : pipeline_cmds)
      if (cmd->parsed()) return run_stage(s->target, s->name, args, *cmd);
    if (demo->parsed()) return run_stage("report", "demo", args, *demo);
    if (srv->parsed()) return serve(exp_config, events_dir, host, port);
  } catch (const ideo::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfigError;
  } catch (const ideo::ConfigInvalid& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfigError;
  } catch (const ideo::StageFailure& e) {
    fmt::print(stderr, "{}\n", e.what());
    return kStageFailure;
  } catch (const ideo::Error& e) {
    fmt::print(stderr, "{}: {}\n", e.kind(), e.what());
    return kStageFailure;
  }
  return kOk;
}
