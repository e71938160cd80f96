#include "commands.hpp"

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "edgenas/coordinator.hpp"
#include "edgenas/edge_agent.hpp"
#include "edgenas/error.hpp"
#include "edgenas/report.hpp"
#include "edgenas/store.hpp"

namespace edgenas::cli {

namespace {

CliConfig load(const GlobalOptions& global) {
  return global.config_path.empty() ? CliConfig{} : load_config(global.config_path);
}

Store open_store(const GlobalOptions& global, const CliConfig& cfg) {
  Store store(resolve_store_target(global.store, cfg.store_path));
  store.require_schema();
  return store;
}

DispatchSettings dispatch_settings(const CliConfig& cfg) {
  DispatchSettings s;
  s.device_type = cfg.agent.device_type;
  s.batch_sizes = cfg.agent.batch_sizes;
  s.score_batch_size = cfg.run.score_batch_size;
  s.epochs = cfg.run.epochs;
  s.measurement_timeout_s = cfg.run.measurement_timeout_s;
  s.measurement_poll_ms = cfg.measurement_poll_ms;
  return s;
}

// Runs a simulated edge agent on its own store connection until destroyed.
class EmbeddedAgent {
 public:
  EmbeddedAgent(const std::string& store_path, const CliConfig& cfg) : config_(cfg.agent) {
    config_.backend.kind = BackendConfig::Kind::simulated;
    backend_ = make_backend(config_.backend);
    store_.emplace(store_path);
    thread_ = std::jthread([this](std::stop_token stop) {
      try {
        run_agent_loop(config_, *store_, *backend_, stop, LoopMode::continuous);
      } catch (const std::exception& e) {
        spdlog::error("embedded agent stopped: {}", e.what());
      }
    });
  }

 private:
  AgentConfig config_;
  std::unique_ptr<MeasurementBackend> backend_;
  std::optional<Store> store_;
  std::jthread thread_;  // declared last: joins before the members it uses go away
};

std::unique_ptr<TrainerBackend> make_trainer(const CliConfig& cfg, bool external) {
  if (external) {
    if (cfg.trainer.command.argv.empty()) {
      throw ConfigError("trainer.command", "required for --mode external");
    }
    return std::make_unique<ExternalTrainer>(cfg.trainer.command);
  }
  return std::make_unique<SimulatedTrainer>(cfg.surrogate,
                                            std::chrono::milliseconds(cfg.trainer.duration_ms));
}

std::string pick_run_id(Store& store, const RunConfig& run, const std::string& requested) {
  if (!requested.empty()) {
    if (store.get_run_metadata(requested)) {
      throw ConfigError("--run-id", "run '" + requested + "' already exists in the store");
    }
    return requested;
  }
  const std::string base =
      fmt::format("run-s{}-n{}-p{}", run.seed, run.total_evaluations, run.population_size);
  std::string id = base;
  for (int k = 2; store.get_run_metadata(id); ++k) id = fmt::format("{}-{}", base, k);
  return id;
}

TableRow row_of(const CandidateOutcome& o) {
  TableRow r;
  r.runs = 1;
  r.val_score = o.breakdown->score;
  r.val_loss = o.breakdown->val_loss;
  r.inference_ms = o.breakdown->inference_time_ms;
  r.test_score = o.breakdown->test_score;
  r.test_loss = o.breakdown->test_loss;
  return r;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << content;
}

std::vector<std::string> resolve_run_ids(Store& store, const std::vector<std::string>& requested) {
  const auto known = store.list_run_ids();
  if (requested.empty()) return known;
  for (const auto& id : requested) {
    if (std::find(known.begin(), known.end(), id) == known.end()) {
      std::string list;
      for (const auto& k : known) list += (list.empty() ? "" : ", ") + k;
      throw ConfigError("--run-ids", "unknown run id '" + id + "'; known run ids: " +
                                         (list.empty() ? "(none)" : list));
    }
  }
  return requested;
}

RunHistory load_history(Store& store, const std::string& run_id) {
  const auto meta = store.get_run_metadata(run_id);
  if (!meta || !meta->history_document) {
    throw Error("run '" + run_id + "' has no recorded history (status: " +
                (meta ? meta->status : std::string("missing")) + ")");
  }
  return history_from_json(nlohmann::json::parse(*meta->history_document));
}

}  // namespace

int cmd_init_store(const GlobalOptions& global) {
  const CliConfig cfg = load(global);
  Store store(resolve_store_target(global.store, cfg.store_path));
  const bool created = store.init_schema();
  std::cout << "store " << store.path() << ": schema version " << store.schema_version()
            << (created ? " (created)" : " (already initialized)") << "\n";
  return kExitOk;
}

int cmd_run(const GlobalOptions& global, const RunOptions& options) {
  CliConfig cfg = load(global);
  if (options.samples) cfg.run.total_evaluations = *options.samples;
  if (options.population) cfg.run.population_size = *options.population;
  if (options.seed) cfg.run.seed = *options.seed;
  if (cfg.run.total_evaluations < cfg.run.population_size) {
    std::cerr << "error: --samples (" << cfg.run.total_evaluations
              << ") must be at least --population (" << cfg.run.population_size << ")\n";
    return kExitUsage;
  }
  const bool external = options.mode == "external";

  Store store = open_store(global, cfg);
  auto trainer = make_trainer(cfg, external);
  DispatchSettings settings = dispatch_settings(cfg);
  settings.run_id = pick_run_id(store, cfg.run, options.run_id);

  std::optional<EmbeddedAgent> agent;
  if (!external && !options.no_embedded_agent) agent.emplace(store.path(), cfg);

  spdlog::info("run {}: {} evaluations, population {}, seed {}", settings.run_id,
               cfg.run.total_evaluations, cfg.run.population_size, cfg.run.seed);
  const RunSummary summary = run_nas(cfg.run, settings, store, *trainer);
  agent.reset();

  if (!options.history_csv.empty()) {
    std::ofstream out(options.history_csv, std::ios::binary);
    if (!out) throw Error("cannot write " + options.history_csv);
    write_history_csv(out, summary.run_id, summary.history);
  }
  if (!options.summary_json.empty()) {
    write_file(options.summary_json, summary_document(summary).dump(2) + "\n");
  }

  std::cout << "run " << summary.run_id << ": " << summary.ok_count << " ok, "
            << summary.failed_count << " failed\n";
  std::cout << format_table_header() << "\n";
  if (const auto* best = summary.best()) {
    const auto& b = *best->evaluation.breakdown;
    TableRow row{cfg.run.total_evaluations, 1, b.score, b.val_loss, b.inference_time_ms,
                 b.test_score, b.test_loss};
    std::cout << format_table_row(row) << "\n";
  }
  if (summary.ok_count == 0) {
    std::cerr << "error: no candidate was evaluated successfully\n";
    return kExitFailure;
  }
  return kExitOk;
}

int cmd_baseline(const GlobalOptions& global, bool no_embedded_agent) {
  const CliConfig cfg = load(global);
  Store store = open_store(global, cfg);
  SimulatedTrainer trainer(cfg.surrogate, std::chrono::milliseconds(cfg.trainer.duration_ms));
  std::optional<EmbeddedAgent> agent;
  if (!no_embedded_agent) agent.emplace(store.path(), cfg);
  if (store.get_run_metadata(kBaselineRunId)) {
    spdlog::warn("replacing the recorded baseline run");
  }
  const CandidateOutcome outcome = evaluate_baseline(dispatch_settings(cfg), store, trainer);
  agent.reset();
  if (!outcome.breakdown) {
    std::cerr << "error: baseline evaluation failed (" << status_name(outcome.status) << "): "
              << outcome.detail << "\n";
    return kExitFailure;
  }
  std::cout << format_table_header() << "\n" << format_table_row(row_of(outcome)) << "\n";
  return kExitOk;
}

int cmd_agent(const GlobalOptions& global, const AgentOptions& options) {
  CliConfig cfg = load(global);
  if (!options.device_type.empty()) cfg.agent.device_type = options.device_type;
  Store store = open_store(global, cfg);
  auto backend = make_backend(cfg.agent.backend);

  // Signals are taken synchronously by a watcher thread so the loop can stop
  // between architectures.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  std::stop_source stop;
  std::jthread watcher([&](std::stop_token done) {
    const timespec tick{0, 200'000'000};
    while (!done.stop_requested()) {
      if (sigtimedwait(&signals, nullptr, &tick) > 0) {
        stop.request_stop();
        return;
      }
    }
  });

  const AgentStats stats = run_agent_loop(cfg.agent, store, *backend, stop.get_token(),
                                          options.once ? LoopMode::drain : LoopMode::continuous);
  watcher.request_stop();
  std::cout << "agent " << cfg.agent.device_type << ": measured " << stats.architectures_measured
            << " architectures, inserted " << stats.measurements_inserted << " rows, "
            << stats.batch_failures << " batch failures, " << stats.skipped_records
            << " skipped\n";
  return kExitOk;
}

int cmd_report(const GlobalOptions& global, const ReportOptions& options) {
  const CliConfig cfg = load(global);
  Store store = open_store(global, cfg);
  const auto run_ids = resolve_run_ids(store, options.run_ids);

  const auto emit = [&](const std::string& text) {
    if (options.out.empty() || options.out == "-") {
      std::cout << text;
    } else {
      write_file(options.out, text);
    }
  };

  if (options.kind == "summary") {
    std::vector<RunMetadata> runs;
    for (const auto& id : run_ids) runs.push_back(*store.get_run_metadata(id));
    const auto rows = summary_table(runs);
    emit(format_summary(rows) +
         "\nTest metrics are evaluated at search-time epochs; rows average the best candidate "
         "over the runs of each budget.\n");
    return kExitOk;
  }
  if (options.kind == "pareto") {
    const std::filesystem::path dir = options.out.empty() ? cfg.report_output_dir : options.out;
    std::filesystem::create_directories(dir);
    for (const auto& id : run_ids) {
      const RunHistory history = load_history(store, id);
      const auto path = dir / ("pareto_" + id + ".csv");
      std::ofstream out(path, std::ios::binary);
      if (!out) throw Error("cannot write " + path.string());
      write_pareto_csv(out, id, history.entries);
      std::cout << path.string() << "\n";
    }
    return kExitOk;
  }
  if (options.kind == "medians") {
    std::vector<HistoryEntry> entries;
    for (const auto& id : run_ids) {
      if (id == kBaselineRunId) continue;
      auto h = load_history(store, id);
      entries.insert(entries.end(), h.entries.begin(), h.entries.end());
    }
    emit(format_medians(top_decile_medians(entries)));
    return kExitOk;
  }
  // history
  std::ostringstream csv;
  bool header = true;
  for (const auto& id : run_ids) {
    write_history_csv(csv, id, load_history(store, id), header);
    header = false;
  }
  if (header) csv << kHistoryCsvHeader << '\n';
  emit(csv.str());
  return kExitOk;
}

}  // namespace edgenas::cli
