#include "edgenas/coordinator.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <spdlog/spdlog.h>

#include "edgenas/error.hpp"

namespace edgenas {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_losses(const TrainResult& r) {
  if (!(r.val_loss >= 0.0) || !std::isfinite(r.val_loss)) {
    throw BackendError("trainer returned invalid val_loss");
  }
  if (r.test_loss && (!(*r.test_loss >= 0.0) || !std::isfinite(*r.test_loss))) {
    throw BackendError("trainer returned invalid test_loss");
  }
}

}  // namespace

SimulatedTrainer::SimulatedTrainer(SurrogateConfig config, std::chrono::milliseconds duration)
    : config_(std::move(config)), duration_(duration) {
  config_.check();
}

TrainResult SimulatedTrainer::train_and_validate(const HyperparamSpec& spec, int epochs,
                                                 std::uint64_t seed) {
  if (duration_.count() > 0) std::this_thread::sleep_for(duration_);
  Rng val_rng(derive_seed(seed, 1));
  Rng test_rng(derive_seed(seed, 2));
  TrainResult r;
  r.val_loss = synthetic_val_loss(spec, epochs, config_, val_rng);
  r.test_loss = synthetic_val_loss(spec, epochs, config_, test_rng);
  return r;
}

ExternalTrainer::ExternalTrainer(CommandSpec command) : command_(std::move(command)) {
  if (command_.argv.empty()) throw BackendError("external trainer: empty command");
}

TrainResult ExternalTrainer::train_and_validate(const HyperparamSpec& spec, int epochs,
                                                std::uint64_t seed) {
  nlohmann::json request = to_json(spec);
  request["epochs"] = epochs;
  request["seed"] = seed;
  const ProcessResult p = run_process(command_, request.dump() + "\n");
  if (p.timed_out) throw BackendError("external trainer timed out");
  if (p.exit_code != 0) {
    throw BackendError("external trainer exited with status " + std::to_string(p.exit_code));
  }
  auto doc = nlohmann::json::parse(p.stdout_text, nullptr, /*allow_exceptions=*/false);
  if (!doc.is_object() || !doc.contains("val_loss") || !doc["val_loss"].is_number()) {
    throw BackendError("external trainer: output lacks numeric 'val_loss'");
  }
  TrainResult r;
  r.val_loss = doc["val_loss"].get<double>();
  if (doc.contains("test_loss") && !doc["test_loss"].is_null()) {
    if (!doc["test_loss"].is_number()) throw BackendError("external trainer: bad 'test_loss'");
    r.test_loss = doc["test_loss"].get<double>();
  }
  return r;
}

void DispatchSettings::check() const {
  if (run_id.empty()) throw ValidationError("dispatch: empty run_id");
  if (device_type.empty()) throw ValidationError("dispatch: empty device_type");
  if (std::find(batch_sizes.begin(), batch_sizes.end(), score_batch_size) == batch_sizes.end()) {
    throw ValidationError("dispatch: score_batch_size " + std::to_string(score_batch_size) +
                          " is not one of the measured batch sizes");
  }
  if (epochs < 1) throw ValidationError("dispatch: epochs must be >= 1");
  if (!(measurement_timeout_s > 0.0)) throw ValidationError("dispatch: timeout must be > 0");
  if (measurement_poll_ms < 1) throw ValidationError("dispatch: measurement_poll_ms must be >= 1");
}

std::string_view status_name(CandidateStatus status) {
  switch (status) {
    case CandidateStatus::ok: return "ok";
    case CandidateStatus::trainer_failed: return "trainer_failed";
    case CandidateStatus::measurement_timeout: return "measurement_timeout";
  }
  return "?";
}

CandidateOutcome dispatch_candidate(const HyperparamSpec& spec, int lineage_id,
                                    std::uint64_t seed, const DispatchSettings& settings,
                                    Store& store, TrainerBackend& trainer) {
  const auto start = Clock::now();
  CandidateOutcome out;
  out.spec = spec;

  // Post first so the edge device measures while we train.
  ArchitectureRecord record;
  record.run_id = settings.run_id;
  record.lineage_id = lineage_id;
  record.spec_document = encode(spec);
  record.device_targets = {settings.device_type};
  out.architecture_id = store.insert_architecture(Role::optimizer, record);

  TrainResult trained;
  try {
    trained = trainer.train_and_validate(spec, settings.epochs, seed);
    check_losses(trained);
  } catch (const std::exception& e) {
    out.status = CandidateStatus::trainer_failed;
    out.detail = e.what();
    out.timings.train_wall_ms = ms_since(start);
    out.timings.total_wall_ms = out.timings.train_wall_ms;
    spdlog::warn("run {}: trainer failed for architecture {}: {}", settings.run_id,
                 out.architecture_id, e.what());
    return out;
  }
  out.timings.train_wall_ms = ms_since(start);

  const auto wait_start = Clock::now();
  const auto deadline =
      wait_start + std::chrono::duration_cast<Clock::duration>(
                       std::chrono::duration<double>(settings.measurement_timeout_s));
  std::optional<EdgeMeasurement> score_row;
  for (;;) {
    const auto rows = store.get_measurements(out.architecture_id, settings.device_type);
    const bool complete = std::all_of(
        settings.batch_sizes.begin(), settings.batch_sizes.end(), [&](int b) {
          return std::any_of(rows.begin(), rows.end(),
                             [b](const EdgeMeasurement& m) { return m.batch_size == b; });
        });
    if (complete) {
      for (const auto& m : rows) {
        if (m.batch_size == settings.score_batch_size) score_row = m;
      }
      break;
    }
    const auto now = Clock::now();
    if (now >= deadline) break;
    std::this_thread::sleep_for(
        std::min<Clock::duration>(std::chrono::milliseconds(settings.measurement_poll_ms),
                                  deadline - now));
  }
  out.timings.measure_wait_ms = ms_since(wait_start);

  if (!score_row) {
    out.status = CandidateStatus::measurement_timeout;
    out.detail = "no complete measurement set after " +
                 std::to_string(settings.measurement_timeout_s) + " s";
    out.timings.total_wall_ms = ms_since(start);
    spdlog::warn("run {}: measurement timeout for architecture {}", settings.run_id,
                 out.architecture_id);
    return out;
  }

  out.breakdown = ScoreBreakdown::make(trained.val_loss, score_row->latency_ms_mean,
                                       trained.test_loss);
  BenchmarkResult row;
  row.architecture_id = out.architecture_id;
  row.run_id = settings.run_id;
  row.epoch = settings.epochs;
  row.val_loss = out.breakdown->val_loss;
  row.inference_time_ms = out.breakdown->inference_time_ms;
  row.score = out.breakdown->score;
  row.split = Split::validation;
  store.insert_benchmark_result(Role::optimizer, row);
  if (out.breakdown->test_loss) {
    row.val_loss = *out.breakdown->test_loss;
    row.score = *out.breakdown->test_score;
    row.split = Split::test;
    store.insert_benchmark_result(Role::optimizer, row);
  }
  out.timings.total_wall_ms = ms_since(start);
  return out;
}

namespace {

nlohmann::json config_document(const RunConfig& c, const DispatchSettings& s) {
  return {{"population_size", c.population_size},
          {"total_evaluations", c.total_evaluations},
          {"seed", c.seed},
          {"epochs", c.epochs},
          {"score_batch_size", c.score_batch_size},
          {"measurement_timeout_s", c.measurement_timeout_s},
          {"device_type", s.device_type},
          {"batch_sizes", s.batch_sizes}};
}

}  // namespace

nlohmann::json summary_document(const RunSummary& summary) {
  nlohmann::json doc{{"run_id", summary.run_id},
                     {"samples", summary.config.total_evaluations},
                     {"population", summary.config.population_size},
                     {"seed", summary.config.seed},
                     {"ok", summary.ok_count},
                     {"failed", summary.failed_count},
                     {"total_wall_ms", summary.total_wall_ms}};
  if (const auto* best = summary.best()) {
    doc["best"] = {{"lineage", best->lineage_id},
                   {"round", best->round},
                   {"spec", to_json(best->spec)},
                   {"breakdown", to_json(*best->evaluation.breakdown)}};
  } else {
    doc["best"] = nullptr;
  }
  return doc;
}

RunSummary run_nas(const RunConfig& config, const DispatchSettings& base_settings, Store& store,
                   TrainerBackend& trainer) {
  config.check();
  DispatchSettings settings = base_settings;
  settings.epochs = config.epochs;
  settings.score_batch_size = config.score_batch_size;
  settings.measurement_timeout_s = config.measurement_timeout_s;
  settings.check();
  store.require_schema();

  const auto start = Clock::now();
  RunMetadata meta;
  meta.run_id = settings.run_id;
  meta.config_document = config_document(config, settings).dump();
  meta.seed = config.seed;
  meta.budget = config.total_evaluations;
  meta.population_size = config.population_size;
  meta.status = "running";
  meta.started_at = now_ms();
  store.put_run_metadata(Role::optimizer, meta);

  const Evaluator evaluator = [&](const HyperparamSpec& spec, const EvalContext& ctx) {
    const CandidateOutcome o =
        dispatch_candidate(spec, ctx.lineage_id, ctx.seed, settings, store, trainer);
    Evaluation e;
    e.breakdown = o.breakdown;
    e.status = std::string(status_name(o.status));
    e.architecture_id = o.architecture_id;
    return e;
  };

  RunSummary summary;
  summary.run_id = settings.run_id;
  summary.config = config;
  summary.history = run_ea(config, evaluator);
  summary.ok_count = summary.history.ok_count();
  summary.failed_count = static_cast<int>(summary.history.entries.size()) - summary.ok_count;
  summary.total_wall_ms = ms_since(start);

  meta.status = "finished";
  meta.finished_at = now_ms();
  meta.summary_document = summary_document(summary).dump();
  meta.history_document = to_json(summary.history).dump();
  store.put_run_metadata(Role::optimizer, meta);
  return summary;
}

CandidateOutcome evaluate_baseline(const DispatchSettings& base_settings, Store& store,
                                   TrainerBackend& trainer) {
  DispatchSettings settings = base_settings;
  settings.run_id = kBaselineRunId;
  settings.check();
  store.require_schema();

  const auto started = now_ms();
  const HyperparamSpec spec = default_config();
  const std::uint64_t seed = derive_seed(0, 0);
  CandidateOutcome outcome = dispatch_candidate(spec, 0, seed, settings, store, trainer);

  RunSummary summary;
  summary.run_id = settings.run_id;
  summary.config.population_size = 0;
  summary.config.total_evaluations = 0;
  summary.config.epochs = settings.epochs;
  HistoryEntry entry;
  entry.spec = spec;
  entry.accepted = true;
  entry.evaluation.breakdown = outcome.breakdown;
  entry.evaluation.status = std::string(status_name(outcome.status));
  entry.evaluation.architecture_id = outcome.architecture_id;
  summary.history.entries.push_back(entry);
  summary.history.lineages.resize(1);
  summary.history.lineages[0].trace.push_back(0);
  summary.history.evaluator_calls = 1;
  summary.ok_count = outcome.breakdown ? 1 : 0;
  summary.failed_count = 1 - summary.ok_count;
  summary.total_wall_ms = outcome.timings.total_wall_ms;

  RunMetadata meta;
  meta.run_id = settings.run_id;
  meta.config_document = nlohmann::json{{"baseline", true}, {"epochs", settings.epochs},
                                        {"device_type", settings.device_type}}
                             .dump();
  meta.budget = 0;
  meta.population_size = 0;
  meta.status = "finished";
  meta.started_at = started;
  meta.finished_at = now_ms();
  meta.summary_document = summary_document(summary).dump();
  meta.history_document = to_json(summary.history).dump();
  store.put_run_metadata(Role::optimizer, meta);
  return outcome;
}

}  // namespace edgenas
