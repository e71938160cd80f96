#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "edgenas/cost_model.hpp"
#include "edgenas/optimizer.hpp"
#include "edgenas/store.hpp"
#include "edgenas/subprocess.hpp"

namespace edgenas {

struct TrainResult {
  double val_loss = 0.0;
  std::optional<double> test_loss;
};

/// Trains a candidate and reports its losses. Called concurrently; throws on
/// failure.
class TrainerBackend {
 public:
  virtual ~TrainerBackend() = default;
  virtual TrainResult train_and_validate(const HyperparamSpec& spec, int epochs,
                                         std::uint64_t seed) = 0;
};

/// Losses from the planted-optimum surrogate, optionally padded with real
/// sleep to emulate training time. Validation and test noise use independent
/// streams of `seed`.
class SimulatedTrainer final : public TrainerBackend {
 public:
  explicit SimulatedTrainer(SurrogateConfig config,
                            std::chrono::milliseconds duration = std::chrono::milliseconds{0});
  TrainResult train_and_validate(const HyperparamSpec& spec, int epochs,
                                 std::uint64_t seed) override;

 private:
  SurrogateConfig config_;
  std::chrono::milliseconds duration_;
};

/// Runs a command with `{<spec fields>, "epochs": n, "seed": s}` on stdin and
/// expects `{"val_loss": x, "test_loss": y?}` on stdout. Nonzero exit, timeout
/// or unparseable output is a failure.
class ExternalTrainer final : public TrainerBackend {
 public:
  explicit ExternalTrainer(CommandSpec command);
  TrainResult train_and_validate(const HyperparamSpec& spec, int epochs,
                                 std::uint64_t seed) override;

 private:
  CommandSpec command_;
};

/// Everything a dispatcher needs besides the candidate itself.
struct DispatchSettings {
  std::string run_id;
  std::string device_type = "sim-orin";
  std::vector<int> batch_sizes = kDefaultBatchSizes;
  int score_batch_size = 1;
  int epochs = 2;
  double measurement_timeout_s = 600.0;
  int measurement_poll_ms = 250;

  void check() const;
};

enum class CandidateStatus { ok, trainer_failed, measurement_timeout };
std::string_view status_name(CandidateStatus status);

struct CandidateTimings {
  double train_wall_ms = 0.0;
  double measure_wait_ms = 0.0;  // waiting for measurements after training
  double total_wall_ms = 0.0;
};

struct CandidateOutcome {
  std::int64_t architecture_id = 0;
  HyperparamSpec spec;
  std::optional<ScoreBreakdown> breakdown;
  CandidateTimings timings;
  CandidateStatus status = CandidateStatus::ok;
  std::string detail;
};

/// Posts the architecture, trains it, and only then waits for the edge
/// measurements, so measurement overlaps training. Scores with the
/// score_batch_size row and records validation (and test, when available)
/// benchmark rows. Failures are reported in the outcome, not thrown.
CandidateOutcome dispatch_candidate(const HyperparamSpec& spec, int lineage_id,
                                    std::uint64_t seed, const DispatchSettings& settings,
                                    Store& store, TrainerBackend& trainer);

struct RunSummary {
  std::string run_id;
  RunConfig config;
  RunHistory history;
  int ok_count = 0;
  int failed_count = 0;
  double total_wall_ms = 0.0;

  const HistoryEntry* best() const { return history.best(); }
};

/// Runs the evolutionary search with dispatch_candidate as the evaluator and
/// persists run metadata (config, history, summary). Throws SchemaVersionError
/// or StoreError if the store is unusable at start.
RunSummary run_nas(const RunConfig& config, const DispatchSettings& settings, Store& store,
                   TrainerBackend& trainer);

inline constexpr const char* kBaselineRunId = "baseline";

/// Sends the hand-designed baseline through the same pipeline under run id
/// "baseline" and records it as a zero-sample run.
CandidateOutcome evaluate_baseline(const DispatchSettings& settings, Store& store,
                                   TrainerBackend& trainer);

/// {"run_id", "samples", "population", "seed", "ok", "failed", "best": {...}}
nlohmann::json summary_document(const RunSummary& summary);

}  // namespace edgenas
