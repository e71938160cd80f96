#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <stop_token>
#include <string>
#include <vector>

#include "edgenas/cost_model.hpp"
#include "edgenas/random.hpp"
#include "edgenas/search_space.hpp"
#include "edgenas/store.hpp"
#include "edgenas/subprocess.hpp"

namespace edgenas {

/// One inference of a whole batch.
struct InferenceSample {
  double latency_ms = 0.0;
  double memory_mb = 0.0;
  double cpu_util = 0.0;
  double gpu_util = 0.0;
};

/// Times a single forward pass. Implementations throw BackendError on failure
/// and must return a strictly positive latency otherwise.
class MeasurementBackend {
 public:
  virtual ~MeasurementBackend() = default;
  virtual InferenceSample time_inference(const HyperparamSpec& spec, int batch_size,
                                         Rng& rng) = 0;
};

/// Latency from the analytic device model. `call_delay` makes each call take
/// real wall time so measurement duration can be controlled in tests.
class SimulatedBackend final : public MeasurementBackend {
 public:
  explicit SimulatedBackend(DeviceProfile profile,
                            std::chrono::microseconds call_delay = std::chrono::microseconds{0});
  InferenceSample time_inference(const HyperparamSpec& spec, int batch_size, Rng& rng) override;

 private:
  DeviceProfile profile_;
  std::chrono::microseconds call_delay_;
};

/// Delegates each call to an external command. The command receives
/// `{"spec": {...}, "batch_size": n}` on stdin and prints either a bare
/// decimal latency in ms or a JSON object with `latency_ms` and optional
/// `memory_mb`, `cpu_util`, `gpu_util`.
class ExternalBackend final : public MeasurementBackend {
 public:
  explicit ExternalBackend(CommandSpec command);
  InferenceSample time_inference(const HyperparamSpec& spec, int batch_size, Rng& rng) override;

 private:
  CommandSpec command_;
};

/// Parses one line of external-backend output. Throws BackendError.
InferenceSample parse_backend_output(std::string_view text);

std::unique_ptr<MeasurementBackend> external_backend(CommandSpec command);

struct BackendConfig {
  enum class Kind { simulated, external };
  Kind kind = Kind::simulated;
  DeviceProfile profile;
  double call_delay_ms = 0.0;  // simulated only
  CommandSpec command;         // external only
};

std::unique_ptr<MeasurementBackend> make_backend(const BackendConfig& config);

struct AgentConfig {
  std::string device_type = "sim-orin";
  std::vector<int> batch_sizes = kDefaultBatchSizes;
  int num_warmup = 3;
  int num_timed_runs = 10;
  int poll_interval_ms = 500;
  BackendConfig backend;

  /// Throws ValidationError: batch sizes must be non-empty, positive and
  /// strictly increasing; num_timed_runs >= 1.
  void check() const;
};

struct BatchFailure {
  int batch_size = 0;
  std::string reason;
};

struct MeasureReport {
  std::vector<EdgeMeasurement> rows;  // architecture_id left at 0
  std::vector<BatchFailure> failures;
};

/// Warmup calls then timed calls, per batch size. Rows carry the mean and
/// sample (n-1) standard deviation of the timed calls and usage metrics
/// averaged over them. A failing batch size is reported and skipped.
MeasureReport measure(const HyperparamSpec& spec, const AgentConfig& config,
                      MeasurementBackend& backend, Rng& rng);

/// Seed of the measurement stream for one architecture on one device. Derived
/// from content so results do not depend on processing order.
std::uint64_t measurement_seed(std::string_view spec_document, std::string_view device_type);

enum class LoopMode {
  continuous,  // until stop is requested
  drain,       // process the current backlog, then return
};

struct AgentStats {
  int polls = 0;
  int architectures_measured = 0;
  int measurements_inserted = 0;
  int batch_failures = 0;
  int skipped_records = 0;
  int store_errors = 0;
};

/// Polls the store for unmeasured architectures targeting the configured
/// device and reports one row per batch size. Records whose document cannot be
/// decoded are skipped for the lifetime of the loop, as are records that stay
/// incomplete after a measurement attempt. Store errors back off exponentially
/// up to 30 s. A stop request is honored between architectures.
AgentStats run_agent_loop(const AgentConfig& config, Store& store, MeasurementBackend& backend,
                          std::stop_token stop, LoopMode mode = LoopMode::continuous);

}  // namespace edgenas
