#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace edgenas {

/// Milliseconds since the Unix epoch, UTC.
using TimestampMs = std::int64_t;
TimestampMs now_ms();

/// Logical accounts. Optimizer writes architectures and benchmark results,
/// the edge agent writes measurements only, and every role may read.
enum class Role { optimizer, edge_agent, reader };
std::string_view role_name(Role role);

inline constexpr int kSchemaVersion = 1;
inline const std::vector<int> kDefaultBatchSizes{1, 2, 4, 8};

struct ArchitectureRecord {
  std::int64_t id = 0;
  std::string run_id;
  int lineage_id = 0;
  std::string spec_document;
  std::vector<std::string> device_targets;
  TimestampMs created_at = 0;
};

struct EdgeMeasurement {
  std::int64_t id = 0;
  std::int64_t architecture_id = 0;
  std::string device_type;
  int batch_size = 1;
  double latency_ms_mean = 0.0;
  double latency_ms_std = 0.0;
  int num_runs = 0;
  int num_warmup = 0;
  double memory_mb = 0.0;
  double cpu_util = 0.0;
  double gpu_util = 0.0;
  TimestampMs measured_at = 0;
};

enum class Split { validation, test };
std::string_view split_name(Split split);

struct BenchmarkResult {
  std::int64_t id = 0;
  std::int64_t architecture_id = 0;
  std::string run_id;
  int epoch = 0;
  double val_loss = 0.0;
  double inference_time_ms = 0.0;
  double score = 0.0;
  Split split = Split::validation;
  TimestampMs created_at = 0;
};

struct ResultWithArchitecture {
  BenchmarkResult result;
  ArchitectureRecord architecture;
};

struct RunMetadata {
  std::string run_id;
  std::string config_document;
  std::uint64_t seed = 0;
  int budget = 0;
  int population_size = 0;
  std::string status;
  TimestampMs started_at = 0;
  std::optional<TimestampMs> finished_at;
  std::optional<std::string> summary_document;
  std::optional<std::string> history_document;
};

/// Published DDL (core/sql/schema_v1.sql), compiled in.
std::string_view schema_ddl();

/// Environment variable that overrides the configured store location.
inline constexpr const char* kStoreEnvVar = "EDGENAS_STORE";

/// Resolves the store target: explicit flag, then $EDGENAS_STORE, then the
/// configured value. Throws ConfigError if none is set or a server URL is
/// given (only embedded single-file stores are built in).
std::string resolve_store_target(const std::optional<std::string>& flag,
                                 const std::string& configured);

/// Handle to the shared relational store. Every operation runs in its own
/// transaction; a single handle may be shared between threads, and several
/// processes may open the same file concurrently.
class Store {
 public:
  /// Opens (creating if needed) an embedded store file. Does not create the
  /// schema; call init_schema() or require_schema().
  explicit Store(const std::string& path);
  ~Store();
  Store(Store&&) noexcept;
  Store& operator=(Store&&) noexcept;
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const std::string& path() const;

  /// Creates missing tables. Returns true if anything was created. Throws
  /// SchemaVersionError when the file carries a different schema version.
  bool init_schema();
  int schema_version();
  /// Throws SchemaVersionError unless the schema is at kSchemaVersion.
  void require_schema();

  /// Idempotent on (run_id, lineage_id, spec_document): returns the existing
  /// id for a duplicate. The document is stored in canonical form.
  std::int64_t insert_architecture(Role role, const ArchitectureRecord& record);

  /// Architectures targeting `device_type` that lack a measurement for at
  /// least one of `batch_sizes` on that device, oldest first.
  std::vector<ArchitectureRecord> poll_unmeasured(
      Role role, std::string_view device_type, std::size_t limit,
      const std::vector<int>& batch_sizes = kDefaultBatchSizes);

  /// Last-writer-wins on (architecture_id, device_type, batch_size).
  std::int64_t insert_measurement(Role role, const EdgeMeasurement& measurement);

  std::vector<EdgeMeasurement> get_measurements(std::int64_t architecture_id,
                                                std::string_view device_type);

  /// Rejects rows whose score differs from val_loss * 1000 + inference time.
  std::int64_t insert_benchmark_result(Role role, const BenchmarkResult& result);
  std::vector<ResultWithArchitecture> query_results(std::string_view run_id);

  std::optional<ArchitectureRecord> get_architecture(std::int64_t id);
  std::vector<ArchitectureRecord> list_architectures(std::string_view run_id);

  void put_run_metadata(Role role, const RunMetadata& meta);
  std::optional<RunMetadata> get_run_metadata(std::string_view run_id);
  std::vector<std::string> list_run_ids();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace edgenas
