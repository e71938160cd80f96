#include "edgenas/store.hpp"

#include <sqlite3.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>

#include <nlohmann/json.hpp>

#include "edgenas/error.hpp"
#include "edgenas/search_space.hpp"

namespace edgenas {

TimestampMs now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::string_view role_name(Role role) {
  switch (role) {
    case Role::optimizer: return "optimizer";
    case Role::edge_agent: return "edge_agent";
    case Role::reader: return "reader";
  }
  return "?";
}

std::string_view split_name(Split split) {
  return split == Split::validation ? "validation" : "test";
}

std::string resolve_store_target(const std::optional<std::string>& flag,
                                 const std::string& configured) {
  std::string target;
  if (flag && !flag->empty()) {
    target = *flag;
  } else if (const char* env = std::getenv(kStoreEnvVar); env != nullptr && *env != '\0') {
    target = env;
  } else {
    target = configured;
  }
  if (target.empty()) {
    throw ConfigError("store.path", "no store configured (use --store, $" +
                                        std::string(kStoreEnvVar) + " or store.path)");
  }
  if (target.find("://") != std::string::npos) {
    throw ConfigError("store.path", "server URL '" + target +
                                        "' given, but this build supports embedded store files only");
  }
  return target;
}

namespace {

class Statement {
 public:
  Statement(sqlite3* db, std::string_view sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql.data(), static_cast<int>(sql.size()), &stmt_, nullptr) !=
        SQLITE_OK) {
      throw StoreError(std::string("prepare failed: ") + sqlite3_errmsg(db));
    }
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int idx, std::int64_t v) {
    check(sqlite3_bind_int64(stmt_, idx, v));
    return *this;
  }
  Statement& bind(int idx, int v) { return bind(idx, static_cast<std::int64_t>(v)); }
  Statement& bind(int idx, double v) {
    check(sqlite3_bind_double(stmt_, idx, v));
    return *this;
  }
  Statement& bind(int idx, std::string_view v) {
    check(sqlite3_bind_text(stmt_, idx, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    return *this;
  }
  Statement& bind_null(int idx) {
    check(sqlite3_bind_null(stmt_, idx));
    return *this;
  }
  template <class T>
  Statement& bind(int idx, const std::optional<T>& v) {
    return v ? bind(idx, *v) : bind_null(idx);
  }

  /// Returns true while a row is available.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw StoreError(std::string("step failed: ") + sqlite3_errmsg(db_));
  }

  std::int64_t int64(int col) const { return sqlite3_column_int64(stmt_, col); }
  int integer(int col) const { return sqlite3_column_int(stmt_, col); }
  double real(int col) const { return sqlite3_column_double(stmt_, col); }
  bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }
  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? std::string(reinterpret_cast<const char*>(p),
                           static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
             : std::string();
  }

 private:
  void check(int rc) {
    if (rc != SQLITE_OK) throw StoreError(std::string("bind failed: ") + sqlite3_errmsg(db_));
  }

  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw StoreError(msg);
  }
}

class Transaction {
 public:
  Transaction(sqlite3* db, bool write) : db_(db) {
    exec(db_, write ? "BEGIN IMMEDIATE" : "BEGIN");
  }
  ~Transaction() {
    if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  Transaction(const Transaction&) = delete;
  Transaction& operator=(const Transaction&) = delete;
  void commit() {
    exec(db_, "COMMIT");
    done_ = true;
  }

 private:
  sqlite3* db_;
  bool done_ = false;
};

void require_role(Role actual, Role wanted, std::string_view table) {
  if (actual != wanted) {
    throw PermissionDenied("role '" + std::string(role_name(actual)) +
                           "' may not insert into " + std::string(table));
  }
}

std::string targets_to_text(const std::vector<std::string>& targets) {
  return nlohmann::json(targets).dump();
}

std::vector<std::string> targets_from_text(const std::string& text) {
  auto doc = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
  std::vector<std::string> out;
  if (!doc.is_array()) return out;
  for (const auto& t : doc) {
    if (t.is_string()) out.push_back(t.get<std::string>());
  }
  return out;
}

constexpr const char* kArchColumns =
    "a.id, a.run_id, a.lineage_id, a.spec_document, a.device_targets, a.created_at";

ArchitectureRecord read_arch(const Statement& st, int offset = 0) {
  ArchitectureRecord r;
  r.id = st.int64(offset + 0);
  r.run_id = st.text(offset + 1);
  r.lineage_id = st.integer(offset + 2);
  r.spec_document = st.text(offset + 3);
  r.device_targets = targets_from_text(st.text(offset + 4));
  r.created_at = st.int64(offset + 5);
  return r;
}

constexpr const char* kMeasurementColumns =
    "id, architecture_id, device_type, batch_size, latency_ms_mean, latency_ms_std, num_runs, "
    "num_warmup, memory_mb, cpu_util, gpu_util, measured_at";

EdgeMeasurement read_measurement(const Statement& st) {
  EdgeMeasurement m;
  m.id = st.int64(0);
  m.architecture_id = st.int64(1);
  m.device_type = st.text(2);
  m.batch_size = st.integer(3);
  m.latency_ms_mean = st.real(4);
  m.latency_ms_std = st.real(5);
  m.num_runs = st.integer(6);
  m.num_warmup = st.integer(7);
  m.memory_mb = st.real(8);
  m.cpu_util = st.real(9);
  m.gpu_util = st.real(10);
  m.measured_at = st.int64(11);
  return m;
}

bool architecture_exists(sqlite3* db, std::int64_t id) {
  Statement st(db, "SELECT 1 FROM network_architecture WHERE id = ?1");
  st.bind(1, id);
  return st.step();
}

}  // namespace

struct Store::Impl {
  std::string path;
  sqlite3* db = nullptr;
  std::mutex mu;

  ~Impl() {
    if (db) sqlite3_close_v2(db);
  }
};

Store::Store(const std::string& path) : impl_(std::make_unique<Impl>()) {
  impl_->path = path;
  const int flags = SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX;
  if (sqlite3_open_v2(path.c_str(), &impl_->db, flags, nullptr) != SQLITE_OK) {
    std::string msg = impl_->db ? sqlite3_errmsg(impl_->db) : "out of memory";
    throw StoreError("cannot open store '" + path + "': " + msg);
  }
  sqlite3_busy_timeout(impl_->db, 15000);
  exec(impl_->db, "PRAGMA foreign_keys = ON");
  // WAL lets the polling agent read while the coordinator writes.
  sqlite3_exec(impl_->db, "PRAGMA journal_mode = WAL", nullptr, nullptr, nullptr);
  exec(impl_->db, "PRAGMA synchronous = NORMAL");
}

Store::~Store() = default;
Store::Store(Store&&) noexcept = default;
Store& Store::operator=(Store&&) noexcept = default;

const std::string& Store::path() const { return impl_->path; }

int Store::schema_version() {
  std::lock_guard lock(impl_->mu);
  Statement st(impl_->db, "PRAGMA user_version");
  return st.step() ? st.integer(0) : 0;
}

bool Store::init_schema() {
  std::lock_guard lock(impl_->mu);
  Transaction tx(impl_->db, true);
  int version = 0;
  {
    Statement st(impl_->db, "PRAGMA user_version");
    if (st.step()) version = st.integer(0);
  }
  if (version > kSchemaVersion) {
    throw SchemaVersionError("store '" + impl_->path + "' has schema version " +
                             std::to_string(version) + "; this build supports version " +
                             std::to_string(kSchemaVersion));
  }
  if (version == kSchemaVersion) {
    tx.commit();
    return false;
  }
  {
    Statement st(impl_->db, "SELECT count(*) FROM sqlite_master WHERE type = 'table'");
    if (st.step() && st.integer(0) > 0) {
      throw SchemaVersionError("store '" + impl_->path +
                               "' contains unversioned tables; refusing to initialize");
    }
  }
  exec(impl_->db, std::string(schema_ddl()).c_str());
  exec(impl_->db, ("PRAGMA user_version = " + std::to_string(kSchemaVersion)).c_str());
  tx.commit();
  return true;
}

void Store::require_schema() {
  const int version = schema_version();
  if (version == kSchemaVersion) return;
  if (version == 0) {
    throw SchemaVersionError("store '" + impl_->path + "' is not initialized (run init-store)");
  }
  throw SchemaVersionError("store '" + impl_->path + "' has schema version " +
                           std::to_string(version) + ", expected " +
                           std::to_string(kSchemaVersion));
}

std::int64_t Store::insert_architecture(Role role, const ArchitectureRecord& record) {
  require_role(role, Role::optimizer, "network_architecture");
  HyperparamSpec spec;
  try {
    spec = decode(record.spec_document);
  } catch (const DecodeError& e) {
    throw ValidationError(std::string("architecture spec_document: ") + e.what());
  }
  require_valid(spec, ValidationMode::baseline);
  if (record.device_targets.empty()) {
    throw ValidationError("architecture: device_targets must not be empty");
  }
  const std::string canonical = encode(spec);
  const TimestampMs created = record.created_at != 0 ? record.created_at : now_ms();

  std::lock_guard lock(impl_->mu);
  Transaction tx(impl_->db, true);
  {
    Statement ins(impl_->db,
                  "INSERT INTO network_architecture "
                  "(run_id, lineage_id, spec_document, device_targets, created_at) "
                  "VALUES (?1, ?2, ?3, ?4, ?5) "
                  "ON CONFLICT (run_id, lineage_id, spec_document) DO NOTHING");
    ins.bind(1, record.run_id)
        .bind(2, record.lineage_id)
        .bind(3, canonical)
        .bind(4, targets_to_text(record.device_targets))
        .bind(5, created);
    ins.step();
  }
  Statement sel(impl_->db,
                "SELECT id FROM network_architecture "
                "WHERE run_id = ?1 AND lineage_id = ?2 AND spec_document = ?3");
  sel.bind(1, record.run_id).bind(2, record.lineage_id).bind(3, canonical);
  if (!sel.step()) throw StoreError("architecture insert did not persist");
  const std::int64_t id = sel.int64(0);
  tx.commit();
  return id;
}

std::vector<ArchitectureRecord> Store::poll_unmeasured(Role /*role*/,
                                                       std::string_view device_type,
                                                       std::size_t limit,
                                                       const std::vector<int>& batch_sizes) {
  if (batch_sizes.empty()) throw ValidationError("poll_unmeasured: empty batch-size set");
  std::string in_list;
  for (std::size_t i = 0; i < batch_sizes.size(); ++i) {
    in_list += (i ? "," : "") + std::to_string(batch_sizes[i]);
  }
  const std::string sql =
      std::string("SELECT ") + kArchColumns +
      " FROM network_architecture a WHERE (SELECT count(DISTINCT m.batch_size) "
      "FROM edge_measurement m WHERE m.architecture_id = a.id AND m.device_type = ?1 "
      "AND m.batch_size IN (" + in_list + ")) < ?2 ORDER BY a.created_at, a.id";

  std::lock_guard lock(impl_->mu);
  Transaction tx(impl_->db, false);
  Statement st(impl_->db, sql);
  st.bind(1, device_type).bind(2, static_cast<std::int64_t>(batch_sizes.size()));
  std::vector<ArchitectureRecord> out;
  while (out.size() < limit && st.step()) {
    auto rec = read_arch(st);
    for (const auto& t : rec.device_targets) {
      if (t == device_type) {
        out.push_back(std::move(rec));
        break;
      }
    }
  }
  tx.commit();
  return out;
}

std::int64_t Store::insert_measurement(Role role, const EdgeMeasurement& m) {
  require_role(role, Role::edge_agent, "edge_measurement");
  if (m.device_type.empty()) throw ValidationError("measurement: empty device_type");
  if (m.batch_size < 1) throw ValidationError("measurement: batch_size must be >= 1");
  if (!(m.latency_ms_mean > 0.0) || !std::isfinite(m.latency_ms_mean)) {
    throw ValidationError("measurement: latency_ms_mean must be > 0");
  }
  if (!(m.latency_ms_std >= 0.0) || !std::isfinite(m.latency_ms_std)) {
    throw ValidationError("measurement: latency_ms_std must be >= 0");
  }
  if (m.num_runs < 1 || m.num_warmup < 0) {
    throw ValidationError("measurement: num_runs must be >= 1 and num_warmup >= 0");
  }
  if (m.memory_mb < 0.0 || m.cpu_util < 0.0 || m.gpu_util < 0.0) {
    throw ValidationError("measurement: usage metrics must be >= 0");
  }
  const TimestampMs measured = m.measured_at != 0 ? m.measured_at : now_ms();

  std::lock_guard lock(impl_->mu);
  Transaction tx(impl_->db, true);
  if (!architecture_exists(impl_->db, m.architecture_id)) {
    throw ForeignKeyError("measurement references unknown architecture " +
                          std::to_string(m.architecture_id));
  }
  {
    Statement ins(impl_->db,
                  "INSERT INTO edge_measurement (architecture_id, device_type, batch_size, "
                  "latency_ms_mean, latency_ms_std, num_runs, num_warmup, memory_mb, cpu_util, "
                  "gpu_util, measured_at) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11) "
                  "ON CONFLICT (architecture_id, device_type, batch_size) DO UPDATE SET "
                  "latency_ms_mean = excluded.latency_ms_mean, "
                  "latency_ms_std = excluded.latency_ms_std, num_runs = excluded.num_runs, "
                  "num_warmup = excluded.num_warmup, memory_mb = excluded.memory_mb, "
                  "cpu_util = excluded.cpu_util, gpu_util = excluded.gpu_util, "
                  "measured_at = excluded.measured_at");
    ins.bind(1, m.architecture_id)
        .bind(2, m.device_type)
        .bind(3, m.batch_size)
        .bind(4, m.latency_ms_mean)
        .bind(5, m.latency_ms_std)
        .bind(6, m.num_runs)
        .bind(7, m.num_warmup)
        .bind(8, m.memory_mb)
        .bind(9, m.cpu_util)
        .bind(10, m.gpu_util)
        .bind(11, measured);
    ins.step();
  }
  Statement sel(impl_->db,
                "SELECT id FROM edge_measurement WHERE architecture_id = ?1 AND "
                "device_type = ?2 AND batch_size = ?3");
  sel.bind(1, m.architecture_id).bind(2, m.device_type).bind(3, m.batch_size);
  if (!sel.step()) throw StoreError("measurement insert did not persist");
  const std::int64_t id = sel.int64(0);
  tx.commit();
  return id;
}

std::vector<EdgeMeasurement> Store::get_measurements(std::int64_t architecture_id,
                                                     std::string_view device_type) {
  std::lock_guard lock(impl_->mu);
  Statement st(impl_->db, std::string("SELECT ") + kMeasurementColumns +
                              " FROM edge_measurement WHERE architecture_id = ?1 AND "
                              "device_type = ?2 ORDER BY batch_size");
  st.bind(1, architecture_id).bind(2, device_type);
  std::vector<EdgeMeasurement> out;
  while (st.step()) out.push_back(read_measurement(st));
  return out;
}

std::int64_t Store::insert_benchmark_result(Role role, const BenchmarkResult& r) {
  require_role(role, Role::optimizer, "benchmark_result");
  if (!(r.val_loss >= 0.0) || !std::isfinite(r.val_loss)) {
    throw ValidationError("benchmark result: val_loss must be finite and >= 0");
  }
  if (!(r.inference_time_ms > 0.0) || !std::isfinite(r.inference_time_ms)) {
    throw ValidationError("benchmark result: inference_time_ms must be finite and > 0");
  }
  const double expected = r.val_loss * 1000.0 + r.inference_time_ms;
  if (!(std::abs(r.score - expected) <= 1e-9 * std::max(1.0, std::abs(expected)))) {
    throw ConsistencyError("benchmark result: score " + std::to_string(r.score) +
                           " != val_loss * 1000 + inference_time_ms = " +
                           std::to_string(expected));
  }
  const TimestampMs created = r.created_at != 0 ? r.created_at : now_ms();

  std::lock_guard lock(impl_->mu);
  Transaction tx(impl_->db, true);
  if (!architecture_exists(impl_->db, r.architecture_id)) {
    throw ForeignKeyError("benchmark result references unknown architecture " +
                          std::to_string(r.architecture_id));
  }
  Statement ins(impl_->db,
                "INSERT INTO benchmark_result (architecture_id, run_id, epoch, val_loss, "
                "inference_time_ms, score, split, created_at) "
                "VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)");
  ins.bind(1, r.architecture_id)
      .bind(2, r.run_id)
      .bind(3, r.epoch)
      .bind(4, r.val_loss)
      .bind(5, r.inference_time_ms)
      .bind(6, r.score)
      .bind(7, split_name(r.split))
      .bind(8, created);
  ins.step();
  const std::int64_t id = sqlite3_last_insert_rowid(impl_->db);
  tx.commit();
  return id;
}

std::vector<ResultWithArchitecture> Store::query_results(std::string_view run_id) {
  std::lock_guard lock(impl_->mu);
  Statement st(impl_->db,
               std::string("SELECT r.id, r.architecture_id, r.run_id, r.epoch, r.val_loss, "
                           "r.inference_time_ms, r.score, r.split, r.created_at, ") +
                   kArchColumns +
                   " FROM benchmark_result r JOIN network_architecture a "
                   "ON a.id = r.architecture_id WHERE r.run_id = ?1 ORDER BY r.id");
  st.bind(1, run_id);
  std::vector<ResultWithArchitecture> out;
  while (st.step()) {
    ResultWithArchitecture row;
    row.result.id = st.int64(0);
    row.result.architecture_id = st.int64(1);
    row.result.run_id = st.text(2);
    row.result.epoch = st.integer(3);
    row.result.val_loss = st.real(4);
    row.result.inference_time_ms = st.real(5);
    row.result.score = st.real(6);
    row.result.split = st.text(7) == "test" ? Split::test : Split::validation;
    row.result.created_at = st.int64(8);
    row.architecture = read_arch(st, 9);
    out.push_back(std::move(row));
  }
  return out;
}

std::optional<ArchitectureRecord> Store::get_architecture(std::int64_t id) {
  std::lock_guard lock(impl_->mu);
  Statement st(impl_->db,
               std::string("SELECT ") + kArchColumns + " FROM network_architecture a WHERE id = ?1");
  st.bind(1, id);
  if (!st.step()) return std::nullopt;
  return read_arch(st);
}

std::vector<ArchitectureRecord> Store::list_architectures(std::string_view run_id) {
  std::lock_guard lock(impl_->mu);
  Statement st(impl_->db, std::string("SELECT ") + kArchColumns +
                              " FROM network_architecture a WHERE run_id = ?1 "
                              "ORDER BY a.created_at, a.id");
  st.bind(1, run_id);
  std::vector<ArchitectureRecord> out;
  while (st.step()) out.push_back(read_arch(st));
  return out;
}

void Store::put_run_metadata(Role role, const RunMetadata& meta) {
  require_role(role, Role::optimizer, "run_metadata");
  if (meta.run_id.empty()) throw ValidationError("run metadata: empty run_id");
  std::lock_guard lock(impl_->mu);
  Transaction tx(impl_->db, true);
  Statement st(impl_->db,
               "INSERT INTO run_metadata (run_id, config_document, seed, budget, "
               "population_size, status, started_at, finished_at, summary_document, "
               "history_document) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10) "
               "ON CONFLICT (run_id) DO UPDATE SET config_document = excluded.config_document, "
               "seed = excluded.seed, budget = excluded.budget, "
               "population_size = excluded.population_size, status = excluded.status, "
               "started_at = excluded.started_at, finished_at = excluded.finished_at, "
               "summary_document = excluded.summary_document, "
               "history_document = excluded.history_document");
  st.bind(1, meta.run_id)
      .bind(2, meta.config_document)
      .bind(3, static_cast<std::int64_t>(meta.seed))
      .bind(4, meta.budget)
      .bind(5, meta.population_size)
      .bind(6, meta.status)
      .bind(7, meta.started_at)
      .bind(8, meta.finished_at)
      .bind(9, meta.summary_document)
      .bind(10, meta.history_document);
  st.step();
  tx.commit();
}

std::optional<RunMetadata> Store::get_run_metadata(std::string_view run_id) {
  std::lock_guard lock(impl_->mu);
  Statement st(impl_->db,
               "SELECT run_id, config_document, seed, budget, population_size, status, "
               "started_at, finished_at, summary_document, history_document "
               "FROM run_metadata WHERE run_id = ?1");
  st.bind(1, run_id);
  if (!st.step()) return std::nullopt;
  RunMetadata m;
  m.run_id = st.text(0);
  m.config_document = st.text(1);
  m.seed = static_cast<std::uint64_t>(st.int64(2));
  m.budget = st.integer(3);
  m.population_size = st.integer(4);
  m.status = st.text(5);
  m.started_at = st.int64(6);
  if (!st.is_null(7)) m.finished_at = st.int64(7);
  if (!st.is_null(8)) m.summary_document = st.text(8);
  if (!st.is_null(9)) m.history_document = st.text(9);
  return m;
}

std::vector<std::string> Store::list_run_ids() {
  std::lock_guard lock(impl_->mu);
  Statement st(impl_->db, "SELECT run_id FROM run_metadata ORDER BY started_at, run_id");
  std::vector<std::string> out;
  while (st.step()) out.push_back(st.text(0));
  return out;
}

}  // namespace edgenas
