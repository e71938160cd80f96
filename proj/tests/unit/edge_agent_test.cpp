#include <atomic>
#include <map>
#include <thread>

#include <gtest/gtest.h>
#include <sqlite3.h>

#include "edgenas/edge_agent.hpp"
#include "edgenas/error.hpp"
#include "test_support.hpp"

namespace edgenas {
namespace {

using edgenas::testing::TempDir;
using edgenas::testing::fixture;

// Returns call_index + 1 ms so warmup and timed calls are distinguishable.
class CountingBackend final : public MeasurementBackend {
 public:
  InferenceSample time_inference(const HyperparamSpec&, int batch_size, Rng&) override {
    std::lock_guard lock(mu_);
    const int n = ++calls_[batch_size];
    if (fail_batch_ == batch_size) throw BackendError("device fault");
    InferenceSample s;
    s.latency_ms = static_cast<double>(n);
    s.memory_mb = 2.0 * n;
    return s;
  }
  int calls(int batch) const {
    std::lock_guard lock(mu_);
    auto it = calls_.find(batch);
    return it == calls_.end() ? 0 : it->second;
  }
  int total() const {
    std::lock_guard lock(mu_);
    int t = 0;
    for (const auto& [b, n] : calls_) t += n;
    return t;
  }
  int fail_batch_ = -1;

 private:
  mutable std::mutex mu_;
  std::map<int, int> calls_;
};

HyperparamSpec spec() { return SurrogateConfig::default_planted_optimum(); }

TEST(Measure, WarmupsAreCountedButExcluded) {
  CountingBackend backend;
  AgentConfig cfg;
  Rng rng(1);
  const MeasureReport report = measure(spec(), cfg, backend, rng);
  ASSERT_TRUE(report.failures.empty());
  ASSERT_EQ(report.rows.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& r = report.rows[i];
    EXPECT_EQ(r.batch_size, cfg.batch_sizes[i]);
    EXPECT_EQ(backend.calls(r.batch_size), 13);
    EXPECT_EQ(r.num_runs, 10);
    EXPECT_EQ(r.num_warmup, 3);
    // Timed calls return 4..13, so the mean is 8.5, not 7 (which would
    // include the warmups).
    EXPECT_DOUBLE_EQ(r.latency_ms_mean, 8.5);
    EXPECT_NEAR(r.latency_ms_std, std::sqrt(110.0 / 12.0), 1e-12);
    EXPECT_DOUBLE_EQ(r.memory_mb, 17.0);
  }
  EXPECT_EQ(backend.total(), 52);
}

TEST(Measure, PartialFailureKeepsOtherBatches) {
  CountingBackend backend;
  backend.fail_batch_ = 8;
  AgentConfig cfg;
  Rng rng(1);
  const MeasureReport report = measure(spec(), cfg, backend, rng);
  ASSERT_EQ(report.rows.size(), 3u);
  ASSERT_EQ(report.failures.size(), 1u);
  EXPECT_EQ(report.failures[0].batch_size, 8);
  EXPECT_NE(report.failures[0].reason.find("device fault"), std::string::npos);
}

TEST(Measure, ZeroNoiseMeanIsAnalyticAndIndependentOfRunCount) {
  DeviceProfile profile;
  profile.noise_std_ms = 0.0;
  SimulatedBackend backend(profile);
  Rng unused(0);
  const double expected = synthetic_latency(spec(), 1, profile, unused);
  for (int runs : {1, 10, 100}) {
    AgentConfig cfg;
    cfg.num_timed_runs = runs;
    Rng rng(5);
    const auto report = measure(spec(), cfg, backend, rng);
    ASSERT_EQ(report.rows.size(), 4u);
    EXPECT_EQ(report.rows[0].latency_ms_mean, expected) << runs;
    EXPECT_EQ(report.rows[0].latency_ms_std, 0.0);
  }
}

TEST(AgentConfig, Checks) {
  AgentConfig cfg;
  cfg.batch_sizes = {1, 4, 2};
  EXPECT_THROW(cfg.check(), ValidationError);
  cfg.batch_sizes = {};
  EXPECT_THROW(cfg.check(), ValidationError);
  cfg = AgentConfig{};
  cfg.num_timed_runs = 0;
  EXPECT_THROW(cfg.check(), ValidationError);
}

TEST(BackendOutput, Parsing) {
  EXPECT_DOUBLE_EQ(parse_backend_output("42.0\n").latency_ms, 42.0);
  const auto s = parse_backend_output(R"({"latency_ms": 3.5, "memory_mb": 12, "gpu_util": 0.5})");
  EXPECT_DOUBLE_EQ(s.latency_ms, 3.5);
  EXPECT_DOUBLE_EQ(s.memory_mb, 12.0);
  EXPECT_DOUBLE_EQ(s.gpu_util, 0.5);
  EXPECT_THROW(parse_backend_output("abc"), BackendError);
  EXPECT_THROW(parse_backend_output(""), BackendError);
  EXPECT_THROW(parse_backend_output("-1"), BackendError);
  EXPECT_THROW(parse_backend_output(R"({"memory_mb": 1})"), BackendError);
}

CommandSpec shell(const std::string& line, std::chrono::milliseconds timeout = std::chrono::seconds(10)) {
  return CommandSpec{{line}, timeout};
}

TEST(ExternalBackend, EchoedLatency) {
  ExternalBackend b(shell("cat >/dev/null; echo 42.0"));
  Rng rng(0);
  EXPECT_DOUBLE_EQ(b.time_inference(spec(), 1, rng).latency_ms, 42.0);
}

TEST(ExternalBackend, NonzeroExitFails) {
  ExternalBackend b(shell("cat >/dev/null; exit 1"));
  Rng rng(0);
  EXPECT_THROW(b.time_inference(spec(), 1, rng), BackendError);
}

TEST(ExternalBackend, GarbageOutputFails) {
  ExternalBackend b(shell("cat >/dev/null; echo abc"));
  Rng rng(0);
  EXPECT_THROW(b.time_inference(spec(), 1, rng), BackendError);
}

TEST(ExternalBackend, TimeoutFails) {
  ExternalBackend b(shell("sleep 5; echo 1", std::chrono::milliseconds(200)));
  Rng rng(0);
  const auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(b.time_inference(spec(), 1, rng), BackendError);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(3));
}

TEST(ExternalBackend, ReceivesSpecAndBatch) {
  CommandSpec cmd{{"python3", fixture("fake_device.py")}, std::chrono::seconds(20)};
  ExternalBackend b(cmd);
  Rng rng(0);
  const auto one = b.time_inference(spec(), 1, rng);
  const auto four = b.time_inference(spec(), 4, rng);
  EXPECT_DOUBLE_EQ(four.latency_ms, 4.0 * one.latency_ms);
  EXPECT_DOUBLE_EQ(one.latency_ms, spec().embed_dim * 0.5);
  EXPECT_GT(one.memory_mb, 0.0);
}

class AgentLoopTest : public ::testing::Test {
 protected:
  void SetUp() override {
    store_ = std::make_unique<Store>(dir_.file("agent.db"));
    store_->init_schema();
  }

  std::int64_t post(int lineage, const HyperparamSpec& s = spec()) {
    ArchitectureRecord r;
    r.run_id = "r";
    r.lineage_id = lineage;
    r.spec_document = encode(s);
    r.device_targets = {"sim-orin"};
    return store_->insert_architecture(Role::optimizer, r);
  }

  void poison(const std::string& document) {
    sqlite3* db = nullptr;
    ASSERT_EQ(sqlite3_open(dir_.file("agent.db").c_str(), &db), SQLITE_OK);
    const std::string sql =
        "INSERT INTO network_architecture (run_id, lineage_id, spec_document, device_targets, "
        "created_at) VALUES ('r', 99, '" + document + "', '[\"sim-orin\"]', 0)";
    ASSERT_EQ(sqlite3_exec(db, sql.c_str(), nullptr, nullptr, nullptr), SQLITE_OK);
    sqlite3_close(db);
  }

  TempDir dir_;
  std::unique_ptr<Store> store_;
};

TEST_F(AgentLoopTest, EmptyStoreDrainsWithoutInserts) {
  CountingBackend backend;
  const auto stats = run_agent_loop(AgentConfig{}, *store_, backend, {}, LoopMode::drain);
  EXPECT_EQ(stats.measurements_inserted, 0);
  EXPECT_EQ(backend.total(), 0);
}

TEST_F(AgentLoopTest, DrainMeasuresEverything) {
  HyperparamSpec a = spec(), b = spec();
  b.embed_dim = 24;
  const auto ida = post(0, a);
  const auto idb = post(1, b);
  const auto idc = post(2, default_config());
  CountingBackend backend;
  const auto stats = run_agent_loop(AgentConfig{}, *store_, backend, {}, LoopMode::drain);
  EXPECT_EQ(stats.measurements_inserted, 12);
  EXPECT_TRUE(store_->poll_unmeasured(Role::reader, "sim-orin", 10).empty());
  for (auto id : {ida, idb, idc}) EXPECT_EQ(store_->get_measurements(id, "sim-orin").size(), 4u);
}

TEST_F(AgentLoopTest, PoisonedRecordIsSkipped) {
  poison("{\"embed_dim\": \"oops\"}");
  poison("not json at all");
  const auto good = post(0);
  CountingBackend backend;
  const auto stats = run_agent_loop(AgentConfig{}, *store_, backend, {}, LoopMode::drain);
  EXPECT_EQ(stats.skipped_records, 2);
  EXPECT_EQ(store_->get_measurements(good, "sim-orin").size(), 4u);
}

TEST_F(AgentLoopTest, FailingBatchDoesNotLoopForever) {
  const auto id = post(0);
  CountingBackend backend;
  backend.fail_batch_ = 2;
  const auto stats = run_agent_loop(AgentConfig{}, *store_, backend, {}, LoopMode::drain);
  EXPECT_EQ(stats.batch_failures, 1);
  EXPECT_EQ(store_->get_measurements(id, "sim-orin").size(), 3u);
  EXPECT_EQ(store_->poll_unmeasured(Role::reader, "sim-orin", 10).size(), 1u);
}

TEST_F(AgentLoopTest, ContinuousLoopPicksUpNewWorkAndStops) {
  AgentConfig cfg;
  cfg.poll_interval_ms = 20;
  SimulatedBackend backend(DeviceProfile{});
  std::stop_source stop;
  std::atomic<bool> finished{false};
  std::jthread loop([&] {
    run_agent_loop(cfg, *store_, backend, stop.get_token(), LoopMode::continuous);
    finished = true;
  });
  const auto id = post(0);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
  while (store_->get_measurements(id, "sim-orin").size() < 4 &&
         std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  EXPECT_EQ(store_->get_measurements(id, "sim-orin").size(), 4u);
  stop.request_stop();
  loop.join();
  EXPECT_TRUE(finished);
}

TEST(MeasurementSeed, DependsOnContentOnly) {
  const std::string doc = encode(spec());
  EXPECT_EQ(measurement_seed(doc, "a"), measurement_seed(doc, "a"));
  EXPECT_NE(measurement_seed(doc, "a"), measurement_seed(doc, "b"));
}

}  // namespace
}  // namespace edgenas
