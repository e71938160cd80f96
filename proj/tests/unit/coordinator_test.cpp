#include <thread>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "edgenas/coordinator.hpp"
#include "edgenas/edge_agent.hpp"
#include "edgenas/error.hpp"
#include "test_support.hpp"

namespace edgenas {
namespace {

using edgenas::testing::TempDir;
using edgenas::testing::fixture;
using namespace std::chrono_literals;

// Simulated edge agent on its own store connection, stopped on destruction.
class BackgroundAgent {
 public:
  BackgroundAgent(const std::string& path, std::chrono::microseconds call_delay = 0us,
                  int poll_ms = 20)
      : store_(path), backend_(zero_noise(), call_delay) {
    config_.poll_interval_ms = poll_ms;
    thread_ = std::jthread([this](std::stop_token stop) {
      run_agent_loop(config_, store_, backend_, stop, LoopMode::continuous);
    });
  }

  static DeviceProfile zero_noise() {
    DeviceProfile p;
    p.noise_std_ms = 0.0;
    return p;
  }

 private:
  Store store_;
  SimulatedBackend backend_;
  AgentConfig config_;
  std::jthread thread_;
};

class CoordinatorTest : public ::testing::Test {
 protected:
  void SetUp() override {
    path_ = dir_.file("coord.db");
    store_ = std::make_unique<Store>(path_);
    store_->init_schema();
    settings_.run_id = "t";
    settings_.measurement_poll_ms = 20;
    settings_.measurement_timeout_s = 20.0;
  }

  TempDir dir_;
  std::string path_;
  std::unique_ptr<Store> store_;
  DispatchSettings settings_;
};

TEST_F(CoordinatorTest, MeasurementOverlapsTraining) {
  // 4 batch sizes x 13 calls at 500/52 ms each: about 0.5 s of measurement.
  BackgroundAgent agent(path_, std::chrono::microseconds(500000 / 52));
  SimulatedTrainer trainer(SurrogateConfig{}, 2000ms);
  Rng rng(1);
  for (int i = 0; i < 2; ++i) {
    const auto o = dispatch_candidate(sample(rng), i, 7, settings_, *store_, trainer);
    ASSERT_EQ(o.status, CandidateStatus::ok) << o.detail;
    EXPECT_GE(o.timings.total_wall_ms, 2000.0);
    EXPECT_LT(o.timings.total_wall_ms, 3000.0);
    EXPECT_GE(o.timings.total_wall_ms,
              std::max(o.timings.train_wall_ms, o.timings.measure_wait_ms));
  }
}

TEST_F(CoordinatorTest, NoAgentTimesOut) {
  settings_.measurement_timeout_s = 0.3;
  SimulatedTrainer trainer(SurrogateConfig{});
  const auto start = std::chrono::steady_clock::now();
  const auto o = dispatch_candidate(SurrogateConfig::default_planted_optimum(), 0, 1, settings_,
                                    *store_, trainer);
  EXPECT_EQ(o.status, CandidateStatus::measurement_timeout);
  EXPECT_FALSE(o.breakdown);
  EXPECT_GE(std::chrono::steady_clock::now() - start, 300ms);
  EXPECT_TRUE(store_->query_results("t").empty());
  EXPECT_EQ(store_->list_architectures("t").size(), 1u);
}

TEST_F(CoordinatorTest, TrainerFailureWritesNoResult) {
  ExternalTrainer trainer(CommandSpec{{"cat >/dev/null; exit 3"}, 10s});
  const auto o = dispatch_candidate(SurrogateConfig::default_planted_optimum(), 0, 1, settings_,
                                    *store_, trainer);
  EXPECT_EQ(o.status, CandidateStatus::trainer_failed);
  EXPECT_NE(o.detail.find("status 3"), std::string::npos);
  EXPECT_TRUE(store_->query_results("t").empty());
}

TEST_F(CoordinatorTest, ExternalTrainerProtocol) {
  BackgroundAgent agent(path_);
  ExternalTrainer trainer(CommandSpec{{"python3", fixture("fake_trainer.py")}, 20s});
  settings_.epochs = 2;
  const HyperparamSpec s = SurrogateConfig::default_planted_optimum();
  const auto o = dispatch_candidate(s, 0, 1, settings_, *store_, trainer);
  ASSERT_EQ(o.status, CandidateStatus::ok) << o.detail;
  EXPECT_NEAR(o.breakdown->val_loss, 0.05 + 48 / 10000.0 + 0.005, 1e-12);
  ASSERT_TRUE(o.breakdown->test_loss);
  EXPECT_NEAR(*o.breakdown->test_loss, o.breakdown->val_loss + 0.01, 1e-12);
  const auto rows = store_->query_results("t");
  ASSERT_EQ(rows.size(), 2u);
}

TEST_F(CoordinatorTest, ScoreUsesConfiguredBatchRow) {
  BackgroundAgent agent(path_);
  SimulatedTrainer trainer(SurrogateConfig{});
  const HyperparamSpec s = SurrogateConfig::default_planted_optimum();
  settings_.score_batch_size = 4;
  const auto o = dispatch_candidate(s, 0, 1, settings_, *store_, trainer);
  ASSERT_EQ(o.status, CandidateStatus::ok);
  const auto rows = store_->get_measurements(o.architecture_id, "sim-orin");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(o.breakdown->inference_time_ms, rows[2].latency_ms_mean);
}

TEST_F(CoordinatorTest, BaselineFlowsThroughPipeline) {
  BackgroundAgent agent(path_);
  SimulatedTrainer trainer(SurrogateConfig{});
  const auto o = evaluate_baseline(settings_, *store_, trainer);
  ASSERT_EQ(o.status, CandidateStatus::ok) << o.detail;
  EXPECT_EQ(o.spec.embed_dim, 96);
  const auto rows = store_->query_results(kBaselineRunId);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_NEAR(r.result.score, r.result.val_loss * 1000.0 + r.result.inference_time_ms, 1e-9);
  }
  const auto meta = store_->get_run_metadata(kBaselineRunId);
  ASSERT_TRUE(meta);
  const auto summary = nlohmann::json::parse(*meta->summary_document);
  EXPECT_EQ(summary["samples"], 0);
  EXPECT_FALSE(summary["best"].is_null());
}

TEST_F(CoordinatorTest, RunRecordsOneArchitecturePerEvaluation) {
  BackgroundAgent agent(path_);
  SimulatedTrainer trainer(SurrogateConfig{});
  RunConfig cfg;
  cfg.seed = 5;
  cfg.measurement_timeout_s = 20.0;
  const auto summary = run_nas(cfg, settings_, *store_, trainer);
  EXPECT_EQ(summary.ok_count, 16);
  EXPECT_EQ(summary.failed_count, 0);
  EXPECT_EQ(store_->list_architectures("t").size(), 16u);
  int validation = 0, test = 0;
  for (const auto& r : store_->query_results("t")) {
    (r.result.split == Split::validation ? validation : test)++;
  }
  EXPECT_EQ(validation, 16);
  EXPECT_EQ(test, 16);
  const auto meta = store_->get_run_metadata("t");
  ASSERT_TRUE(meta);
  EXPECT_EQ(meta->status, "finished");
  EXPECT_EQ(meta->budget, 16);
  ASSERT_TRUE(meta->history_document);
  EXPECT_EQ(history_from_json(nlohmann::json::parse(*meta->history_document)).entries.size(), 16u);
}

TEST_F(CoordinatorTest, AllFailingTrainerConsumesBudget) {
  ExternalTrainer trainer(CommandSpec{{"cat >/dev/null; exit 1"}, 10s});
  RunConfig cfg;
  const auto summary = run_nas(cfg, settings_, *store_, trainer);
  EXPECT_EQ(summary.ok_count, 0);
  EXPECT_EQ(summary.failed_count, 16);
  EXPECT_EQ(summary.history.evaluator_calls, 16);
  EXPECT_EQ(summary.best(), nullptr);
  EXPECT_TRUE(summary_document(summary)["best"].is_null());
}

TEST(Coordinator, RunIsReproducibleAcrossStores) {
  const auto once = [](const std::string& path) {
    Store store(path);
    store.init_schema();
    BackgroundAgent agent(path);
    SimulatedTrainer trainer(SurrogateConfig{});
    DispatchSettings s;
    s.run_id = "det";
    s.measurement_poll_ms = 20;
    RunConfig cfg;
    cfg.seed = 11;
    return run_nas(cfg, s, store, trainer);
  };
  TempDir a, b;
  const auto ra = once(a.file("a.db"));
  const auto rb = once(b.file("b.db"));
  ASSERT_NE(ra.best(), nullptr);
  EXPECT_EQ(ra.best()->evaluation.fitness(), rb.best()->evaluation.fitness());
  // Architecture ids depend on dispatch interleaving; everything else must match.
  const auto strip = [](const RunHistory& h) {
    auto j = to_json(h);
    for (auto& e : j["entries"]) e.erase("architecture_id");
    return j;
  };
  EXPECT_EQ(strip(ra.history), strip(rb.history));
}

TEST(Coordinator, UninitializedStoreAborts) {
  TempDir dir;
  Store store(dir.file("blank.db"));
  SimulatedTrainer trainer(SurrogateConfig{});
  DispatchSettings s;
  s.run_id = "x";
  EXPECT_THROW(run_nas(RunConfig{}, s, store, trainer), SchemaVersionError);
}

TEST(DispatchSettings, ScoreBatchMustBeMeasured) {
  DispatchSettings s;
  s.run_id = "x";
  s.score_batch_size = 3;
  EXPECT_THROW(s.check(), ValidationError);
}

}  // namespace
}  // namespace edgenas
