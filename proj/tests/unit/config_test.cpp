#include <fstream>

#include <gtest/gtest.h>

#include "edgenas/config.hpp"
#include "edgenas/error.hpp"
#include "test_support.hpp"

namespace edgenas {
namespace {

using edgenas::testing::TempDir;

std::string field_of(const nlohmann::json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

TEST(Config, EmptyDocumentGivesDefaults) {
  const CliConfig cfg = parse_config(nlohmann::json::object());
  EXPECT_EQ(cfg.run.population_size, 8);
  EXPECT_EQ(cfg.run.total_evaluations, 16);
  EXPECT_EQ(cfg.agent.batch_sizes, (std::vector<int>{1, 2, 4, 8}));
  EXPECT_EQ(cfg.agent.num_warmup, 3);
  EXPECT_EQ(cfg.agent.num_timed_runs, 10);
  EXPECT_EQ(cfg.measurement_poll_ms, 250);
  EXPECT_EQ(cfg.trainer.kind, TrainerConfig::Kind::simulated);
}

TEST(Config, ReadsEverySection) {
  const auto doc = nlohmann::json::parse(R"({
    "store": {"path": "x.db"},
    "agent": {"device_type": "jetson", "batch_sizes": [1, 2], "num_warmup": 1,
              "num_timed_runs": 5, "poll_interval_ms": 100,
              "backend": {"kind": "external", "command": ["python3", "dev.py"], "timeout_s": 7}},
    "device_profile": {"name": "p", "base_latency_ms": 1, "ms_per_gflop": 2,
                       "batch_efficiency": 1, "noise_std_ms": 0},
    "run": {"population_size": 4, "total_evaluations": 12, "seed": 9, "epochs": 3,
            "score_batch_size": 2, "measurement_timeout_s": 30, "measurement_poll_ms": 50,
            "max_concurrency": 2},
    "surrogate": {"noise_std": 0, "planted_optimum": {
        "patch_size": [2, 2, 2], "embed_dim": 24, "depths": [1, 1, 1, 1],
        "heads": [3, 3, 3, 3], "mlp_ratio": 1, "learning_rate": 0.01,
        "lr_step_size": 10, "lr_gamma": 0.3}},
    "trainer": {"kind": "external", "command": "train.sh", "timeout_s": 60},
    "report": {"output_dir": "out"}
  })");
  const CliConfig cfg = parse_config(doc);
  EXPECT_EQ(cfg.store_path, "x.db");
  EXPECT_EQ(cfg.agent.device_type, "jetson");
  EXPECT_EQ(cfg.agent.batch_sizes, (std::vector<int>{1, 2}));
  EXPECT_EQ(cfg.agent.backend.kind, BackendConfig::Kind::external);
  EXPECT_EQ(cfg.agent.backend.command.argv, (std::vector<std::string>{"python3", "dev.py"}));
  EXPECT_EQ(cfg.agent.backend.command.timeout, std::chrono::milliseconds(7000));
  EXPECT_EQ(cfg.agent.backend.profile.ms_per_gflop, 2.0);
  EXPECT_EQ(cfg.run.seed, 9u);
  EXPECT_EQ(cfg.run.max_concurrency, 2);
  EXPECT_EQ(cfg.measurement_poll_ms, 50);
  EXPECT_EQ(cfg.surrogate.planted_optimum.embed_dim, 24);
  EXPECT_EQ(cfg.surrogate.noise_std, 0.0);
  EXPECT_EQ(cfg.trainer.kind, TrainerConfig::Kind::external);
  EXPECT_EQ(cfg.trainer.command.argv, std::vector<std::string>{"train.sh"});
  EXPECT_EQ(cfg.report_output_dir, "out");
}

TEST(Config, UnknownKeysAreRejectedWithPath) {
  EXPECT_EQ(field_of({{"bogus", 1}}), "bogus");
  EXPECT_EQ(field_of({{"agent", {{"batchsizes", {1}}}}}), "agent.batchsizes");
  EXPECT_EQ(field_of({{"agent", {{"backend", {{"kind", "simulated"}, {"x", 1}}}}}}),
            "agent.backend.x");
  EXPECT_EQ(field_of({{"surrogate", {{"planted_optimum", {{"window", 7}}}}}}),
            "surrogate.planted_optimum.window");
}

TEST(Config, TypeAndRangeErrorsNameTheField) {
  EXPECT_EQ(field_of({{"run", {{"seed", "seven"}}}}), "run.seed");
  EXPECT_EQ(field_of({{"run", {{"population_size", 1.5}}}}), "run.population_size");
  EXPECT_EQ(field_of({{"run", {{"total_evaluations", 4}}}}), "run");
  EXPECT_EQ(field_of({{"agent", {{"batch_sizes", {4, 2}}}}}), "agent");
  EXPECT_EQ(field_of({{"trainer", {{"kind", "gpu"}}}}), "trainer.kind");
  EXPECT_EQ(field_of({{"trainer", {{"kind", "external"}}}}), "trainer.command");
  EXPECT_EQ(field_of({{"device_profile", {{"batch_efficiency", 2}}}}), "device_profile");
  EXPECT_EQ(field_of({{"surrogate", {{"planted_optimum", {{"embed_dim", 24}}}}}}),
            "surrogate.planted_optimum.patch_size");
  EXPECT_EQ(field_of(nlohmann::json::array()), "<root>");
}

TEST(Config, LoadsFileWithComments) {
  TempDir dir;
  const std::string path = dir.file("c.jsonc");
  std::ofstream(path) << "// comment\n{\n  /* block */ \"run\": {\"seed\": 3} // trailing\n}\n";
  EXPECT_EQ(load_config(path).run.seed, 3u);
}

TEST(Config, MalformedFileIsAConfigError) {
  TempDir dir;
  const std::string path = dir.file("bad.jsonc");
  std::ofstream(path) << "{ \"run\": ";
  EXPECT_THROW(load_config(path), ConfigError);
  EXPECT_THROW(load_config(dir.file("missing.jsonc")), ConfigError);
}

TEST(Config, ShippedExampleParses) {
  const CliConfig cfg = load_config(EDGENAS_EXAMPLE_CONFIG);
  EXPECT_EQ(cfg.run.population_size, 8);
  EXPECT_EQ(cfg.agent.batch_sizes, (std::vector<int>{1, 2, 4, 8}));
}

}  // namespace
}  // namespace edgenas
