#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "edgenas/config.hpp"

namespace edgenas::cli {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::string> store;
  bool verbose = false;
};

struct RunOptions {
  std::optional<int> samples;
  std::optional<int> population;
  std::optional<std::uint64_t> seed;
  std::string mode = "simulate";
  std::string run_id;
  bool no_embedded_agent = false;
  std::string history_csv;
  std::string summary_json;
};

struct AgentOptions {
  std::string device_type;
  bool once = false;
};

struct ReportOptions {
  std::string kind;  // summary | pareto | medians | history
  std::vector<std::string> run_ids;
  std::string out;
};

int cmd_init_store(const GlobalOptions& global);
int cmd_run(const GlobalOptions& global, const RunOptions& options);
int cmd_baseline(const GlobalOptions& global, bool no_embedded_agent);
int cmd_agent(const GlobalOptions& global, const AgentOptions& options);
int cmd_report(const GlobalOptions& global, const ReportOptions& options);

}  // namespace edgenas::cli
