#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "edgenas/error.hpp"

using namespace edgenas::cli;

namespace {

template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const edgenas::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hardware-aware architecture search with an edge measurement agent"};
  app.require_subcommand(1);

  GlobalOptions global;
  app.add_option("-c,--config", global.config_path, "JSON configuration file (comments allowed)")
      ->check(CLI::ExistingFile);
  app.add_option("-s,--store", global.store, "Store file (overrides $EDGENAS_STORE and config)");
  app.add_flag("-v,--verbose", global.verbose, "Log progress to stderr");

  auto* init = app.add_subcommand("init-store", "Create the store schema (idempotent)");

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "Run one architecture search");
  run->add_option("--samples", run_opts.samples, "Total evaluations, initial parents included")
      ->check(CLI::PositiveNumber);
  run->add_option("--population", run_opts.population, "Number of parallel lineages")
      ->check(CLI::PositiveNumber);
  run->add_option("--seed", run_opts.seed, "Run seed");
  run->add_option("--mode", run_opts.mode, "simulate or external")
      ->check(CLI::IsMember({"simulate", "external"}));
  run->add_option("--run-id", run_opts.run_id, "Run id (default derived from seed and budget)");
  run->add_flag("--no-embedded-agent", run_opts.no_embedded_agent,
                "Rely on a separately running agent process");
  run->add_option("--history-csv", run_opts.history_csv, "Write the run history as CSV");
  run->add_option("--summary-json", run_opts.summary_json, "Write the run summary as JSON");

  bool baseline_no_agent = false;
  auto* baseline = app.add_subcommand("baseline", "Evaluate the hand-designed baseline");
  baseline->add_flag("--no-embedded-agent", baseline_no_agent,
                     "Rely on a separately running agent process");

  AgentOptions agent_opts;
  auto* agent = app.add_subcommand("agent", "Run the edge measurement agent");
  agent->add_option("--device-type", agent_opts.device_type, "Device type to serve");
  agent->add_flag("--once", agent_opts.once, "Drain the current backlog and exit");

  ReportOptions report_opts;
  auto* report = app.add_subcommand("report", "Summaries, Pareto CSVs and medians");
  report->add_option("kind", report_opts.kind, "summary | pareto | medians | history")
      ->required()
      ->check(CLI::IsMember({"summary", "pareto", "medians", "history"}));
  report->add_option("--run-ids", report_opts.run_ids, "Runs to include (default: all)");
  report->add_option("--out", report_opts.out,
                     "Output file (pareto: output directory); default stdout");

  for (auto* sub : {init, run, baseline, agent, report}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  auto logger = spdlog::stderr_color_mt("edgenas");
  spdlog::set_default_logger(logger);
  spdlog::set_level(global.verbose ? spdlog::level::info : spdlog::level::warn);

  if (*init) return guarded([&] { return cmd_init_store(global); });
  if (*run) return guarded([&] { return cmd_run(global, run_opts); });
  if (*baseline) return guarded([&] { return cmd_baseline(global, baseline_no_agent); });
  if (*agent) return guarded([&] { return cmd_agent(global, agent_opts); });
  return guarded([&] { return cmd_report(global, report_opts); });
}
