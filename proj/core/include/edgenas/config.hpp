#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "edgenas/cost_model.hpp"
#include "edgenas/edge_agent.hpp"
#include "edgenas/optimizer.hpp"
#include "edgenas/subprocess.hpp"

namespace edgenas {

struct TrainerConfig {
  enum class Kind { simulated, external };
  Kind kind = Kind::simulated;
  int duration_ms = 0;  // simulated only
  CommandSpec command;  // external only
};

/// Everything the command-line tool can be configured with. Loaded from a
/// JSON document (comments allowed); every section and key is optional, and
/// unknown keys are rejected.
struct CliConfig {
  std::string store_path;
  AgentConfig agent;  // agent.backend.profile is the "device_profile" section
  RunConfig run;
  int measurement_poll_ms = 250;
  SurrogateConfig surrogate;
  TrainerConfig trainer;
  std::string report_output_dir = ".";
};

/// Throws ConfigError whose field() is the dotted path of the offending key.
CliConfig parse_config(const nlohmann::json& document);
CliConfig load_config(const std::filesystem::path& path);

}  // namespace edgenas
