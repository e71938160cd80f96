#pragma once

#include <chrono>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace edgenas {

/// An external command. A single-element argv runs through `/bin/sh -c`.
struct CommandSpec {
  std::vector<std::string> argv;
  std::chrono::milliseconds timeout{std::chrono::seconds(300)};
};

/// Accepts either a string (shell command line) or an array of strings.
CommandSpec command_from_json(const nlohmann::json& value, std::chrono::milliseconds timeout);

struct ProcessResult {
  int exit_code = -1;  // -1 when killed by a signal or on timeout
  bool timed_out = false;
  std::string stdout_text;
  std::string stderr_text;
};

/// Runs `cmd`, writes `input` to its stdin, and collects stdout/stderr until it
/// exits or the timeout fires (the whole process group is then killed).
/// Throws BackendError if the process cannot be started.
ProcessResult run_process(const CommandSpec& cmd, std::string_view input);

}  // namespace edgenas
