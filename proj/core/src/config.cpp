#include "edgenas/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "edgenas/error.hpp"

namespace edgenas {

namespace {

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const nlohmann::json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(label(), "expected an object");
  }

  std::string key_path(std::string_view key) const {
    if (key.empty()) return label();
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const nlohmann::json* find(std::string_view key) {
    seen_.emplace(key);
    auto it = doc_.find(std::string(key));
    return it == doc_.end() ? nullptr : &*it;
  }

  void get(std::string_view key, int& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(key_path(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void get(std::string_view key, std::uint64_t& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number_unsigned()) {
        throw ConfigError(key_path(key), "expected a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }
  void get(std::string_view key, double& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number()) throw ConfigError(key_path(key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(std::string_view key, std::string& out) {
    if (const auto* v = find(key)) {
      if (!v->is_string()) throw ConfigError(key_path(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(std::string_view key, std::vector<int>& out) {
    if (const auto* v = find(key)) {
      if (!v->is_array()) throw ConfigError(key_path(key), "expected an array of integers");
      std::vector<int> values;
      for (const auto& item : *v) {
        if (!item.is_number_integer()) {
          throw ConfigError(key_path(key), "expected an array of integers");
        }
        values.push_back(item.get<int>());
      }
      out = std::move(values);
    }
  }

  std::optional<Section> section(std::string_view key) {
    if (const auto* v = find(key)) return Section(*v, key_path(key));
    return std::nullopt;
  }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.contains(key)) throw ConfigError(key_path(key), "unknown key");
    }
  }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  const nlohmann::json& doc_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

CommandSpec read_command(Section& s, double default_timeout_s) {
  double timeout_s = default_timeout_s;
  s.get("timeout_s", timeout_s);
  if (!(timeout_s > 0.0)) throw ConfigError(s.key_path("timeout_s"), "must be > 0");
  const auto timeout = std::chrono::milliseconds(static_cast<std::int64_t>(timeout_s * 1000.0));
  CommandSpec cmd;
  cmd.timeout = timeout;
  if (const auto* v = s.find("command")) {
    try {
      cmd = command_from_json(*v, timeout);
    } catch (const std::exception& e) {
      throw ConfigError(s.key_path("command"), e.what());
    }
  }
  return cmd;
}

template <typename Check>
void checked(const std::string& field, Check&& check) {
  try {
    check();
  } catch (const ValidationError& e) {
    throw ConfigError(field, e.what());
  }
}

void read_backend(Section s, BackendConfig& backend) {
  std::string kind = "simulated";
  s.get("kind", kind);
  if (kind == "simulated") {
    backend.kind = BackendConfig::Kind::simulated;
  } else if (kind == "external") {
    backend.kind = BackendConfig::Kind::external;
  } else {
    throw ConfigError(s.key_path("kind"), "expected \"simulated\" or \"external\"");
  }
  s.get("call_delay_ms", backend.call_delay_ms);
  if (!(backend.call_delay_ms >= 0.0)) throw ConfigError(s.key_path("call_delay_ms"), "must be >= 0");
  backend.command = read_command(s, 60.0);
  if (backend.kind == BackendConfig::Kind::external && backend.command.argv.empty()) {
    throw ConfigError(s.key_path("command"), "required for an external backend");
  }
  s.finish();
}

void read_agent(Section s, AgentConfig& agent) {
  s.get("device_type", agent.device_type);
  s.get("batch_sizes", agent.batch_sizes);
  s.get("num_warmup", agent.num_warmup);
  s.get("num_timed_runs", agent.num_timed_runs);
  s.get("poll_interval_ms", agent.poll_interval_ms);
  if (auto b = s.section("backend")) read_backend(std::move(*b), agent.backend);
  s.finish();
  checked(s.key_path(""), [&] { agent.check(); });
}

void read_profile(Section s, DeviceProfile& p) {
  s.get("name", p.name);
  s.get("base_latency_ms", p.base_latency_ms);
  s.get("ms_per_gflop", p.ms_per_gflop);
  s.get("batch_efficiency", p.batch_efficiency);
  s.get("noise_std_ms", p.noise_std_ms);
  s.finish();
  checked(s.key_path(""), [&] { p.check(); });
}

void read_run(Section s, CliConfig& cfg) {
  RunConfig& r = cfg.run;
  s.get("population_size", r.population_size);
  s.get("total_evaluations", r.total_evaluations);
  s.get("seed", r.seed);
  s.get("epochs", r.epochs);
  s.get("score_batch_size", r.score_batch_size);
  s.get("measurement_timeout_s", r.measurement_timeout_s);
  s.get("max_concurrency", r.max_concurrency);
  s.get("measurement_poll_ms", cfg.measurement_poll_ms);
  s.finish();
  checked(s.key_path(""), [&] { r.check(); });
  if (cfg.measurement_poll_ms < 1) {
    throw ConfigError(s.key_path("measurement_poll_ms"), "must be >= 1");
  }
}

void read_surrogate(Section s, SurrogateConfig& sc) {
  if (const auto* v = s.find("planted_optimum")) {
    const std::string path = s.key_path("planted_optimum");
    if (!v->is_object()) throw ConfigError(path, "expected an object");
    for (const auto& [key, value] : v->items()) {
      bool known = false;
      for (Field f : kAllFields) known = known || field_name(f) == key;
      if (!known) throw ConfigError(path + "." + key, "unknown key");
    }
    try {
      sc.planted_optimum = from_json(*v);
    } catch (const DecodeError& e) {
      throw ConfigError(path + "." + e.field(), e.what());
    }
  }
  s.get("capacity_weight", sc.capacity_weight);
  s.get("distance_weight", sc.distance_weight);
  s.get("noise_std", sc.noise_std);
  s.get("epochs_half_life", sc.epochs_half_life);
  s.finish();
  checked(s.key_path(""), [&] { sc.check(); });
}

void read_trainer(Section s, TrainerConfig& t) {
  std::string kind = "simulated";
  s.get("kind", kind);
  if (kind == "simulated") {
    t.kind = TrainerConfig::Kind::simulated;
  } else if (kind == "external") {
    t.kind = TrainerConfig::Kind::external;
  } else {
    throw ConfigError(s.key_path("kind"), "expected \"simulated\" or \"external\"");
  }
  s.get("duration_ms", t.duration_ms);
  if (t.duration_ms < 0) throw ConfigError(s.key_path("duration_ms"), "must be >= 0");
  t.command = read_command(s, 3600.0);
  if (t.kind == TrainerConfig::Kind::external && t.command.argv.empty()) {
    throw ConfigError(s.key_path("command"), "required for an external trainer");
  }
  s.finish();
}

}  // namespace

CliConfig parse_config(const nlohmann::json& document) {
  CliConfig cfg;
  Section root(document, "");
  if (auto s = root.section("store")) {
    s->get("path", cfg.store_path);
    s->finish();
  }
  if (auto s = root.section("agent")) read_agent(std::move(*s), cfg.agent);
  if (auto s = root.section("device_profile")) read_profile(std::move(*s), cfg.agent.backend.profile);
  if (auto s = root.section("run")) read_run(std::move(*s), cfg);
  if (auto s = root.section("surrogate")) read_surrogate(std::move(*s), cfg.surrogate);
  if (auto s = root.section("trainer")) read_trainer(std::move(*s), cfg.trainer);
  if (auto s = root.section("report")) {
    s->get("output_dir", cfg.report_output_dir);
    s->finish();
  }
  root.finish();
  return cfg;
}

CliConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(buffer.str(), nullptr, /*allow_exceptions=*/true,
                                /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<file>", path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

}  // namespace edgenas
