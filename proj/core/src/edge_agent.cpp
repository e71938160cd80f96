#include "edgenas/edge_agent.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <condition_variable>
#include <mutex>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "edgenas/error.hpp"

namespace edgenas {

SimulatedBackend::SimulatedBackend(DeviceProfile profile, std::chrono::microseconds call_delay)
    : profile_(std::move(profile)), call_delay_(call_delay) {
  profile_.check();
}

InferenceSample SimulatedBackend::time_inference(const HyperparamSpec& spec, int batch_size,
                                                 Rng& rng) {
  if (call_delay_.count() > 0) std::this_thread::sleep_for(call_delay_);
  const double gflops = flops_estimate(spec);
  InferenceSample s;
  s.latency_ms = latency_from_gflops(gflops, batch_size, profile_, rng);
  // Placeholder usage metrics: fp32 weights plus a per-item activation term.
  s.memory_mb = static_cast<double>(param_count(spec)) * 4.0 / 1e6 + 8.0 * gflops * batch_size;
  s.gpu_util = std::min(1.0, gflops * batch_size / (gflops * batch_size + 10.0));
  s.cpu_util = 0.05;
  return s;
}

ExternalBackend::ExternalBackend(CommandSpec command) : command_(std::move(command)) {
  if (command_.argv.empty()) throw BackendError("external backend: empty command");
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double metric(const nlohmann::json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) return 0.0;
  if (!it->is_number()) throw BackendError(std::string("backend output: '") + key + "' is not a number");
  return it->get<double>();
}

}  // namespace

InferenceSample parse_backend_output(std::string_view text) {
  const std::string_view body = trim(text);
  if (body.empty()) throw BackendError("backend output: empty");
  auto doc = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  InferenceSample s;
  if (doc.is_number()) {
    s.latency_ms = doc.get<double>();
  } else if (doc.is_object()) {
    auto it = doc.find("latency_ms");
    if (it == doc.end() || !it->is_number()) {
      throw BackendError("backend output: missing numeric 'latency_ms'");
    }
    s.latency_ms = it->get<double>();
    s.memory_mb = metric(doc, "memory_mb");
    s.cpu_util = metric(doc, "cpu_util");
    s.gpu_util = metric(doc, "gpu_util");
  } else {
    throw BackendError("backend output: cannot parse '" + std::string(body.substr(0, 64)) + "'");
  }
  if (!(s.latency_ms > 0.0) || !std::isfinite(s.latency_ms)) {
    throw BackendError("backend output: latency must be > 0");
  }
  return s;
}

InferenceSample ExternalBackend::time_inference(const HyperparamSpec& spec, int batch_size,
                                                Rng& /*rng*/) {
  const nlohmann::json request{{"spec", to_json(spec)}, {"batch_size", batch_size}};
  const ProcessResult r = run_process(command_, request.dump() + "\n");
  if (r.timed_out) {
    throw BackendError("external backend timed out after " +
                       std::to_string(command_.timeout.count()) + " ms");
  }
  if (r.exit_code != 0) {
    throw BackendError("external backend exited with status " + std::to_string(r.exit_code) +
                       (r.stderr_text.empty() ? "" : ": " + std::string(trim(r.stderr_text))));
  }
  return parse_backend_output(r.stdout_text);
}

std::unique_ptr<MeasurementBackend> external_backend(CommandSpec command) {
  return std::make_unique<ExternalBackend>(std::move(command));
}

std::unique_ptr<MeasurementBackend> make_backend(const BackendConfig& config) {
  if (config.kind == BackendConfig::Kind::external) return external_backend(config.command);
  return std::make_unique<SimulatedBackend>(
      config.profile,
      std::chrono::microseconds(static_cast<std::int64_t>(config.call_delay_ms * 1000.0)));
}

void AgentConfig::check() const {
  if (device_type.empty()) throw ValidationError("agent: device_type must not be empty");
  if (batch_sizes.empty()) throw ValidationError("agent: batch_sizes must not be empty");
  for (std::size_t i = 0; i < batch_sizes.size(); ++i) {
    if (batch_sizes[i] < 1 || (i > 0 && batch_sizes[i] <= batch_sizes[i - 1])) {
      throw ValidationError("agent: batch_sizes must be positive and strictly increasing");
    }
  }
  if (num_timed_runs < 1) throw ValidationError("agent: num_timed_runs must be >= 1");
  if (num_warmup < 0) throw ValidationError("agent: num_warmup must be >= 0");
  if (poll_interval_ms < 1) throw ValidationError("agent: poll_interval_ms must be >= 1");
}

MeasureReport measure(const HyperparamSpec& spec, const AgentConfig& config,
                      MeasurementBackend& backend, Rng& rng) {
  MeasureReport report;
  for (const int batch : config.batch_sizes) {
    try {
      for (int i = 0; i < config.num_warmup; ++i) backend.time_inference(spec, batch, rng);

      std::vector<InferenceSample> runs;
      runs.reserve(static_cast<std::size_t>(config.num_timed_runs));
      for (int i = 0; i < config.num_timed_runs; ++i) {
        runs.push_back(backend.time_inference(spec, batch, rng));
        if (!(runs.back().latency_ms > 0.0)) throw BackendError("non-positive latency");
      }

      const double n = static_cast<double>(runs.size());
      EdgeMeasurement row;
      row.device_type = config.device_type;
      row.batch_size = batch;
      row.num_runs = config.num_timed_runs;
      row.num_warmup = config.num_warmup;
      // Shifted by the first sample so identical timings give an exact mean
      // and a zero deviation.
      const double shift = runs.front().latency_ms;
      double d_sum = 0.0, d_sq = 0.0;
      for (const auto& r : runs) {
        const double d = r.latency_ms - shift;
        d_sum += d;
        d_sq += d * d;
        row.memory_mb += r.memory_mb;
        row.cpu_util += r.cpu_util;
        row.gpu_util += r.gpu_util;
      }
      row.latency_ms_mean = shift + d_sum / n;
      row.memory_mb /= n;
      row.cpu_util /= n;
      row.gpu_util /= n;
      if (runs.size() > 1) {
        row.latency_ms_std = std::sqrt(std::max(0.0, (d_sq - d_sum * d_sum / n) / (n - 1.0)));
      }
      report.rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      report.failures.push_back({batch, e.what()});
    }
  }
  return report;
}

std::uint64_t measurement_seed(std::string_view spec_document, std::string_view device_type) {
  return derive_seed(stable_hash(spec_document), stable_hash(device_type));
}

namespace {

constexpr auto kBackoffStart = std::chrono::milliseconds(100);
constexpr auto kBackoffCap = std::chrono::milliseconds(30000);
constexpr int kDrainMaxStoreErrors = 5;

// Sleeps for `d` or until stop is requested. Returns false if stopped.
bool interruptible_sleep(std::stop_token stop, std::chrono::milliseconds d) {
  std::mutex mu;
  std::condition_variable_any cv;
  std::unique_lock lock(mu);
  return !cv.wait_for(lock, stop, d, [] { return false; });
}

}  // namespace

AgentStats run_agent_loop(const AgentConfig& config, Store& store, MeasurementBackend& backend,
                          std::stop_token stop, LoopMode mode) {
  config.check();
  AgentStats stats;
  std::set<std::int64_t> skip;
  auto backoff = kBackoffStart;
  int consecutive_errors = 0;

  while (!stop.stop_requested()) {
    std::vector<ArchitectureRecord> pending;
    try {
      ++stats.polls;
      pending = store.poll_unmeasured(Role::edge_agent, config.device_type, 64 + skip.size(),
                                      config.batch_sizes);
      consecutive_errors = 0;
      backoff = kBackoffStart;
    } catch (const StoreError& e) {
      ++stats.store_errors;
      ++consecutive_errors;
      spdlog::warn("agent: store poll failed ({}); retrying in {} ms", e.what(), backoff.count());
      if (mode == LoopMode::drain && consecutive_errors >= kDrainMaxStoreErrors) throw;
      if (!interruptible_sleep(stop, backoff)) break;
      backoff = std::min(backoff * 2, kBackoffCap);
      continue;
    }

    std::erase_if(pending, [&](const ArchitectureRecord& r) { return skip.contains(r.id); });
    if (pending.empty()) {
      if (mode == LoopMode::drain) break;
      if (!interruptible_sleep(stop, std::chrono::milliseconds(config.poll_interval_ms))) break;
      continue;
    }

    for (const auto& record : pending) {
      if (stop.stop_requested()) break;
      HyperparamSpec spec;
      try {
        spec = decode(record.spec_document);
        require_valid(spec, ValidationMode::baseline);
      } catch (const std::exception& e) {
        spdlog::error("agent: skipping architecture {}: {}", record.id, e.what());
        skip.insert(record.id);
        ++stats.skipped_records;
        continue;
      }

      Rng rng(measurement_seed(record.spec_document, config.device_type));
      const MeasureReport report = measure(spec, config, backend, rng);
      for (const auto& f : report.failures) {
        spdlog::error("agent: architecture {} batch {} failed: {}", record.id, f.batch_size,
                      f.reason);
      }
      stats.batch_failures += static_cast<int>(report.failures.size());

      bool stored_all = true;
      for (auto row : report.rows) {
        row.architecture_id = record.id;
        for (auto delay = kBackoffStart;; delay = std::min(delay * 2, kBackoffCap)) {
          try {
            store.insert_measurement(Role::edge_agent, row);
            ++stats.measurements_inserted;
            break;
          } catch (const StoreError& e) {
            ++stats.store_errors;
            spdlog::warn("agent: insert for architecture {} failed ({}); retrying", record.id,
                         e.what());
            if (!interruptible_sleep(stop, delay)) {
              stored_all = false;
              break;
            }
          } catch (const std::exception& e) {
            spdlog::error("agent: architecture {} row rejected: {}", record.id, e.what());
            stored_all = false;
            break;
          }
        }
        if (stop.stop_requested() && !stored_all) break;
      }
      ++stats.architectures_measured;
      if (!report.failures.empty() || !stored_all) skip.insert(record.id);
    }
  }
  return stats;
}

}  // namespace edgenas
