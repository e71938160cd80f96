#include "edgenas/cost_model.hpp"

#include <algorithm>
#include <cmath>

#include "edgenas/error.hpp"

namespace edgenas {

namespace {

constexpr std::int64_t kBiasTableRows =
    (2 * kWindow[0] - 1) * (2 * kWindow[1] - 1) * (2 * kWindow[2] - 1);
constexpr double kDecayScale = 0.05;
constexpr double kMinLoss = 1e-6;

std::int64_t stage_dim(const HyperparamSpec& spec, int stage) {
  return static_cast<std::int64_t>(spec.embed_dim) << stage;
}

}  // namespace

std::int64_t param_count(const HyperparamSpec& spec, int input_channels, int num_outputs) {
  require_valid(spec, ValidationMode::baseline);
  if (input_channels < 1 || num_outputs < 1) {
    throw ValidationError("param_count: input_channels and num_outputs must be >= 1");
  }
  const std::int64_t e = spec.embed_dim;
  const std::int64_t patch_volume =
      std::int64_t{spec.patch_size[0]} * spec.patch_size[1] * spec.patch_size[2];

  std::int64_t total = input_channels * patch_volume * e + e;
  for (int i = 0; i < 4; ++i) {
    const std::int64_t d = stage_dim(spec, i);
    const std::int64_t hidden = spec.mlp_ratio * d;
    const std::int64_t block = (3 * d * d + 3 * d)     // qkv
                               + (d * d + d)           // attention output
                               + 4 * d                 // two layer-norms
                               + kBiasTableRows * spec.heads[i]
                               + (d * hidden + hidden) + (hidden * d + d);
    total += spec.depths[i] * block;
    if (i < 3) total += 4 * d * 2 * d + 4 * d;  // patch merging
  }
  const std::int64_t d3 = stage_dim(spec, 3);
  total += 2 * d3;                          // final norm
  total += d3 * num_outputs + num_outputs;  // regression head
  return total;
}

std::array<std::int64_t, 4> stage_tokens(const HyperparamSpec& spec, int input_frames,
                                         int input_hw) {
  if (input_frames <= 0 || input_frames % spec.patch_size[0] != 0) {
    throw ValidationError("flops_estimate: temporal axis (" + std::to_string(input_frames) +
                          " frames) not divisible by patch size " +
                          std::to_string(spec.patch_size[0]));
  }
  if (input_hw <= 0 || input_hw % spec.patch_size[1] != 0) {
    throw ValidationError("flops_estimate: height axis (" + std::to_string(input_hw) +
                          ") not divisible by patch size " + std::to_string(spec.patch_size[1]));
  }
  if (input_hw % spec.patch_size[2] != 0) {
    throw ValidationError("flops_estimate: width axis (" + std::to_string(input_hw) +
                          ") not divisible by patch size " + std::to_string(spec.patch_size[2]));
  }
  const std::int64_t t = input_frames / spec.patch_size[0];
  std::int64_t h = input_hw / spec.patch_size[1];
  std::int64_t w = input_hw / spec.patch_size[2];
  std::array<std::int64_t, 4> tokens{};
  for (auto& n : tokens) {
    n = t * h * w;
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  return tokens;
}

double block_gflops(const HyperparamSpec& spec, int stage, int input_frames, int input_hw) {
  const auto tokens = stage_tokens(spec, input_frames, input_hw);
  const double t = static_cast<double>(tokens.at(static_cast<std::size_t>(stage)));
  const double d = static_cast<double>(stage_dim(spec, stage));
  const double macs = 4.0 * t * d * d + 2.0 * t * kWindowVolume * d +
                      2.0 * t * spec.mlp_ratio * d * d;
  return macs / 1e9;
}

double flops_estimate(const HyperparamSpec& spec, int input_frames, int input_hw,
                      int input_channels, int num_outputs) {
  require_valid(spec, ValidationMode::baseline);
  const auto tokens = stage_tokens(spec, input_frames, input_hw);
  const double patch_volume =
      static_cast<double>(spec.patch_size[0]) * spec.patch_size[1] * spec.patch_size[2];
  double macs = static_cast<double>(tokens[0]) * input_channels * patch_volume * spec.embed_dim;
  for (int i = 0; i < 4; ++i) {
    const double t = static_cast<double>(tokens[static_cast<std::size_t>(i)]);
    const double d = static_cast<double>(stage_dim(spec, i));
    const double per_block = 4.0 * t * d * d + 2.0 * t * kWindowVolume * d +
                             2.0 * t * spec.mlp_ratio * d * d;
    macs += spec.depths[static_cast<std::size_t>(i)] * per_block;
  }
  macs += static_cast<double>(stage_dim(spec, 3)) * num_outputs;
  return macs / 1e9;
}

ArchCost arch_cost(const HyperparamSpec& spec) {
  return {param_count(spec), flops_estimate(spec)};
}

void DeviceProfile::check() const {
  if (name.empty()) throw ValidationError("device profile: empty name");
  if (!(base_latency_ms >= 0.0)) throw ValidationError("device profile: base_latency_ms < 0");
  if (!(ms_per_gflop > 0.0)) throw ValidationError("device profile: ms_per_gflop must be > 0");
  if (!(batch_efficiency > 0.0 && batch_efficiency <= 1.0)) {
    throw ValidationError("device profile: batch_efficiency must be in (0, 1]");
  }
  if (!(noise_std_ms >= 0.0)) throw ValidationError("device profile: noise_std_ms < 0");
}

double latency_from_gflops(double gflops, int batch_size, const DeviceProfile& profile,
                           Rng& rng) {
  if (batch_size < 1) throw ValidationError("latency: batch_size must be >= 1");
  double ms = profile.base_latency_ms +
              profile.ms_per_gflop * gflops *
                  std::pow(static_cast<double>(batch_size), profile.batch_efficiency);
  if (profile.noise_std_ms > 0.0) {
    ms += std::normal_distribution<double>(0.0, profile.noise_std_ms)(rng);
  }
  return std::max(ms, kMinLatencyMs);
}

double synthetic_latency(const HyperparamSpec& spec, int batch_size,
                         const DeviceProfile& profile, Rng& rng) {
  return latency_from_gflops(flops_estimate(spec), batch_size, profile, rng);
}

HyperparamSpec SurrogateConfig::default_planted_optimum() {
  HyperparamSpec s;
  s.patch_size = {4, 4, 4};
  s.embed_dim = 48;
  s.depths = {2, 2, 4, 2};
  s.heads = {6, 6, 12, 12};
  s.mlp_ratio = 2;
  s.learning_rate = 5e-4;
  s.lr_step_size = 20;
  s.lr_gamma = 0.7;
  return s;
}

void SurrogateConfig::check() const {
  require_valid(planted_optimum, ValidationMode::strict);
  if (!(capacity_weight >= 0.0 && distance_weight >= 0.0 && noise_std >= 0.0)) {
    throw ValidationError("surrogate: weights and noise must be >= 0");
  }
  if (!(epochs_half_life > 0.0)) throw ValidationError("surrogate: epochs_half_life must be > 0");
}

namespace {

template <std::size_t N>
double vector_mismatch(const std::array<int, N>& a, const std::array<int, N>& b) {
  int diff = 0;
  for (std::size_t i = 0; i < N; ++i) diff += a[i] != b[i];
  return static_cast<double>(diff) / static_cast<double>(N);
}

double categorical_sum(const HyperparamSpec& a, const HyperparamSpec& b) {
  return vector_mismatch(a.patch_size, b.patch_size) + (a.embed_dim != b.embed_dim ? 1.0 : 0.0) +
         vector_mismatch(a.depths, b.depths) + vector_mismatch(a.heads, b.heads) +
         (a.mlp_ratio != b.mlp_ratio ? 1.0 : 0.0) +
         (a.lr_step_size != b.lr_step_size ? 1.0 : 0.0);
}

}  // namespace

double categorical_distance(const HyperparamSpec& a, const HyperparamSpec& b) {
  return categorical_sum(a, b) / 6.0;
}

double spec_distance(const HyperparamSpec& a, const HyperparamSpec& b) {
  const double lr =
      std::min(1.0, std::abs(std::log10(a.learning_rate) - std::log10(b.learning_rate)) / 5.0);
  const double gamma = std::min(1.0, std::abs(a.lr_gamma - b.lr_gamma) / 0.8);
  return (categorical_sum(a, b) + lr + gamma) / static_cast<double>(kAllFields.size());
}

double synthetic_val_loss(const HyperparamSpec& spec, int epochs, const SurrogateConfig& cfg,
                          Rng& rng) {
  if (epochs < 1) throw ValidationError("synthetic_val_loss: epochs must be >= 1");
  const double params = static_cast<double>(param_count(spec));
  double loss = cfg.distance_weight * spec_distance(spec, cfg.planted_optimum) +
                cfg.capacity_weight / (1.0 + std::log10(params)) +
                std::exp2(-static_cast<double>(epochs) / cfg.epochs_half_life) * kDecayScale;
  if (cfg.noise_std > 0.0) loss += std::normal_distribution<double>(0.0, cfg.noise_std)(rng);
  return std::max(loss, kMinLoss);
}

}  // namespace edgenas
