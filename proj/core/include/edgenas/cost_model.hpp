#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "edgenas/random.hpp"
#include "edgenas/search_space.hpp"

namespace edgenas {

/// Self-attention window (frames, height, width). Fixed, not searched.
inline constexpr std::array<int, 3> kWindow{8, 7, 7};
inline constexpr int kWindowVolume = kWindow[0] * kWindow[1] * kWindow[2];

inline constexpr int kDefaultInputChannels = 1;
inline constexpr int kDefaultNumOutputs = 2;  // laser speed and power
inline constexpr int kDefaultFrames = 16;
inline constexpr int kDefaultHW = 256;

struct ArchCost {
  std::int64_t param_count = 0;
  double gflops = 0.0;  // multiply-accumulates, 1e9 units
};

/// Learnable parameters of the four-stage video transformer described by
/// `spec`: patch embedding, blocks (QKV, projection, two layer-norms,
/// relative-position bias table, MLP), patch merging, final norm, and the
/// regression head. Throws ValidationError on specs that fail baseline-mode
/// validation.
std::int64_t param_count(const HyperparamSpec& spec,
                         int input_channels = kDefaultInputChannels,
                         int num_outputs = kDefaultNumOutputs);

/// Tokens entering each stage. Spatial resolution halves between stages
/// (odd sides round up); the temporal axis is not merged.
std::array<std::int64_t, 4> stage_tokens(const HyperparamSpec& spec,
                                         int input_frames = kDefaultFrames,
                                         int input_hw = kDefaultHW);

/// GMACs of one transformer block at `stage`.
double block_gflops(const HyperparamSpec& spec, int stage, int input_frames = kDefaultFrames,
                    int input_hw = kDefaultHW);

/// GMACs for one forward pass of a single clip. Throws ValidationError naming
/// the axis ("temporal", "height", "width") when the input is not divisible by
/// the patch size along it.
double flops_estimate(const HyperparamSpec& spec, int input_frames = kDefaultFrames,
                      int input_hw = kDefaultHW, int input_channels = kDefaultInputChannels,
                      int num_outputs = kDefaultNumOutputs);

ArchCost arch_cost(const HyperparamSpec& spec);

/// Simulated inference device.
struct DeviceProfile {
  std::string name = "sim-orin";
  double base_latency_ms = 5.0;
  double ms_per_gflop = 5.9;
  double batch_efficiency = 0.9;  // exponent on batch size, in (0, 1]
  double noise_std_ms = 0.5;

  void check() const;
};

/// Clamp floor for simulated latencies.
inline constexpr double kMinLatencyMs = 0.01;

/// base + ms_per_gflop * gflops * batch^efficiency + N(0, noise^2), floored at
/// kMinLatencyMs. Draws from `rng` only when noise_std_ms > 0.
double latency_from_gflops(double gflops, int batch_size, const DeviceProfile& profile,
                           Rng& rng);

double synthetic_latency(const HyperparamSpec& spec, int batch_size,
                         const DeviceProfile& profile, Rng& rng);

/// Planted-optimum loss surface standing in for real training.
struct SurrogateConfig {
  HyperparamSpec planted_optimum = default_planted_optimum();
  double capacity_weight = 0.05;
  double distance_weight = 0.1;
  double noise_std = 0.002;
  double epochs_half_life = 1.0;

  static HyperparamSpec default_planted_optimum();
  void check() const;
};

/// Normalized distance in [0, 1]: the mean over the eight hyperparameter rows
/// of a per-row mismatch. Scalar categorical rows contribute 0 or 1, vector
/// rows the fraction of differing entries, the learning rate
/// |delta log10| / 5 and gamma |delta| / 0.8 (both capped at 1).
double spec_distance(const HyperparamSpec& a, const HyperparamSpec& b);

/// Same as spec_distance restricted to the categorical rows (learning rate and
/// gamma excluded).
double categorical_distance(const HyperparamSpec& a, const HyperparamSpec& b);

/// distance_weight * D + capacity_weight / (1 + log10(params))
///   + 0.05 * 2^(-epochs / half_life) + N(0, noise^2), floored at 1e-6.
double synthetic_val_loss(const HyperparamSpec& spec, int epochs, const SurrogateConfig& cfg,
                          Rng& rng);

}  // namespace edgenas
