#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgenas/random.hpp"

namespace edgenas {

/// One row of the hyperparameter table. Vector-valued rows (patch size,
/// depths, heads) count as a single field for mutation and distance.
enum class Field {
  patch_size,
  embed_dim,
  depths,
  heads,
  mlp_ratio,
  learning_rate,
  lr_step_size,
  lr_gamma,
};

inline constexpr std::array<Field, 8> kAllFields{
    Field::patch_size,    Field::embed_dim,   Field::depths,
    Field::heads,         Field::mlp_ratio,   Field::learning_rate,
    Field::lr_step_size,  Field::lr_gamma};

/// Published document key for a field ("patch_size", "embed_dim", ...).
std::string_view field_name(Field field);

/// A candidate Video-Swin-style architecture plus its optimizer settings.
struct HyperparamSpec {
  std::array<int, 3> patch_size{};  // temporal, height, width
  int embed_dim = 0;
  std::array<int, 4> depths{};
  std::array<int, 4> heads{};
  int mlp_ratio = 0;
  double learning_rate = 0.0;
  int lr_step_size = 0;
  double lr_gamma = 0.0;

  friend bool operator==(const HyperparamSpec&, const HyperparamSpec&) = default;
};

/// Sampling domain. Categorical rows are value sets; the learning rate is
/// sampled log-uniformly on a closed interval and gamma uniformly on an open
/// interval.
struct SearchSpaceDef {
  std::vector<int> patch_values{2, 4};
  std::vector<int> embed_dim_values{24, 48};
  std::vector<int> depth_values{1, 2, 4};
  std::vector<int> head_values{3, 6, 12, 24};
  std::vector<int> mlp_ratio_values{1, 2, 3, 4};
  double lr_min = 1e-5;
  double lr_max = 1.0;
  std::vector<int> lr_step_values{10, 20, 40};
  double gamma_low = 0.1;   // exclusive
  double gamma_high = 0.9;  // exclusive

  /// Throws ValidationError if a value set is empty or bounds are unordered.
  void check() const;
};

const SearchSpaceDef& default_space();

/// The hand-designed baseline architecture. Its embed_dim (96) and one depth
/// entry (6) sit outside the sampling sets, so it only passes baseline-mode
/// validation.
HyperparamSpec default_config();

enum class ValidationMode { strict, baseline };

struct Violation {
  Field field;
  std::string message;
};

std::vector<Violation> validate(const HyperparamSpec& spec, ValidationMode mode,
                                const SearchSpaceDef& space = default_space());

/// Throws ValidationError listing every violation.
void require_valid(const HyperparamSpec& spec, ValidationMode mode,
                   const SearchSpaceDef& space = default_space());

HyperparamSpec sample(Rng& rng, const SearchSpaceDef& space = default_space());

/// Probability that any one field is selected for mutation.
inline constexpr double kFieldMutationRate = 1.0 / 8.0;
/// Standard deviation of the log10 learning-rate step.
inline constexpr double kLogLrStepStd = 0.5;
inline constexpr double kGammaStepStd = 0.1;
inline constexpr double kGammaEpsilon = 1e-6;

/// Produces an offspring that differs from `parent` and passes strict
/// validation. Each field is selected independently with probability 1/8
/// (the mask is redrawn until non-empty); fields of a baseline parent that
/// lie outside the sampling sets are always resampled.
HyperparamSpec mutate(const HyperparamSpec& parent, Rng& rng,
                      const SearchSpaceDef& space = default_space());

nlohmann::json to_json(const HyperparamSpec& spec);
/// Throws DecodeError naming the first missing or ill-typed field.
/// Unknown keys are ignored so trainer documents can carry extra fields.
HyperparamSpec from_json(const nlohmann::json& document);

/// Canonical compact JSON (keys sorted, reals printed losslessly).
std::string encode(const HyperparamSpec& spec);
HyperparamSpec decode(std::string_view document);

}  // namespace edgenas
