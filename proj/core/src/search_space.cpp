#include "edgenas/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "edgenas/error.hpp"

namespace edgenas {

namespace {

bool contains(const std::vector<int>& values, int v) {
  return std::find(values.begin(), values.end(), v) != values.end();
}

std::string describe_set(const std::vector<int>& values) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < values.size(); ++i) {
    os << (i ? ", " : "") << values[i];
  }
  os << '}';
  return os.str();
}

template <std::size_t N>
std::string describe_vec(const std::array<int, N>& v) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < N; ++i) os << (i ? "," : "") << v[i];
  os << ']';
  return os.str();
}

int pick(const std::vector<int>& values, Rng& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, values.size() - 1);
  return values[dist(rng)];
}

// Uniform over the set minus `current`. A value outside the set is replaced
// by a uniform draw over the whole set.
int pick_other(const std::vector<int>& values, int current, Rng& rng) {
  if (!contains(values, current)) return pick(values, rng);
  if (values.size() < 2) return current;
  std::uniform_int_distribution<std::size_t> dist(0, values.size() - 2);
  std::size_t idx = dist(rng);
  const auto cur_idx = static_cast<std::size_t>(
      std::find(values.begin(), values.end(), current) - values.begin());
  if (idx >= cur_idx) ++idx;
  return values[idx];
}

template <std::size_t N>
void mutate_vector(std::array<int, N>& v, const std::vector<int>& values, Rng& rng) {
  if (values.size() < 2) return;
  std::bernoulli_distribution flip(1.0 / static_cast<double>(N));
  bool changed = false;
  while (!changed) {
    for (auto& entry : v) {
      if (flip(rng)) {
        entry = pick_other(values, entry, rng);
        changed = true;
      }
    }
  }
}

template <std::size_t N>
void repair_vector(std::array<int, N>& v, const std::vector<int>& values, Rng& rng) {
  for (auto& entry : v) {
    if (!contains(values, entry)) entry = pick(values, rng);
  }
}

template <std::size_t N>
void check_vector(std::vector<Violation>& out, Field field, const std::array<int, N>& v,
                  const std::array<int, N>& fallback, bool allow_fallback,
                  const std::vector<int>& values) {
  for (std::size_t i = 0; i < N; ++i) {
    if (contains(values, v[i])) continue;
    if (allow_fallback && v[i] == fallback[i]) continue;
    out.push_back({field, std::string(field_name(field)) + " = " + describe_vec(v) +
                              ": entry " + std::to_string(i) + " not in " +
                              describe_set(values)});
    return;
  }
}

void check_scalar(std::vector<Violation>& out, Field field, int v, int fallback,
                  bool allow_fallback, const std::vector<int>& values) {
  if (contains(values, v) || (allow_fallback && v == fallback)) return;
  out.push_back({field, std::string(field_name(field)) + " = " + std::to_string(v) +
                            " not in " + describe_set(values)});
}

}  // namespace

std::string_view field_name(Field field) {
  switch (field) {
    case Field::patch_size: return "patch_size";
    case Field::embed_dim: return "embed_dim";
    case Field::depths: return "depths";
    case Field::heads: return "heads";
    case Field::mlp_ratio: return "mlp_ratio";
    case Field::learning_rate: return "learning_rate";
    case Field::lr_step_size: return "lr_step_size";
    case Field::lr_gamma: return "lr_gamma";
  }
  return "?";
}

void SearchSpaceDef::check() const {
  for (const auto* set : {&patch_values, &embed_dim_values, &depth_values, &head_values,
                          &mlp_ratio_values, &lr_step_values}) {
    if (set->empty()) throw ValidationError("search space: empty value set");
  }
  if (!(lr_min > 0.0 && lr_min <= lr_max)) {
    throw ValidationError("search space: learning-rate bounds must satisfy 0 < min <= max");
  }
  if (!(gamma_low < gamma_high)) {
    throw ValidationError("search space: gamma bounds must satisfy low < high");
  }
}

const SearchSpaceDef& default_space() {
  static const SearchSpaceDef space{};
  return space;
}

HyperparamSpec default_config() {
  HyperparamSpec s;
  s.patch_size = {2, 4, 4};
  s.embed_dim = 96;
  s.depths = {2, 2, 6, 2};
  s.heads = {3, 6, 12, 24};
  s.mlp_ratio = 4;
  s.learning_rate = 1e-4;
  s.lr_step_size = 10;
  s.lr_gamma = 0.5;
  return s;
}

std::vector<Violation> validate(const HyperparamSpec& spec, ValidationMode mode,
                                const SearchSpaceDef& space) {
  const bool relaxed = mode == ValidationMode::baseline;
  const HyperparamSpec base = default_config();
  std::vector<Violation> out;

  check_vector(out, Field::patch_size, spec.patch_size, base.patch_size, relaxed,
               space.patch_values);
  check_scalar(out, Field::embed_dim, spec.embed_dim, base.embed_dim, relaxed,
               space.embed_dim_values);
  check_vector(out, Field::depths, spec.depths, base.depths, relaxed, space.depth_values);
  check_vector(out, Field::heads, spec.heads, base.heads, relaxed, space.head_values);
  check_scalar(out, Field::mlp_ratio, spec.mlp_ratio, base.mlp_ratio, relaxed,
               space.mlp_ratio_values);

  const bool lr_ok = std::isfinite(spec.learning_rate) &&
                     spec.learning_rate >= space.lr_min && spec.learning_rate <= space.lr_max;
  if (!lr_ok && !(relaxed && spec.learning_rate == base.learning_rate)) {
    std::ostringstream os;
    os << "learning_rate = " << spec.learning_rate << " outside [" << space.lr_min << ", "
       << space.lr_max << "]";
    out.push_back({Field::learning_rate, os.str()});
  }

  check_scalar(out, Field::lr_step_size, spec.lr_step_size, base.lr_step_size, relaxed,
               space.lr_step_values);

  const bool gamma_ok = std::isfinite(spec.lr_gamma) && spec.lr_gamma > space.gamma_low &&
                        spec.lr_gamma < space.gamma_high;
  if (!gamma_ok && !(relaxed && spec.lr_gamma == base.lr_gamma)) {
    std::ostringstream os;
    os << "lr_gamma = " << spec.lr_gamma << " outside (" << space.gamma_low << ", "
       << space.gamma_high << ")";
    out.push_back({Field::lr_gamma, os.str()});
  }
  return out;
}

void require_valid(const HyperparamSpec& spec, ValidationMode mode,
                   const SearchSpaceDef& space) {
  const auto violations = validate(spec, mode, space);
  if (violations.empty()) return;
  std::string msg = "invalid spec:";
  for (const auto& v : violations) msg += " " + v.message + ";";
  throw ValidationError(msg);
}

HyperparamSpec sample(Rng& rng, const SearchSpaceDef& space) {
  HyperparamSpec s;
  for (auto& p : s.patch_size) p = pick(space.patch_values, rng);
  s.embed_dim = pick(space.embed_dim_values, rng);
  for (auto& d : s.depths) d = pick(space.depth_values, rng);
  for (auto& h : s.heads) h = pick(space.head_values, rng);
  s.mlp_ratio = pick(space.mlp_ratio_values, rng);
  std::uniform_real_distribution<double> log_lr(std::log10(space.lr_min),
                                                std::log10(space.lr_max));
  s.learning_rate = std::clamp(std::pow(10.0, log_lr(rng)), space.lr_min, space.lr_max);
  s.lr_step_size = pick(space.lr_step_values, rng);
  std::uniform_real_distribution<double> gamma(space.gamma_low, space.gamma_high);
  do {
    s.lr_gamma = gamma(rng);
  } while (s.lr_gamma <= space.gamma_low);
  return s;
}

HyperparamSpec mutate(const HyperparamSpec& parent, Rng& rng, const SearchSpaceDef& space) {
  std::bernoulli_distribution select(kFieldMutationRate);
  std::normal_distribution<double> lr_step(0.0, kLogLrStepStd);
  std::normal_distribution<double> gamma_step(0.0, kGammaStepStd);
  const double gamma_lo = space.gamma_low + kGammaEpsilon;
  const double gamma_hi = space.gamma_high - kGammaEpsilon;

  for (;;) {
    std::array<bool, kAllFields.size()> mask{};
    bool any = false;
    while (!any) {
      for (auto& m : mask) {
        m = select(rng);
        any = any || m;
      }
    }

    HyperparamSpec child = parent;
    for (std::size_t i = 0; i < kAllFields.size(); ++i) {
      if (!mask[i]) continue;
      switch (kAllFields[i]) {
        case Field::patch_size: mutate_vector(child.patch_size, space.patch_values, rng); break;
        case Field::embed_dim:
          child.embed_dim = pick_other(space.embed_dim_values, child.embed_dim, rng);
          break;
        case Field::depths: mutate_vector(child.depths, space.depth_values, rng); break;
        case Field::heads: mutate_vector(child.heads, space.head_values, rng); break;
        case Field::mlp_ratio:
          child.mlp_ratio = pick_other(space.mlp_ratio_values, child.mlp_ratio, rng);
          break;
        case Field::learning_rate:
          child.learning_rate = std::clamp(child.learning_rate * std::pow(10.0, lr_step(rng)),
                                           space.lr_min, space.lr_max);
          break;
        case Field::lr_step_size:
          child.lr_step_size = pick_other(space.lr_step_values, child.lr_step_size, rng);
          break;
        case Field::lr_gamma:
          child.lr_gamma = std::clamp(child.lr_gamma + gamma_step(rng), gamma_lo, gamma_hi);
          break;
      }
    }

    // Pull baseline-only values back into the sampling domain.
    repair_vector(child.patch_size, space.patch_values, rng);
    if (!contains(space.embed_dim_values, child.embed_dim)) {
      child.embed_dim = pick(space.embed_dim_values, rng);
    }
    repair_vector(child.depths, space.depth_values, rng);
    repair_vector(child.heads, space.head_values, rng);
    if (!contains(space.mlp_ratio_values, child.mlp_ratio)) {
      child.mlp_ratio = pick(space.mlp_ratio_values, rng);
    }
    if (!contains(space.lr_step_values, child.lr_step_size)) {
      child.lr_step_size = pick(space.lr_step_values, rng);
    }
    if (!std::isfinite(child.learning_rate)) child.learning_rate = parent.learning_rate;
    child.learning_rate = std::clamp(child.learning_rate, space.lr_min, space.lr_max);
    if (!(child.lr_gamma > space.gamma_low && child.lr_gamma < space.gamma_high)) {
      child.lr_gamma = std::clamp(child.lr_gamma, gamma_lo, gamma_hi);
    }

    if (child != parent && validate(child, ValidationMode::strict, space).empty()) {
      return child;
    }
  }
}

nlohmann::json to_json(const HyperparamSpec& spec) {
  return nlohmann::json{
      {"patch_size", spec.patch_size},
      {"embed_dim", spec.embed_dim},
      {"depths", spec.depths},
      {"heads", spec.heads},
      {"mlp_ratio", spec.mlp_ratio},
      {"learning_rate", spec.learning_rate},
      {"lr_step_size", spec.lr_step_size},
      {"lr_gamma", spec.lr_gamma},
  };
}

namespace {

const nlohmann::json& require_key(const nlohmann::json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) throw DecodeError(key, "missing");
  return *it;
}

int get_int(const nlohmann::json& doc, const char* key) {
  const auto& v = require_key(doc, key);
  if (!v.is_number_integer()) throw DecodeError(key, "expected an integer");
  return v.get<int>();
}

double get_real(const nlohmann::json& doc, const char* key) {
  const auto& v = require_key(doc, key);
  if (!v.is_number()) throw DecodeError(key, "expected a number");
  return v.get<double>();
}

template <std::size_t N>
std::array<int, N> get_int_array(const nlohmann::json& doc, const char* key) {
  const auto& v = require_key(doc, key);
  if (!v.is_array() || v.size() != N) {
    throw DecodeError(key, "expected an array of " + std::to_string(N) + " integers");
  }
  std::array<int, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!v[i].is_number_integer()) {
      throw DecodeError(key, "expected an array of " + std::to_string(N) + " integers");
    }
    out[i] = v[i].get<int>();
  }
  return out;
}

}  // namespace

HyperparamSpec from_json(const nlohmann::json& document) {
  if (!document.is_object()) throw DecodeError("<document>", "expected a JSON object");
  HyperparamSpec s;
  s.patch_size = get_int_array<3>(document, "patch_size");
  s.embed_dim = get_int(document, "embed_dim");
  s.depths = get_int_array<4>(document, "depths");
  s.heads = get_int_array<4>(document, "heads");
  s.mlp_ratio = get_int(document, "mlp_ratio");
  s.learning_rate = get_real(document, "learning_rate");
  s.lr_step_size = get_int(document, "lr_step_size");
  s.lr_gamma = get_real(document, "lr_gamma");
  return s;
}

std::string encode(const HyperparamSpec& spec) { return to_json(spec).dump(); }

HyperparamSpec decode(std::string_view document) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw DecodeError("<document>", std::string("malformed JSON: ") + e.what());
  }
  return from_json(doc);
}

}  // namespace edgenas
