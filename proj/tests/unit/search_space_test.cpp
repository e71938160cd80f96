#include <algorithm>
#include <bit>
#include <cmath>

#include <gtest/gtest.h>

#include "edgenas/error.hpp"
#include "edgenas/search_space.hpp"

namespace edgenas {
namespace {

bool names(const std::vector<Violation>& v, Field f) {
  return std::any_of(v.begin(), v.end(), [f](const Violation& x) { return x.field == f; });
}

HyperparamSpec interior_spec() {
  HyperparamSpec s;
  s.patch_size = {2, 4, 2};
  s.embed_dim = 24;
  s.depths = {1, 2, 4, 1};
  s.heads = {3, 6, 12, 24};
  s.mlp_ratio = 2;
  s.learning_rate = 1e-3;
  s.lr_step_size = 20;
  s.lr_gamma = 0.5;
  return s;
}

TEST(SearchSpace, DefaultConfigMatchesBaselineTable) {
  const HyperparamSpec d = default_config();
  EXPECT_EQ(d.patch_size, (std::array<int, 3>{2, 4, 4}));
  EXPECT_EQ(d.embed_dim, 96);
  EXPECT_EQ(d.depths, (std::array<int, 4>{2, 2, 6, 2}));
  EXPECT_EQ(d.heads, (std::array<int, 4>{3, 6, 12, 24}));
  EXPECT_EQ(d.mlp_ratio, 4);
  EXPECT_DOUBLE_EQ(d.learning_rate, 1e-4);
  EXPECT_EQ(d.lr_step_size, 10);
  EXPECT_DOUBLE_EQ(d.lr_gamma, 0.5);
}

TEST(SearchSpace, DefaultConfigOnlyPassesBaselineMode) {
  const auto strict = validate(default_config(), ValidationMode::strict);
  EXPECT_TRUE(names(strict, Field::embed_dim));
  EXPECT_TRUE(names(strict, Field::depths));
  EXPECT_TRUE(validate(default_config(), ValidationMode::baseline).empty());
}

TEST(SearchSpace, BaselineModeStillRejectsForeignValues) {
  HyperparamSpec s = default_config();
  s.embed_dim = 64;
  EXPECT_TRUE(names(validate(s, ValidationMode::baseline), Field::embed_dim));
}

TEST(SearchSpace, GammaOutsideOpenIntervalIsNamed) {
  HyperparamSpec s = interior_spec();
  s.lr_gamma = 0.95;
  EXPECT_TRUE(names(validate(s, ValidationMode::strict), Field::lr_gamma));
  s.lr_gamma = 0.9;
  EXPECT_TRUE(names(validate(s, ValidationMode::strict), Field::lr_gamma));
  s.lr_gamma = 0.1;
  EXPECT_TRUE(names(validate(s, ValidationMode::strict), Field::lr_gamma));
}

TEST(SearchSpace, LearningRateBoundsAreClosed) {
  HyperparamSpec s = interior_spec();
  s.learning_rate = 1e-5;
  EXPECT_TRUE(validate(s, ValidationMode::strict).empty());
  s.learning_rate = 1.0;
  EXPECT_TRUE(validate(s, ValidationMode::strict).empty());
  s.learning_rate = 1.0000001;
  EXPECT_TRUE(names(validate(s, ValidationMode::strict), Field::learning_rate));
}

TEST(SearchSpace, RequireValidThrows) {
  EXPECT_THROW(require_valid(default_config(), ValidationMode::strict), ValidationError);
  EXPECT_NO_THROW(require_valid(default_config(), ValidationMode::baseline));
}

TEST(SearchSpace, SampleIsDeterministicPerSeed) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample(a), sample(b));
}

TEST(SearchSpace, SamplesAndMutantsStayInRange) {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const HyperparamSpec s = sample(rng);
    ASSERT_TRUE(validate(s, ValidationMode::strict).empty());
    const HyperparamSpec m = mutate(s, rng);
    ASSERT_TRUE(validate(m, ValidationMode::strict).empty());
    ASSERT_NE(m, s);
  }
}

TEST(SearchSpace, LearningRateMedianIsLogUniform) {
  Rng rng(11);
  std::vector<double> logs;
  for (int i = 0; i < 10000; ++i) logs.push_back(std::log10(sample(rng).learning_rate));
  std::nth_element(logs.begin(), logs.begin() + 5000, logs.end());
  EXPECT_NEAR(logs[5000], -2.5, 0.1);
}

TEST(SearchSpace, MutatingBaselineYieldsStrictOffspring) {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const HyperparamSpec m = mutate(default_config(), rng);
    ASSERT_TRUE(validate(m, ValidationMode::strict).empty());
    ASSERT_TRUE(m.embed_dim == 24 || m.embed_dim == 48);
  }
}

// Probability that one given field is selected when each of the 8 fields is
// selected with probability 1/8 and empty masks are redrawn, by enumerating
// all 2^8 masks.
double conditional_selection_rate() {
  const double p = kFieldMutationRate;
  double selected = 0.0, nonempty = 0.0;
  for (unsigned mask = 1; mask < 256; ++mask) {
    const int k = __builtin_popcount(mask);
    const double w = std::pow(p, k) * std::pow(1.0 - p, 8 - k);
    nonempty += w;
    if (mask & 1u) selected += w;
  }
  return selected / nonempty;
}

TEST(SearchSpace, PerFieldChangeFrequency) {
  const double expected = conditional_selection_rate();
  EXPECT_NEAR(expected, 0.19042, 1e-4);

  const HyperparamSpec parent = interior_spec();
  Rng rng(2024);
  constexpr int kTrials = 10000;
  std::array<int, 8> changed{};
  for (int i = 0; i < kTrials; ++i) {
    const HyperparamSpec c = mutate(parent, rng);
    changed[0] += c.patch_size != parent.patch_size;
    changed[1] += c.embed_dim != parent.embed_dim;
    changed[2] += c.depths != parent.depths;
    changed[3] += c.heads != parent.heads;
    changed[4] += c.mlp_ratio != parent.mlp_ratio;
    changed[5] += c.learning_rate != parent.learning_rate;
    changed[6] += c.lr_step_size != parent.lr_step_size;
    changed[7] += c.lr_gamma != parent.lr_gamma;
  }
  // Binomial sd at n = 10^4 is about 0.004; allow 5 sd.
  for (std::size_t f = 0; f < changed.size(); ++f) {
    const double rate = static_cast<double>(changed[f]) / kTrials;
    EXPECT_GE(rate, 0.08) << field_name(kAllFields[f]);
    EXPECT_LE(rate, 0.22) << field_name(kAllFields[f]);
    EXPECT_NEAR(rate, expected, 0.02) << field_name(kAllFields[f]);
  }
}

TEST(SearchSpace, EncodeDecodeRoundTrip) {
  EXPECT_EQ(decode(encode(default_config())), default_config());
  HyperparamSpec s = interior_spec();
  s.learning_rate = 3.141592653589793e-4;
  s.lr_gamma = 0.1 + 1e-6;
  const HyperparamSpec back = decode(encode(s));
  EXPECT_EQ(back, s);
  EXPECT_EQ(std::bit_cast<std::uint64_t>(back.learning_rate),
            std::bit_cast<std::uint64_t>(s.learning_rate));

  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const HyperparamSpec x = sample(rng);
    ASSERT_EQ(decode(encode(x)), x);
  }
}

TEST(SearchSpace, EncodingIsCanonical) {
  const std::string doc = encode(interior_spec());
  auto reordered = nlohmann::json::parse(doc);
  EXPECT_EQ(encode(from_json(reordered)), doc);
  EXPECT_LT(doc.find("\"depths\""), doc.find("\"embed_dim\""));
}

TEST(SearchSpace, DecodeNamesMissingField) {
  auto doc = to_json(interior_spec());
  doc.erase("depths");
  try {
    decode(doc.dump());
    FAIL() << "expected DecodeError";
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.field(), "depths");
  }
}

TEST(SearchSpace, DecodeNamesIllTypedField) {
  auto doc = to_json(interior_spec());
  doc["heads"] = {3, 6, "x", 24};
  try {
    decode(doc.dump());
    FAIL() << "expected DecodeError";
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.field(), "heads");
  }
  EXPECT_THROW(decode("{not json"), DecodeError);
  EXPECT_THROW(decode("[1,2]"), DecodeError);
}

TEST(SearchSpace, DecodeIgnoresExtraKeys) {
  auto doc = to_json(interior_spec());
  doc["epochs"] = 2;
  EXPECT_EQ(decode(doc.dump()), interior_spec());
}

}  // namespace
}  // namespace edgenas
