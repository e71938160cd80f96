#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgenas/search_space.hpp"

namespace edgenas {

/// Weight applied to the validation loss when scalarizing.
inline constexpr double kLossWeight = 1000.0;

/// val_loss * 1000 + inference_time_ms. Throws ValidationError on negative
/// or non-finite inputs.
double score(double val_loss, double inference_time_ms);

/// Strict improvement: ties keep the parent.
constexpr bool select(double parent_score, double offspring_score) noexcept {
  return offspring_score < parent_score;
}

struct ScoreBreakdown {
  double val_loss = 0.0;
  double inference_time_ms = 0.0;
  double score = 0.0;
  std::optional<double> test_loss;
  std::optional<double> test_score;

  static ScoreBreakdown make(double val_loss, double inference_time_ms,
                             std::optional<double> test_loss = std::nullopt);
};

struct RunConfig {
  int population_size = 8;
  int total_evaluations = 16;
  std::uint64_t seed = 0;
  int epochs = 2;
  int score_batch_size = 1;
  double measurement_timeout_s = 600.0;
  /// Upper bound on concurrently running evaluations; 0 means population_size.
  int max_concurrency = 0;

  void check() const;
};

/// Identifies one evaluation. `seed` is derived from the run seed, lineage and
/// round so that evaluators can be deterministic regardless of scheduling.
struct EvalContext {
  int lineage_id = 0;
  int round = 0;
  std::uint64_t seed = 0;
};

struct Evaluation {
  std::optional<ScoreBreakdown> breakdown;  // empty on failure
  std::string status = "ok";
  std::optional<std::int64_t> architecture_id;

  bool ok() const { return breakdown.has_value(); }
  /// Score, or +inf for failed evaluations.
  double fitness() const {
    return breakdown ? breakdown->score : std::numeric_limits<double>::infinity();
  }
  static Evaluation failed(std::string status) { return {std::nullopt, std::move(status), {}}; }
};

/// Must be safe to call concurrently. Exceptions count as failed evaluations.
using Evaluator = std::function<Evaluation(const HyperparamSpec&, const EvalContext&)>;

struct HistoryEntry {
  int lineage_id = 0;
  int round = 0;  // 0 = initial parent
  HyperparamSpec spec;
  Evaluation evaluation;
  /// Became (or stayed as) the lineage's parent after this evaluation.
  bool accepted = false;
};

struct Lineage {
  int lineage_id = 0;
  HyperparamSpec parent;
  Evaluation parent_evaluation;
  std::vector<std::size_t> trace;  // indices into RunHistory::entries
};

struct RunHistory {
  std::vector<HistoryEntry> entries;  // ordered by (round, lineage_id)
  std::vector<Lineage> lineages;
  int evaluator_calls = 0;

  /// Lowest-score successful entry; earliest wins ties.
  const HistoryEntry* best() const;
  int ok_count() const;
};

/// Population of independent (1+1) lineages. The initial parents are sampled
/// and evaluated (they count toward the budget); each following round mutates
/// every lineage's parent once and keeps the offspring on strict improvement.
/// When the remaining budget is smaller than the population, the last round
/// covers the lowest lineage ids only. Evaluations within a round run
/// concurrently.
RunHistory run_ea(const RunConfig& config, const Evaluator& evaluator);

struct ParetoPoint {
  double val_loss = 0.0;
  double inference_time_ms = 0.0;
  std::int64_t id = 0;
};

/// Ids of non-dominated points (dominated = another point no worse in both
/// objectives and strictly better in one), sorted by inference time, then loss,
/// then input order. O(n log n).
std::vector<std::int64_t> pareto_front(std::span<const ParetoPoint> points);

/// Median hyperparameters of the best-scoring tenth of the candidates.
/// Categorical values use the lower median, continuous values the usual one;
/// vector fields are handled element-wise.
struct MedianReport {
  std::size_t candidates = 0;
  std::size_t decile_size = 0;
  std::array<int, 3> patch_size{};
  int embed_dim = 0;
  std::array<int, 4> depths{};
  std::array<int, 4> heads{};
  int mlp_ratio = 0;
  double learning_rate = 0.0;
  int lr_step_size = 0;
  double lr_gamma = 0.0;
};

/// Uses successful entries only; needs at least 10. Throws ValidationError.
MedianReport top_decile_medians(std::span<const HistoryEntry> entries);

nlohmann::json to_json(const ScoreBreakdown& b);
ScoreBreakdown breakdown_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RunHistory& history);
RunHistory history_from_json(const nlohmann::json& doc);

}  // namespace edgenas
