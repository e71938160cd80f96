#include "edgenas/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "edgenas/error.hpp"
#include "edgenas/random.hpp"

namespace edgenas {

double score(double val_loss, double inference_time_ms) {
  if (!(val_loss >= 0.0) || !(inference_time_ms >= 0.0) || !std::isfinite(val_loss) ||
      !std::isfinite(inference_time_ms)) {
    throw ValidationError("score: inputs must be finite and non-negative");
  }
  return val_loss * kLossWeight + inference_time_ms;
}

ScoreBreakdown ScoreBreakdown::make(double val_loss, double inference_time_ms,
                                    std::optional<double> test_loss) {
  ScoreBreakdown b;
  b.val_loss = val_loss;
  b.inference_time_ms = inference_time_ms;
  b.score = edgenas::score(val_loss, inference_time_ms);
  if (test_loss) {
    b.test_loss = *test_loss;
    b.test_score = edgenas::score(*test_loss, inference_time_ms);
  }
  return b;
}

void RunConfig::check() const {
  if (population_size < 1) throw ValidationError("run: population_size must be >= 1");
  if (total_evaluations < population_size) {
    throw ValidationError("run: total_evaluations (" + std::to_string(total_evaluations) +
                          ") must be >= population_size (" + std::to_string(population_size) +
                          ")");
  }
  if (epochs < 1) throw ValidationError("run: epochs must be >= 1");
  if (score_batch_size < 1) throw ValidationError("run: score_batch_size must be >= 1");
  if (!(measurement_timeout_s > 0.0)) {
    throw ValidationError("run: measurement_timeout_s must be > 0");
  }
  if (max_concurrency < 0) throw ValidationError("run: max_concurrency must be >= 0");
}

const HistoryEntry* RunHistory::best() const {
  const HistoryEntry* best = nullptr;
  for (const auto& e : entries) {
    if (!e.evaluation.ok()) continue;
    if (best == nullptr || e.evaluation.fitness() < best->evaluation.fitness()) best = &e;
  }
  return best;
}

int RunHistory::ok_count() const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(),
                                        [](const HistoryEntry& e) { return e.evaluation.ok(); }));
}

namespace {

std::vector<Evaluation> evaluate_all(const std::vector<HyperparamSpec>& specs,
                                     const std::vector<EvalContext>& contexts,
                                     const Evaluator& evaluator, int max_workers) {
  std::vector<Evaluation> results(specs.size());
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      try {
        results[i] = evaluator(specs[i], contexts[i]);
      } catch (const std::exception& e) {
        results[i] = Evaluation::failed(std::string("error: ") + e.what());
      }
    }
  };
  const auto workers = std::min<std::size_t>(specs.size(), static_cast<std::size_t>(max_workers));
  if (workers <= 1) {
    work();
    return results;
  }
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return results;
}

}  // namespace

RunHistory run_ea(const RunConfig& config, const Evaluator& evaluator) {
  config.check();
  const int population = config.population_size;
  const int workers = config.max_concurrency > 0 ? config.max_concurrency : population;
  Rng rng(derive_seed(config.seed, 0x6561ULL));

  RunHistory history;
  history.lineages.resize(static_cast<std::size_t>(population));

  const auto run_round = [&](int round, const std::vector<HyperparamSpec>& specs) {
    std::vector<EvalContext> contexts;
    for (int i = 0; i < static_cast<int>(specs.size()); ++i) {
      contexts.push_back({i, round,
                          derive_seed(config.seed, static_cast<std::uint64_t>(i) + 1,
                                      static_cast<std::uint64_t>(round) + 1)});
    }
    auto results = evaluate_all(specs, contexts, evaluator, workers);
    history.evaluator_calls += static_cast<int>(specs.size());

    for (std::size_t i = 0; i < specs.size(); ++i) {
      Lineage& lineage = history.lineages[i];
      HistoryEntry entry{static_cast<int>(i), round, specs[i], std::move(results[i]), false};
      if (round == 0) {
        lineage.lineage_id = static_cast<int>(i);
        entry.accepted = true;
      } else {
        entry.accepted = select(lineage.parent_evaluation.fitness(), entry.evaluation.fitness());
      }
      if (entry.accepted) {
        lineage.parent = entry.spec;
        lineage.parent_evaluation = entry.evaluation;
      }
      lineage.trace.push_back(history.entries.size());
      history.entries.push_back(std::move(entry));
    }
  };

  std::vector<HyperparamSpec> initial;
  for (int i = 0; i < population; ++i) initial.push_back(sample(rng));
  run_round(0, initial);

  int remaining = config.total_evaluations - population;
  for (int round = 1; remaining > 0; ++round) {
    const int count = std::min(population, remaining);
    std::vector<HyperparamSpec> offspring;
    for (int i = 0; i < count; ++i) {
      offspring.push_back(mutate(history.lineages[static_cast<std::size_t>(i)].parent, rng));
    }
    run_round(round, offspring);
    remaining -= count;
  }
  return history;
}

std::vector<std::int64_t> pareto_front(std::span<const ParetoPoint> points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].inference_time_ms != points[b].inference_time_ms) {
      return points[a].inference_time_ms < points[b].inference_time_ms;
    }
    return points[a].val_loss < points[b].val_loss;
  });

  std::vector<std::int64_t> front;
  double best_loss_before = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < order.size();) {
    // Group of equal inference time; only its lowest-loss points can survive,
    // and only if strictly better than every faster point.
    std::size_t end = g;
    const double t = points[order[g]].inference_time_ms;
    while (end < order.size() && points[order[end]].inference_time_ms == t) ++end;
    const double group_min = points[order[g]].val_loss;
    if (group_min < best_loss_before) {
      for (std::size_t k = g; k < end && points[order[k]].val_loss == group_min; ++k) {
        front.push_back(points[order[k]].id);
      }
      best_loss_before = group_min;
    }
    g = end;
  }
  return front;
}

namespace {

int lower_median(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

MedianReport top_decile_medians(std::span<const HistoryEntry> entries) {
  std::vector<const HistoryEntry*> ok;
  for (const auto& e : entries) {
    if (e.evaluation.ok()) ok.push_back(&e);
  }
  if (ok.size() < 10) {
    throw ValidationError("top_decile_medians: need at least 10 evaluated candidates, got " +
                          std::to_string(ok.size()));
  }
  std::stable_sort(ok.begin(), ok.end(), [](const HistoryEntry* a, const HistoryEntry* b) {
    return a->evaluation.fitness() < b->evaluation.fitness();
  });
  const std::size_t k = (ok.size() + 9) / 10;
  ok.resize(k);

  MedianReport r;
  r.candidates = entries.size();
  r.decile_size = k;
  const auto column = [&](auto&& get) {
    std::vector<int> v;
    for (const auto* e : ok) v.push_back(get(e->spec));
    return lower_median(std::move(v));
  };
  for (std::size_t i = 0; i < 3; ++i) {
    r.patch_size[i] = column([i](const HyperparamSpec& s) { return s.patch_size[i]; });
  }
  for (std::size_t i = 0; i < 4; ++i) {
    r.depths[i] = column([i](const HyperparamSpec& s) { return s.depths[i]; });
    r.heads[i] = column([i](const HyperparamSpec& s) { return s.heads[i]; });
  }
  r.embed_dim = column([](const HyperparamSpec& s) { return s.embed_dim; });
  r.mlp_ratio = column([](const HyperparamSpec& s) { return s.mlp_ratio; });
  r.lr_step_size = column([](const HyperparamSpec& s) { return s.lr_step_size; });
  std::vector<double> lr, gamma;
  for (const auto* e : ok) {
    lr.push_back(e->spec.learning_rate);
    gamma.push_back(e->spec.lr_gamma);
  }
  r.learning_rate = median(std::move(lr));
  r.lr_gamma = median(std::move(gamma));
  return r;
}

nlohmann::json to_json(const ScoreBreakdown& b) {
  nlohmann::json doc{{"val_loss", b.val_loss},
                     {"inference_time_ms", b.inference_time_ms},
                     {"score", b.score}};
  if (b.test_loss) doc["test_loss"] = *b.test_loss;
  if (b.test_score) doc["test_score"] = *b.test_score;
  return doc;
}

ScoreBreakdown breakdown_from_json(const nlohmann::json& doc) {
  ScoreBreakdown b;
  b.val_loss = doc.at("val_loss").get<double>();
  b.inference_time_ms = doc.at("inference_time_ms").get<double>();
  b.score = doc.at("score").get<double>();
  if (doc.contains("test_loss")) b.test_loss = doc.at("test_loss").get<double>();
  if (doc.contains("test_score")) b.test_score = doc.at("test_score").get<double>();
  return b;
}

nlohmann::json to_json(const RunHistory& history) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : history.entries) {
    nlohmann::json j{{"lineage", e.lineage_id},
                     {"round", e.round},
                     {"spec", to_json(e.spec)},
                     {"status", e.evaluation.status},
                     {"accepted", e.accepted}};
    j["breakdown"] = e.evaluation.breakdown ? to_json(*e.evaluation.breakdown) : nlohmann::json();
    if (e.evaluation.architecture_id) j["architecture_id"] = *e.evaluation.architecture_id;
    entries.push_back(std::move(j));
  }
  return nlohmann::json{{"evaluator_calls", history.evaluator_calls},
                        {"population_size", history.lineages.size()},
                        {"entries", std::move(entries)}};
}

RunHistory history_from_json(const nlohmann::json& doc) {
  RunHistory h;
  h.evaluator_calls = doc.at("evaluator_calls").get<int>();
  h.lineages.resize(doc.at("population_size").get<std::size_t>());
  for (std::size_t i = 0; i < h.lineages.size(); ++i) h.lineages[i].lineage_id = static_cast<int>(i);
  for (const auto& j : doc.at("entries")) {
    HistoryEntry e;
    e.lineage_id = j.at("lineage").get<int>();
    e.round = j.at("round").get<int>();
    e.spec = from_json(j.at("spec"));
    e.evaluation.status = j.at("status").get<std::string>();
    e.accepted = j.at("accepted").get<bool>();
    if (!j.at("breakdown").is_null()) e.evaluation.breakdown = breakdown_from_json(j.at("breakdown"));
    if (j.contains("architecture_id")) e.evaluation.architecture_id = j.at("architecture_id").get<std::int64_t>();
    auto& lineage = h.lineages.at(static_cast<std::size_t>(e.lineage_id));
    lineage.trace.push_back(h.entries.size());
    if (e.accepted) {
      lineage.parent = e.spec;
      lineage.parent_evaluation = e.evaluation;
    }
    h.entries.push_back(std::move(e));
  }
  return h;
}

}  // namespace edgenas
