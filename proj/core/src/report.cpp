#include "edgenas/report.hpp"

#include <map>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "edgenas/error.hpp"

namespace edgenas {

void write_history_csv(std::ostream& out, std::string_view run_id, const RunHistory& history,
                       bool header) {
  if (header) out << kHistoryCsvHeader << '\n';
  for (const auto& e : history.entries) {
    const auto& s = e.spec;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},", run_id,
                       e.lineage_id, e.round, s.patch_size[0], s.patch_size[1], s.patch_size[2],
                       s.embed_dim, s.depths[0], s.depths[1], s.depths[2], s.depths[3],
                       s.heads[0], s.heads[1], s.heads[2], s.heads[3], s.mlp_ratio,
                       s.learning_rate, s.lr_step_size, s.lr_gamma);
    if (const auto& b = e.evaluation.breakdown) {
      out << fmt::format("{},{},{},", b->val_loss, b->inference_time_ms, b->score);
    } else {
      out << ",,,";
    }
    out << (e.accepted ? 1 : 0) << '\n';
  }
}

void write_pareto_csv(std::ostream& out, std::string_view run_id,
                      std::span<const HistoryEntry> entries) {
  std::vector<ParetoPoint> points;
  std::vector<const HistoryEntry*> sources;
  for (const auto& e : entries) {
    if (!e.evaluation.ok()) continue;
    points.push_back({e.evaluation.breakdown->val_loss, e.evaluation.breakdown->inference_time_ms,
                      static_cast<std::int64_t>(points.size())});
    sources.push_back(&e);
  }
  const auto front = pareto_front(points);
  const std::unordered_set<std::int64_t> on_front(front.begin(), front.end());
  out << kParetoCsvHeader << '\n';
  for (const auto& p : points) {
    const auto* e = sources[static_cast<std::size_t>(p.id)];
    out << fmt::format("{},{},{},{},{},{}\n", run_id, e->lineage_id, e->round, p.val_loss,
                       p.inference_time_ms, on_front.contains(p.id) ? 0 : 1);
  }
}

std::vector<TableRow> summary_table(std::span<const RunMetadata> runs) {
  std::map<int, std::vector<TableRow>> by_budget;
  for (const auto& run : runs) {
    if (!run.summary_document) continue;
    const auto doc = nlohmann::json::parse(*run.summary_document);
    if (doc.at("best").is_null()) continue;
    const auto b = breakdown_from_json(doc.at("best").at("breakdown"));
    TableRow r;
    r.samples = doc.at("samples").get<int>();
    r.runs = 1;
    r.val_score = b.score;
    r.val_loss = b.val_loss;
    r.inference_ms = b.inference_time_ms;
    r.test_score = b.test_score;
    r.test_loss = b.test_loss;
    by_budget[r.samples].push_back(r);
  }

  std::vector<TableRow> rows;
  for (const auto& [samples, group] : by_budget) {
    TableRow avg;
    avg.samples = samples;
    avg.runs = static_cast<int>(group.size());
    bool all_tested = true;
    double ts = 0.0, tl = 0.0;
    for (const auto& r : group) {
      avg.val_score += r.val_score;
      avg.val_loss += r.val_loss;
      avg.inference_ms += r.inference_ms;
      if (r.test_score && r.test_loss) {
        ts += *r.test_score;
        tl += *r.test_loss;
      } else {
        all_tested = false;
      }
    }
    const double n = static_cast<double>(group.size());
    avg.val_score /= n;
    avg.val_loss /= n;
    avg.inference_ms /= n;
    if (all_tested) {
      avg.test_score = ts / n;
      avg.test_loss = tl / n;
    }
    rows.push_back(avg);
  }
  return rows;
}

namespace {

std::string opt4(const std::optional<double>& v) {
  return v ? fmt::format("{:.4f}", *v) : std::string("-");
}

}  // namespace

std::string format_table_header() {
  return fmt::format("{:>14} | {:>10} | {:>9} | {:>14} | {:>10} | {:>9}", "Num. Samples",
                     "Val. Score", "Val. Loss", "Inference Time", "Test Score", "Test Loss");
}

std::string format_table_row(const TableRow& row) {
  const std::string samples =
      row.samples == 0 ? std::string("0 (baseline)") : std::to_string(row.samples);
  return fmt::format("{:>14} | {:>10.4f} | {:>9.4f} | {:>14} | {:>10} | {:>9}", samples,
                     row.val_score, row.val_loss, fmt::format("{:.2f}ms", row.inference_ms),
                     opt4(row.test_score), opt4(row.test_loss));
}

std::string format_summary(std::span<const TableRow> rows) {
  std::string out = format_table_header() + "\n";
  const TableRow* baseline = nullptr;
  for (const auto& r : rows) {
    out += format_table_row(r) + "\n";
    if (r.samples == 0) baseline = &r;
  }
  if (baseline != nullptr) {
    out += "\nImprovement over baseline (baseline / best):\n";
    for (const auto& r : rows) {
      if (r.samples == 0) continue;
      out += fmt::format("{:>14} | inference time x{:.2f} | val. score x{:.2f}\n", r.samples,
                         baseline->inference_ms / r.inference_ms,
                         baseline->val_score / r.val_score);
    }
  }
  return out;
}

std::string format_medians(const MedianReport& r) {
  const auto arr = [](const auto& a) {
    std::string s = "[";
    for (std::size_t i = 0; i < a.size(); ++i) s += (i ? ", " : "") + std::to_string(a[i]);
    return s + "]";
  };
  std::string out = fmt::format("Top-decile medians ({} of {} candidates)\n", r.decile_size,
                                r.candidates);
  out += fmt::format("  patch_size     {}\n", arr(r.patch_size));
  out += fmt::format("  embed_dim      {}\n", r.embed_dim);
  out += fmt::format("  depths         {}\n", arr(r.depths));
  out += fmt::format("  heads          {}\n", arr(r.heads));
  out += fmt::format("  mlp_ratio      {}\n", r.mlp_ratio);
  out += fmt::format("  learning_rate  {:.6g}\n", r.learning_rate);
  out += fmt::format("  lr_step_size   {}\n", r.lr_step_size);
  out += fmt::format("  lr_gamma       {:.4f}\n", r.lr_gamma);
  return out;
}

}  // namespace edgenas
