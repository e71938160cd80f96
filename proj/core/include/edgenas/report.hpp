#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "edgenas/optimizer.hpp"
#include "edgenas/store.hpp"

namespace edgenas {

inline constexpr const char* kHistoryCsvHeader =
    "run_id,lineage,round,patch_t,patch_h,patch_w,embed_dim,d0,d1,d2,d3,h0,h1,h2,h3,"
    "mlp_ratio,lr,lr_step,lr_gamma,val_loss,inference_ms,score,accepted";

inline constexpr const char* kParetoCsvHeader =
    "run_id,lineage,round,val_loss,inference_time_ms,dominated";

/// One line per history entry. Failed evaluations leave the three metric
/// columns empty. Reals use the shortest round-trip representation.
void write_history_csv(std::ostream& out, std::string_view run_id, const RunHistory& history,
                       bool header = true);

/// Successful entries with their dominance flag (1 = dominated).
void write_pareto_csv(std::ostream& out, std::string_view run_id,
                      std::span<const HistoryEntry> entries);

/// One row of the results table; metrics of the best candidate, averaged over
/// `runs` runs of the same budget.
struct TableRow {
  int samples = 0;
  int runs = 0;
  double val_score = 0.0;
  double val_loss = 0.0;
  double inference_ms = 0.0;
  std::optional<double> test_score;
  std::optional<double> test_loss;
};

/// Rows from finished runs, one per budget in ascending order. Runs without a
/// successful evaluation are left out.
std::vector<TableRow> summary_table(std::span<const RunMetadata> runs);

std::string format_table_header();
std::string format_table_row(const TableRow& row);

/// Header, rows and, when a budget-0 row is present, the factors by which
/// every other row improves on it.
std::string format_summary(std::span<const TableRow> rows);

std::string format_medians(const MedianReport& report);

}  // namespace edgenas
