#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "gridmp/train.hpp"

namespace gridmp {

/// One labeled line of a comparison table.
struct ReportRow {
  std::string label;
  EvalSummary summary;
};

struct HighImpactRow {
  std::string experiment;  // "naive", "zero_shot", "base"
  std::string model;
  double cost_increase_percent = 0.0;
  EvalSummary summary;
};

std::string csv_quote(std::string_view field);

/// Shortest round-trip representation, so reports are byte-stable.
std::string format_number(double v);

/// One row per metric: "metric","value".
std::string summary_csv(const EvalSummary& s);

/// "model","θ","V","PG","QG"
std::string mse_table_csv(std::span<const ReportRow> rows);
/// "model","Optimality gap (%)","count","skipped"
std::string gap_table_csv(std::span<const ReportRow> rows);
/// "model","θij","Sij+","Sij−","Pb","Qb","PG","QG","V"
std::string violation_table_csv(std::span<const ReportRow> rows);
/// "model","Before PF","After PF"; rows pair up by position.
std::string pf_gap_table_csv(std::span<const ReportRow> before, std::span<const ReportRow> after);
/// "model","Sij+","Sij−","PG","QG","Pb","Qb","pf_not_converged"
std::string pf_violation_table_csv(std::span<const ReportRow> after);
std::string high_impact_csv(std::span<const HighImpactRow> rows);

/// "epoch","train_loss","val_loss","wall_seconds"
std::string history_csv(std::span<const EpochRecord> history);

/// Throws IoError.
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace gridmp
