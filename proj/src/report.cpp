#include "gridmp/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "gridmp/errors.hpp"

namespace gridmp {

std::string csv_quote(std::string_view field) {
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string header(std::initializer_list<std::string_view> cols) {
  std::string out;
  for (std::string_view c : cols) {
    if (!out.empty()) out += ',';
    out += csv_quote(c);
  }
  return out + '\n';
}

class Row {
 public:
  explicit Row(std::string_view label) : text_(csv_quote(label)) {}
  Row& num(double v) {
    text_ += ',' + format_number(v);
    return *this;
  }
  Row& count(std::size_t v) {
    text_ += ',' + std::to_string(v);
    return *this;
  }
  std::string str() const { return text_ + '\n'; }

 private:
  std::string text_;
};

}  // namespace

std::string summary_csv(const EvalSummary& s) {
  std::string out = header({"metric", "value"});
  auto put = [&](std::string_view name, double v) { out += Row(name).num(v).str(); };
  put("θ", s.mse.theta);
  put("V", s.mse.vm);
  put("PG", s.mse.pg);
  put("QG", s.mse.qg);
  put("Optimality gap (%)", s.gap_percent);
  put("θij", s.violations.angle_diff);
  put("Sij+", s.violations.flow_fwd);
  put("Sij−", s.violations.flow_rev);
  put("Pb", s.violations.p_balance);
  put("Qb", s.violations.q_balance);
  put("PG bound", s.violations.pg_bound);
  put("QG bound", s.violations.qg_bound);
  put("V bound", s.violations.v_bound);
  out += Row("count").count(s.count).str();
  out += Row("skipped").count(s.skipped).str();
  out += Row("below_label_cost").count(s.below_label_cost).str();
  if (s.pf_not_converged) out += Row("pf_not_converged").count(s.pf_not_converged).str();
  if (s.inference_seconds) put("inference_seconds", *s.inference_seconds);
  return out;
}

std::string mse_table_csv(std::span<const ReportRow> rows) {
  std::string out = header({"model", "θ", "V", "PG", "QG"});
  for (const auto& r : rows)
    out += Row(r.label).num(r.summary.mse.theta).num(r.summary.mse.vm).num(r.summary.mse.pg).num(r.summary.mse.qg).str();
  return out;
}

std::string gap_table_csv(std::span<const ReportRow> rows) {
  std::string out = header({"model", "Optimality gap (%)", "count", "skipped"});
  for (const auto& r : rows) out += Row(r.label).num(r.summary.gap_percent).count(r.summary.count).count(r.summary.skipped).str();
  return out;
}

std::string violation_table_csv(std::span<const ReportRow> rows) {
  std::string out = header({"model", "θij", "Sij+", "Sij−", "Pb", "Qb", "PG", "QG", "V"});
  for (const auto& r : rows) {
    const ViolationReport& v = r.summary.violations;
    out += Row(r.label)
               .num(v.angle_diff)
               .num(v.flow_fwd)
               .num(v.flow_rev)
               .num(v.p_balance)
               .num(v.q_balance)
               .num(v.pg_bound)
               .num(v.qg_bound)
               .num(v.v_bound)
               .str();
  }
  return out;
}

std::string pf_gap_table_csv(std::span<const ReportRow> before, std::span<const ReportRow> after) {
  if (before.size() != after.size()) throw DimensionError("pf_gap_table_csv: before/after row counts differ");
  std::string out = header({"model", "Before PF", "After PF"});
  for (std::size_t i = 0; i < before.size(); ++i)
    out += Row(before[i].label).num(before[i].summary.gap_percent).num(after[i].summary.gap_percent).str();
  return out;
}

std::string pf_violation_table_csv(std::span<const ReportRow> after) {
  std::string out = header({"model", "Sij+", "Sij−", "PG", "QG", "Pb", "Qb", "pf_not_converged"});
  for (const auto& r : after) {
    const ViolationReport& v = r.summary.violations;
    out += Row(r.label)
               .num(v.flow_fwd)
               .num(v.flow_rev)
               .num(v.pg_bound)
               .num(v.qg_bound)
               .num(v.p_balance)
               .num(v.q_balance)
               .count(r.summary.pf_not_converged)
               .str();
  }
  return out;
}

std::string high_impact_csv(std::span<const HighImpactRow> rows) {
  std::string out = header({"experiment", "model", "Mean cost increase (%)", "Optimality gap (%)", "θ", "V", "PG",
                            "QG", "count", "skipped"});
  for (const auto& r : rows) {
    const EvalSummary& s = r.summary;
    out += csv_quote(r.experiment) + ',' +
           Row(r.model)
               .num(r.cost_increase_percent)
               .num(s.gap_percent)
               .num(s.mse.theta)
               .num(s.mse.vm)
               .num(s.mse.pg)
               .num(s.mse.qg)
               .count(s.count)
               .count(s.skipped)
               .str();
  }
  return out;
}

std::string history_csv(std::span<const EpochRecord> history) {
  std::string out = header({"epoch", "train_loss", "val_loss", "wall_seconds"});
  for (const auto& r : history)
    out += std::to_string(r.epoch) + ',' + format_number(r.train_loss) + ',' + format_number(r.val_loss) + ',' +
           format_number(r.wall_seconds) + '\n';
  return out;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace gridmp
