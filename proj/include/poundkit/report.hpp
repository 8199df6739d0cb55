#pragma once

// Table rendering shared by benchmark reports and ablation tables.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "poundkit/error.hpp"
#include "poundkit/metrics.hpp"

namespace poundkit::report {

using metrics::MetricReport;

struct MetricColumn {
  std::string_view label;     // markdown header
  std::string_view csv_name;  // csv header
  std::optional<double> MetricReport::*field;
};

// Column order used everywhere a report row is printed.
inline constexpr std::array<MetricColumn, 8> kColumns{{
    {"AP", "ap", &MetricReport::ap},
    {"F1", "f1", &MetricReport::f1_at_op},
    {"ACC", "acc", &MetricReport::acc},
    {"ACC_r", "acc_real", &MetricReport::acc_real},
    {"ACC_f", "acc_fake", &MetricReport::acc_fake},
    {"AUC_roc", "auc_roc", &MetricReport::auc_roc},
    {"AUC_f1", "auc_f1", &MetricReport::auc_f1},
    {"AUC_f2", "auc_f2", &MetricReport::auc_f2},
}};

// Metrics averaged into the grand "Average" column.
inline constexpr std::array<std::string_view, 5> kHeadlineMetrics{"AP", "F1", "ACC", "AUC_f1", "AUC_f2"};

// Markdown cells are percentages with two decimals; "-" marks unavailable.
inline std::string percent_cell(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
  return buf;
}

// CSV cells carry full round-trip precision; empty marks unavailable.
inline std::string full_cell(const std::optional<double>& v) {
  if (!v) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

inline std::string fixed(double v, int decimals) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

class MarkdownTable {
 public:
  explicit MarkdownTable(std::vector<std::string> headers, std::size_t left_aligned = 1)
      : headers_(std::move(headers)), left_aligned_(left_aligned) {}

  void add_row(std::vector<std::string> cells) {
    if (cells.size() != headers_.size()) throw std::invalid_argument("markdown row width mismatch");
    rows_.push_back(std::move(cells));
  }

  std::string str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
      out += '|';
      for (const auto& c : cells) out += ' ' + c + " |";
      out += '\n';
    };
    line(headers_);
    out += '|';
    for (std::size_t i = 0; i < headers_.size(); ++i) out += i < left_aligned_ ? "---|" : "---:|";
    out += '\n';
    for (const auto& r : rows_) line(r);
    return out;
  }

 private:
  std::vector<std::string> headers_;
  std::vector<std::vector<std::string>> rows_;
  std::size_t left_aligned_;
};

inline std::vector<std::string> percent_cells(const MetricReport& r) {
  std::vector<std::string> cells;
  for (const auto& col : kColumns) cells.push_back(percent_cell(r.*col.field));
  return cells;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace poundkit::report
