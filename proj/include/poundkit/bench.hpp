#pragma once

// Benchmark harness: prediction file ingestion, per-subset evaluation,
// macro aggregation into per-dataset and grand averages, report and curve
// export.
//
// Aggregation is unweighted at both levels. A metric that is unavailable for
// a subset (e.g. AP on a fake-only subset) is left out of that metric's mean;
// a dataset with no available value for a metric reports it as unavailable.

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "poundkit/error.hpp"
#include "poundkit/metrics.hpp"
#include "poundkit/parallel.hpp"
#include "poundkit/report.hpp"

namespace poundkit::bench {

using metrics::MetricReport;
using metrics::ScoredSample;

struct PredictionRecord {
  std::string id;
  double score = 0.0;
  int label = 0;
  std::optional<std::string> class_name;
  std::string subset;
  std::string dataset;
  std::size_t row = 0;  // source line, header = 1
};

enum class InputFormat { kCsv, kJsonl };
enum class ReportFormat { kMarkdown, kCsv };

inline InputFormat format_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".ndjson") return InputFormat::kJsonl;
  return InputFormat::kCsv;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

// Splits one CSV line. Supports double-quoted fields with "" escapes; no
// embedded newlines.
inline std::vector<std::string> split_csv(std::string_view line, std::size_t row) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"' && cur.empty()) {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) throw DataError("unterminated quote (row " + std::to_string(row) + ")");
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline double parse_score(std::string_view text, std::size_t row) {
  double v = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || text.empty())
    throw DataError("malformed score '" + std::string(text) + "' (row " + std::to_string(row) + ", field score)");
  return v;
}

inline int parse_label(std::string_view text, std::size_t row) {
  if (text == "0") return 0;
  if (text == "1") return 1;
  throw DataError("label must be 0 or 1 (row " + std::to_string(row) + ")");
}

inline void check_record(const PredictionRecord& r) {
  if (!(r.score >= 0.0 && r.score <= 1.0))
    throw DataError("score out of range [0,1] (row " + std::to_string(r.row) + ", field score)");
  if (r.id.empty()) throw DataError("missing id (row " + std::to_string(r.row) + ", field id)");
}

inline void check_unique(const std::vector<PredictionRecord>& records) {
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& r : records)
    if (!seen.emplace(r.dataset, r.subset, r.id).second)
      throw DataError("duplicate record (dataset, subset, id) = (" + r.dataset + ", " + r.subset + ", " + r.id +
                      ") (row " + std::to_string(r.row) + ")");
}

inline std::string trim_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace detail

inline std::vector<PredictionRecord> parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("missing csv header");
  line = detail::trim_cr(line);
  if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
  const auto header = detail::split_csv(line, 1);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* required : {"id", "score", "label", "subset", "dataset"})
    if (!col.contains(required)) throw DataError(std::string("csv header lacks column '") + required + "'");
  const std::optional<std::size_t> class_col = col.contains("class") ? std::optional(col["class"]) : std::nullopt;

  std::vector<PredictionRecord> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = detail::trim_cr(line);
    if (line.empty()) continue;
    const auto f = detail::split_csv(line, row);
    if (f.size() != header.size())
      throw DataError("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()) +
                      " (row " + std::to_string(row) + ")");
    PredictionRecord r;
    r.row = row;
    r.id = f[col["id"]];
    r.score = detail::parse_score(f[col["score"]], row);
    r.label = detail::parse_label(f[col["label"]], row);
    if (class_col && !f[*class_col].empty()) r.class_name = f[*class_col];
    r.subset = f[col["subset"]];
    r.dataset = f[col["dataset"]];
    detail::check_record(r);
    out.push_back(std::move(r));
  }
  detail::check_unique(out);
  return out;
}

inline std::vector<PredictionRecord> parse_jsonl(std::istream& in) {
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    line = detail::trim_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = " (row " + std::to_string(row) + ")";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw DataError("malformed json" + where);
    }
    if (!j.is_object()) throw DataError("expected a json object" + where);
    auto text_field = [&](const char* key, bool required) -> std::optional<std::string> {
      if (!j.contains(key) || j[key].is_null()) {
        if (required) throw DataError(std::string("missing field ") + key + where);
        return std::nullopt;
      }
      if (j[key].is_string()) return j[key].get<std::string>();
      if (j[key].is_number_integer()) return std::to_string(j[key].get<long long>());
      throw DataError(std::string("field ") + key + " must be a string" + where);
    };
    PredictionRecord r;
    r.row = row;
    r.id = *text_field("id", true);
    if (!j.contains("score") || !j["score"].is_number()) throw DataError("malformed score" + where + ", field score");
    r.score = j["score"].get<double>();
    if (!j.contains("label") || !j["label"].is_number_integer()) throw DataError("label must be 0 or 1" + where);
    const auto label = j["label"].get<long long>();
    if (label != 0 && label != 1) throw DataError("label must be 0 or 1" + where);
    r.label = static_cast<int>(label);
    r.class_name = text_field("class", false);
    if (r.class_name && r.class_name->empty()) r.class_name.reset();
    r.subset = *text_field("subset", true);
    r.dataset = *text_field("dataset", true);
    detail::check_record(r);
    out.push_back(std::move(r));
  }
  detail::check_unique(out);
  return out;
}

inline std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path, InputFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return format == InputFormat::kCsv ? parse_csv(in) : parse_jsonl(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
  return load_predictions(path, format_for(path));
}

inline void write_predictions_csv(std::ostream& out, std::span<const PredictionRecord> records) {
  out << "id,score,label,class,subset,dataset\n";
  for (const auto& r : records) {
    out << detail::csv_escape(r.id) << ',' << report::full_cell(r.score) << ',' << r.label << ','
        << detail::csv_escape(r.class_name.value_or("")) << ',' << detail::csv_escape(r.subset) << ','
        << detail::csv_escape(r.dataset) << '\n';
  }
}

inline std::vector<ScoredSample> to_samples(std::span<const PredictionRecord> records) {
  std::vector<ScoredSample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.score, r.label});
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

struct DatasetEntry {
  std::string name;
  std::vector<std::filesystem::path> files;
  std::string subset_key = "subset";  // "subset" or "class"
};

struct BenchmarkManifest {
  std::vector<DatasetEntry> datasets;
};

// Relative file paths resolve against the manifest's directory.
inline BenchmarkManifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object() || !j.contains("datasets") || !j["datasets"].is_array())
    throw DataError("manifest must be an object with a 'datasets' array");
  BenchmarkManifest m;
  std::set<std::string> names;
  for (const auto& d : j["datasets"]) {
    if (!d.is_object() || !d.contains("name") || !d["name"].is_string())
      throw DataError("manifest dataset entry needs a string 'name'");
    DatasetEntry e;
    e.name = d["name"].get<std::string>();
    if (!names.insert(e.name).second) throw DataError("duplicate dataset name in manifest: " + e.name);
    if (!d.contains("files") || !d["files"].is_array() || d["files"].empty())
      throw DataError("dataset " + e.name + " needs a non-empty 'files' array");
    for (const auto& f : d["files"]) {
      if (!f.is_string()) throw DataError("dataset " + e.name + ": file entries must be strings");
      std::filesystem::path p = f.get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      if (!std::filesystem::exists(p)) throw DataError("dataset " + e.name + ": missing file " + p.string());
      e.files.push_back(p);
    }
    if (d.contains("subset_key")) {
      if (!d["subset_key"].is_string()) throw DataError("dataset " + e.name + ": subset_key must be a string");
      e.subset_key = d["subset_key"].get<std::string>();
    }
    if (e.subset_key != "subset" && e.subset_key != "class")
      throw DataError("dataset " + e.name + ": subset_key must be 'subset' or 'class'");
    m.datasets.push_back(std::move(e));
  }
  return m;
}

inline BenchmarkManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
  return parse_manifest(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Evaluation and aggregation

using SubsetKey = std::pair<std::string, std::string>;  // (dataset, subset)

struct EvalOptions {
  double op_threshold = metrics::kDefaultOpThreshold;
  std::size_t grid_points = metrics::kDefaultGridPoints;
};

inline MetricReport evaluate_subset(std::span<const PredictionRecord> records, const EvalOptions& opt = {}) {
  if (records.empty()) throw Error("empty subset");
  const auto samples = to_samples(records);
  const auto grid = metrics::uniform_grid(opt.grid_points);
  return metrics::full_report(samples, opt.op_threshold, grid);
}

inline std::map<SubsetKey, std::vector<PredictionRecord>> group_by_subset(std::span<const PredictionRecord> records) {
  std::map<SubsetKey, std::vector<PredictionRecord>> groups;
  for (const auto& r : records) groups[{r.dataset, r.subset}].push_back(r);
  return groups;
}

// Evaluates every (dataset, subset) group, possibly concurrently.
inline std::map<SubsetKey, MetricReport> evaluate_subsets(std::span<const PredictionRecord> records,
                                                          const EvalOptions& opt = {}) {
  const auto groups = group_by_subset(records);
  std::vector<const std::pair<const SubsetKey, std::vector<PredictionRecord>>*> items;
  for (const auto& g : groups) items.push_back(&g);
  std::vector<MetricReport> reports(items.size());
  parallel_for(items.size(), [&](std::size_t i) { reports[i] = evaluate_subset(items[i]->second, opt); });
  std::map<SubsetKey, MetricReport> out;
  for (std::size_t i = 0; i < items.size(); ++i) out.emplace(items[i]->first, reports[i]);
  return out;
}

struct AggregateResult {
  std::map<SubsetKey, MetricReport> per_subset;
  std::map<std::string, MetricReport> per_dataset;
  std::map<std::string, double> grand;  // metric label -> value, plus "Average"
};

namespace detail {

struct MeanAccumulator {
  double sum = 0.0;
  std::size_t count = 0;
  void add(const std::optional<double>& v) {
    if (v) {
      sum += *v;
      ++count;
    }
  }
  std::optional<double> mean() const {
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
  }
};

}  // namespace detail

inline AggregateResult aggregate(std::map<SubsetKey, MetricReport> per_subset) {
  if (per_subset.empty()) throw Error("nothing to aggregate");
  AggregateResult res;
  res.per_subset = std::move(per_subset);

  std::map<std::string, std::vector<const MetricReport*>> by_dataset;
  for (const auto& [key, rep] : res.per_subset) by_dataset[key.first].push_back(&rep);

  for (const auto& [name, reps] : by_dataset) {
    MetricReport avg;
    for (const auto& col : report::kColumns) {
      detail::MeanAccumulator acc;
      for (const auto* r : reps) acc.add(r->*col.field);
      avg.*col.field = acc.mean();
    }
    for (const auto* r : reps) {
      avg.n_real += r->n_real;
      avg.n_fake += r->n_fake;
    }
    res.per_dataset.emplace(name, avg);
  }

  for (const auto& col : report::kColumns) {
    detail::MeanAccumulator acc;
    for (const auto& [name, rep] : res.per_dataset) acc.add(rep.*col.field);
    if (auto m = acc.mean()) res.grand.emplace(std::string(col.label), *m);
  }
  detail::MeanAccumulator headline;
  for (auto name : report::kHeadlineMetrics) {
    const auto it = res.grand.find(std::string(name));
    if (it == res.grand.end()) {
      headline = {};
      break;
    }
    headline.add(it->second);
  }
  if (headline.count == report::kHeadlineMetrics.size()) res.grand.emplace("Average", *headline.mean());
  return res;
}

// Loads every dataset of a manifest. Records take the manifest's dataset
// name; the subset is taken from the configured column.
inline std::vector<PredictionRecord> load_manifest_records(const BenchmarkManifest& manifest) {
  std::vector<PredictionRecord> all;
  for (const auto& ds : manifest.datasets) {
    std::vector<PredictionRecord> records;
    for (const auto& f : ds.files) {
      auto part = load_predictions(f);
      for (auto& r : part) {
        r.dataset = ds.name;
        if (ds.subset_key == "class") {
          if (!r.class_name)
            throw DataError(f.string() + ": missing class (row " + std::to_string(r.row) + ", field class)");
          r.subset = *r.class_name;
        }
      }
      records.insert(records.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    try {
      detail::check_unique(records);
    } catch (const DataError& e) {
      throw DataError("dataset " + ds.name + ": " + e.what());
    }
    all.insert(all.end(), std::make_move_iterator(records.begin()), std::make_move_iterator(records.end()));
  }
  return all;
}

inline AggregateResult run_benchmark(const BenchmarkManifest& manifest, const EvalOptions& opt = {}) {
  const auto records = load_manifest_records(manifest);
  if (records.empty()) throw DataError("benchmark contains no records");
  return aggregate(evaluate_subsets(records, opt));
}

// ---------------------------------------------------------------------------
// Export

inline constexpr std::string_view kAverageRow = "Average";

inline std::string render_markdown(const AggregateResult& result) {
  if (result.per_subset.empty()) throw Error("nothing to report");
  std::vector<std::string> headers{"Dataset", "Subset"};
  for (const auto& col : report::kColumns) headers.emplace_back(col.label);
  headers.emplace_back("n_real");
  headers.emplace_back("n_fake");
  report::MarkdownTable table(headers, 2);

  auto row = [&](const std::string& ds, const std::string& subset, const MetricReport& r) {
    std::vector<std::string> cells{ds, subset};
    for (auto& c : report::percent_cells(r)) cells.push_back(std::move(c));
    cells.push_back(std::to_string(r.n_real));
    cells.push_back(std::to_string(r.n_fake));
    table.add_row(std::move(cells));
  };
  for (const auto& [name, avg] : result.per_dataset) {
    for (auto it = result.per_subset.lower_bound({name, ""});
         it != result.per_subset.end() && it->first.first == name; ++it)
      row(name, it->first.second, it->second);
    row(name, "**" + std::string(kAverageRow) + "**", avg);
  }

  std::vector<std::string> grand_headers{"Summary"};
  std::vector<std::string> grand_cells{"Grand average"};
  for (const auto& col : report::kColumns) {
    grand_headers.emplace_back(col.label);
    const auto it = result.grand.find(std::string(col.label));
    grand_cells.push_back(report::percent_cell(it == result.grand.end() ? std::nullopt : std::optional(it->second)));
  }
  grand_headers.emplace_back(kAverageRow);
  const auto avg = result.grand.find(std::string(kAverageRow));
  grand_cells.push_back(report::percent_cell(avg == result.grand.end() ? std::nullopt : std::optional(avg->second)));
  report::MarkdownTable grand(grand_headers, 1);
  grand.add_row(grand_cells);

  std::string out = "# Detection benchmark\n\n";
  out += "Values are percentages; \"-\" marks a metric that is undefined for single-class subsets.\n\n";
  out += table.str();
  out += "\n## Grand average\n\n";
  out += "Average = mean of AP, F1, ACC, AUC_f1 and AUC_f2.\n\n";
  out += grand.str();
  return out;
}

// kind is one of subset | dataset | grand; unavailable metrics are empty.
inline std::string render_csv(const AggregateResult& result) {
  if (result.per_subset.empty()) throw Error("nothing to report");
  std::ostringstream out;
  out << "kind,dataset,subset";
  for (const auto& col : report::kColumns) out << ',' << col.csv_name;
  out << ",average,n_real,n_fake\n";

  auto row = [&](std::string_view kind, const std::string& ds, const std::string& subset, const MetricReport& r) {
    out << kind << ',' << detail::csv_escape(ds) << ',' << detail::csv_escape(subset);
    for (const auto& col : report::kColumns) out << ',' << report::full_cell(r.*col.field);
    out << ",," << r.n_real << ',' << r.n_fake << '\n';
  };
  for (const auto& [key, rep] : result.per_subset) row("subset", key.first, key.second, rep);
  for (const auto& [name, rep] : result.per_dataset) row("dataset", name, "", rep);

  out << "grand,,";
  for (const auto& col : report::kColumns) {
    const auto it = result.grand.find(std::string(col.label));
    out << ',' << (it == result.grand.end() ? "" : report::full_cell(it->second));
  }
  const auto avg = result.grand.find(std::string(kAverageRow));
  out << ',' << (avg == result.grand.end() ? "" : report::full_cell(avg->second)) << ",,\n";
  return out.str();
}

inline void export_report(const AggregateResult& result, ReportFormat format, const std::filesystem::path& path) {
  const auto text = format == ReportFormat::kMarkdown ? render_markdown(result) : render_csv(result);
  report::write_file(path, text);
}

inline std::string render_curves(std::span<const ScoredSample> samples, std::span<const double> betas,
                                 std::span<const double> grid) {
  if (betas.empty()) throw std::invalid_argument("no beta values");
  std::vector<metrics::ThresholdCurve> curves;
  for (double b : betas) curves.push_back(metrics::threshold_curve(samples, b, grid));
  std::ostringstream out;
  out << "tau,precision,recall";
  for (double b : betas) {
    char buf[32];
    std::snprintf(buf, sizeof buf, ",f%g", b);
    out << buf;
  }
  out << '\n';
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out << report::full_cell(grid[i]) << ',' << report::full_cell(curves[0].precision[i]) << ','
        << report::full_cell(curves[0].recall[i]);
    for (const auto& c : curves) out << ',' << report::full_cell(c.f_beta[i]);
    out << '\n';
  }
  return out.str();
}

// Writes tau, precision, recall and one F-beta column per beta (f1, f2 by default).
inline void export_curves(std::span<const PredictionRecord> records, std::span<const double> betas,
                          std::span<const double> grid, const std::filesystem::path& path) {
  const auto samples = to_samples(records);
  report::write_file(path, render_curves(samples, betas, grid));
}

}  // namespace poundkit::bench
