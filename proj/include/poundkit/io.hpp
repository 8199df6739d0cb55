#pragma once

// File formats for checkpoints, embedding batches and training history.
//
// Checkpoint (checkpoint.json):
//   format       "poundkit-checkpoint"
//   version      1
//   model_seed   seed the class tokens and encoder are regenerated from
//   space        SpaceConfig fields
//   class_names  K strings
//   v_real       M * d_tok numbers, row-major
//   v_fake       M * d_tok numbers, row-major
//   v_vision     d numbers
//
// Embedding batch (<split>.csv): header id,label,class,e0..e{d-1}; one row
// per image embedding, class as a 0-based index.
//
// Synthetic data directory: meta.json plus train.csv, test_in.csv and
// test_shift.csv.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "poundkit/bench.hpp"
#include "poundkit/config.hpp"
#include "poundkit/error.hpp"
#include "poundkit/objective.hpp"
#include "poundkit/report.hpp"
#include "poundkit/synthgen.hpp"
#include "poundkit/trainer.hpp"

namespace poundkit::io {

using nlohmann::json;
using objective::Batch;
using objective::ContextPair;
using objective::PromptModel;

inline constexpr const char* kCheckpointFormat = "poundkit-checkpoint";
inline constexpr const char* kSynthFormat = "poundkit-synth";

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {

inline json flat_row_major(const objective::Matrix& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  return a;
}

inline void read_row_major(const json& a, objective::Matrix& m, const char* what) {
  if (!a.is_array() || a.size() != static_cast<std::size_t>(m.size()))
    throw DataError(std::string("checkpoint field ") + what + " has the wrong length");
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!a[k].is_number()) throw DataError(std::string("checkpoint field ") + what + " must be numeric");
      m(r, c) = a[k++].get<double>();
    }
}

}  // namespace detail

inline json checkpoint_json(const PromptModel& model, std::uint64_t model_seed, const ContextPair& ctx) {
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = 1;
  j["model_seed"] = model_seed;
  j["space"] = config::to_json(model.space);
  j["class_names"] = model.tokens.names;
  j["v_real"] = detail::flat_row_major(ctx.v_real);
  j["v_fake"] = detail::flat_row_major(ctx.v_fake);
  j["v_vision"] = detail::flat_row_major(ctx.v_vision);
  return j;
}

struct Checkpoint {
  std::uint64_t model_seed = 0;
  PromptModel model;
  ContextPair params;
};

inline Checkpoint checkpoint_from_json(const json& j) {
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat) throw DataError("not a poundkit checkpoint");
  if (j.value("version", 0) != 1) throw DataError("unsupported checkpoint version");
  Checkpoint ck;
  try {
    ck.model_seed = j.at("model_seed").get<std::uint64_t>();
  } catch (const json::exception&) {
    throw DataError("checkpoint lacks a valid model_seed");
  }
  if (!j.contains("space")) throw DataError("checkpoint lacks space");
  ck.model = objective::make_model(config::space_from_json(j["space"]), ck.model_seed);
  if (j.contains("class_names")) {
    const auto& names = j["class_names"];
    if (!names.is_array() || names.size() != ck.model.space.classes) throw DataError("checkpoint class_names length mismatch");
    for (std::size_t i = 0; i < names.size(); ++i) ck.model.tokens.names[i] = names[i].get<std::string>();
  }
  ck.params = ContextPair::zeros(ck.model.space);
  detail::read_row_major(j.value("v_real", json()), ck.params.v_real, "v_real");
  detail::read_row_major(j.value("v_fake", json()), ck.params.v_fake, "v_fake");
  objective::Matrix vision(ck.params.v_vision.size(), 1);
  detail::read_row_major(j.value("v_vision", json()), vision, "v_vision");
  ck.params.v_vision = vision.col(0);
  if (!ck.params.all_finite()) throw DataError("checkpoint holds non-finite parameters");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const PromptModel& model, std::uint64_t model_seed,
                            const ContextPair& ctx) {
  report::write_file(path, checkpoint_json(model, model_seed, ctx).dump(2) + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(config::read_json_file(path));
}

// ---------------------------------------------------------------------------
// Embedding batches

inline std::string render_batch(const Batch& b) {
  std::ostringstream out;
  out << "id,label,class";
  for (Eigen::Index j = 0; j < b.images.cols(); ++j) out << ",e" << j;
  out << '\n';
  for (std::size_t i = 0; i < b.size(); ++i) {
    out << i << ',' << b.labels[i] << ',' << b.classes[i];
    for (Eigen::Index j = 0; j < b.images.cols(); ++j)
      out << ',' << report::full_cell(b.images(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
  return out.str();
}

inline Batch parse_batch(std::istream& in, std::size_t num_classes) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("missing embedding header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = bench::detail::split_csv(line, 1);
  if (header.size() < 4 || header[0] != "id" || header[1] != "label" || header[2] != "class")
    throw DataError("embedding header must start with id,label,class followed by e0..");
  const std::size_t dim = header.size() - 3;

  std::vector<std::vector<double>> rows;
  Batch b;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = bench::detail::split_csv(line, row);
    const std::string where = " (row " + std::to_string(row) + ")";
    if (f.size() != header.size()) throw DataError("wrong field count" + where);
    b.labels.push_back(bench::detail::parse_label(f[1], row));
    std::size_t cls = 0;
    const auto [p, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), cls);
    if (ec != std::errc() || p != f[2].data() + f[2].size() || f[2].empty())
      throw DataError("malformed class index" + where + ", field class");
    if (cls >= num_classes) throw DataError("class index out of range" + where);
    b.classes.push_back(cls);
    std::vector<double> values(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      double v = 0.0;
      const auto& s = f[3 + j];
      const auto [q, ec2] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec2 != std::errc() || q != s.data() + s.size() || s.empty())
        throw DataError("malformed embedding value" + where + ", field e" + std::to_string(j));
      values[j] = v;
    }
    rows.push_back(std::move(values));
  }
  b.images.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < dim; ++j) b.images(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  b.validate(num_classes, dim);
  return b;
}

struct SynthDir {
  synthgen::SynthConfig config;
  std::vector<std::string> class_names;
  Batch train;
  Batch test_in;
  Batch test_shift;
};

inline void save_synth_dir(const std::filesystem::path& dir, const synthgen::SynthConfig& cfg,
                           const synthgen::SynthData& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string());
  json meta;
  meta["format"] = kSynthFormat;
  meta["version"] = 1;
  meta["synth"] = config::to_json(cfg);
  std::vector<std::string> names;
  for (std::size_t c = 0; c < cfg.classes; ++c) names.push_back("class" + std::to_string(c));
  meta["class_names"] = names;
  meta["splits"] = {{"train", "train.csv"}, {"test_in", "test_in.csv"}, {"test_shift", "test_shift.csv"}};
  report::write_file(dir / "meta.json", meta.dump(2) + "\n");
  report::write_file(dir / "train.csv", render_batch(data.train));
  report::write_file(dir / "test_in.csv", render_batch(data.test_in));
  report::write_file(dir / "test_shift.csv", render_batch(data.test_shift));
}

inline SynthDir load_synth_dir(const std::filesystem::path& dir) {
  const json meta = config::read_json_file(dir / "meta.json");
  if (!meta.is_object() || meta.value("format", "") != kSynthFormat) throw DataError("not a poundkit data directory");
  SynthDir out;
  out.config = config::synth_from_json(meta.at("synth"));
  out.class_names = meta.value("class_names", std::vector<std::string>{});
  auto load = [&](const char* name) {
    const auto path = dir / name;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    try {
      return parse_batch(in, out.config.classes);
    } catch (const DataError& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  };
  out.train = load("train.csv");
  out.test_in = load("test_in.csv");
  out.test_shift = load("test_shift.csv");
  return out;
}

// ---------------------------------------------------------------------------
// Training history and scored predictions

inline std::string render_history(const trainer::TrainHistory& h) {
  std::ostringstream out;
  out << "step,bce,spm,cab,total\n";
  for (const auto& s : h.steps)
    out << s.step << ',' << report::full_cell(s.loss.terms.bce) << ',' << report::full_cell(s.loss.terms.spm) << ','
        << report::full_cell(s.loss.terms.cab) << ',' << report::full_cell(s.loss.total) << '\n';
  return out.str();
}

// Prediction records for a scored batch, in the benchmark csv layout.
inline std::vector<bench::PredictionRecord> to_records(const Batch& b, const std::vector<double>& scores,
                                                       const std::vector<std::string>& class_names,
                                                       const std::string& subset, const std::string& dataset) {
  std::vector<bench::PredictionRecord> out;
  out.reserve(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    bench::PredictionRecord r;
    r.id = std::to_string(i);
    r.score = scores[i];
    r.label = b.labels[i];
    if (b.classes[i] < class_names.size()) r.class_name = class_names[b.classes[i]];
    r.subset = subset;
    r.dataset = dataset;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablation tables

inline std::string render_ablation_markdown(const std::vector<trainer::AblationCell>& cells, const std::string& eval_name) {
  if (cells.empty()) throw Error("nothing to report");
  std::vector<std::string> headers{"lambda1", "lambda2"};
  for (const auto& col : report::kColumns) headers.emplace_back(col.label);
  headers.emplace_back("final loss");
  report::MarkdownTable table(headers, 0);
  for (const auto& c : cells) {
    std::vector<std::string> row{report::full_cell(c.lambda1), report::full_cell(c.lambda2)};
    for (auto& cell : report::percent_cells(c.report)) row.push_back(std::move(cell));
    row.push_back(report::fixed(c.final_loss.total, 4));
    table.add_row(std::move(row));
  }
  return "# Loss-weight ablation\n\nHeld-out split: " + eval_name + ". Metric values are percentages.\n\n" + table.str();
}

inline std::string render_ablation_csv(const std::vector<trainer::AblationCell>& cells) {
  if (cells.empty()) throw Error("nothing to report");
  std::ostringstream out;
  out << "lambda1,lambda2";
  for (const auto& col : report::kColumns) out << ',' << col.csv_name;
  out << ",final_bce,final_spm,final_cab,final_total\n";
  for (const auto& c : cells) {
    out << report::full_cell(c.lambda1) << ',' << report::full_cell(c.lambda2);
    for (const auto& col : report::kColumns) out << ',' << report::full_cell(c.report.*col.field);
    out << ',' << report::full_cell(c.final_loss.terms.bce) << ',' << report::full_cell(c.final_loss.terms.spm) << ','
        << report::full_cell(c.final_loss.terms.cab) << ',' << report::full_cell(c.final_loss.total) << '\n';
  }
  return out.str();
}

}  // namespace poundkit::io
