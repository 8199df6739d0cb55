#pragma once

// Command-line front end. Exit codes: 0 success, 1 usage error, 2 data or
// runtime error.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "poundkit/bench.hpp"
#include "poundkit/config.hpp"
#include "poundkit/io.hpp"
#include "poundkit/metrics.hpp"
#include "poundkit/objective.hpp"
#include "poundkit/report.hpp"
#include "poundkit/synthgen.hpp"
#include "poundkit/trainer.hpp"

namespace poundkit::cli {

inline constexpr int kOk = 0;
inline constexpr int kUsageError = 1;
inline constexpr int kDataError = 2;

namespace fs = std::filesystem;

inline nlohmann::json report_json(const metrics::MetricReport& r) {
  nlohmann::json j;
  j["n_real"] = r.n_real;
  j["n_fake"] = r.n_fake;
  for (const auto& col : report::kColumns) {
    const auto& v = r.*col.field;
    j[std::string(col.csv_name)] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  }
  return j;
}

inline void print_report(std::ostream& out, const metrics::MetricReport& r) {
  out << "n_real=" << r.n_real << '\n' << "n_fake=" << r.n_fake << '\n';
  for (const auto& col : report::kColumns) {
    const auto& v = r.*col.field;
    out << col.csv_name << '=' << (v ? report::fixed(*v, 4) : std::string("n/a")) << '\n';
  }
}

namespace detail {

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory " + dir.string());
}

inline config::TaskConfig load_task(const std::string& path) {
  if (path.empty()) return config::default_task();
  return config::task_from_json(config::read_json_file(path));
}

inline void check_task_matches(const config::TaskConfig& task, const io::SynthDir& data) {
  if (task.space.dim != data.config.dim)
    throw DataError("space.dim " + std::to_string(task.space.dim) + " does not match data dimension " +
                    std::to_string(data.config.dim));
  if (task.space.classes != data.config.classes)
    throw DataError("space.classes " + std::to_string(task.space.classes) + " does not match data classes " +
                    std::to_string(data.config.classes));
}

inline objective::PromptModel build_model(const config::TaskConfig& task, const io::SynthDir& data) {
  auto model = objective::make_model(task.space, task.model_seed);
  if (data.class_names.size() == model.space.classes) model.tokens.names = data.class_names;
  return model;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"poundkit: threshold-robust detection metrics and balanced prompt-tuning at desk scale", "poundkit"};
  app.require_subcommand(1);

  // score
  auto* score = app.add_subcommand("score", "Compute the metric report for one predictions file");
  std::string score_in, score_json;
  double op_threshold = metrics::kDefaultOpThreshold;
  std::size_t grid_points = metrics::kDefaultGridPoints;
  score->add_option("--in", score_in, "Predictions file (.csv or .jsonl)")->required();
  score->add_option("--op-threshold", op_threshold, "Operating threshold for ACC/F1")->check(CLI::Range(0.0, 1.0));
  score->add_option("--grid", grid_points, "Threshold grid points for AUC_f1/AUC_f2")->check(CLI::Range(2, 100000000));
  score->add_option("--json", score_json, "Also write the report as JSON");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Evaluate and aggregate a benchmark manifest");
  std::string manifest_path, bench_out, bench_csv;
  bench_cmd->add_option("--manifest", manifest_path, "Benchmark manifest (JSON)")->required();
  bench_cmd->add_option("--out", bench_out, "Markdown report path")->required();
  bench_cmd->add_option("--csv", bench_csv, "Optional CSV report path");
  bench_cmd->add_option("--op-threshold", op_threshold, "Operating threshold for ACC/F1")->check(CLI::Range(0.0, 1.0));
  bench_cmd->add_option("--grid", grid_points, "Threshold grid points")->check(CLI::Range(2, 100000000));

  // curves
  auto* curves = app.add_subcommand("curves", "Write precision/recall/F1/F2 against threshold");
  std::string curves_in, curves_out, curves_subset;
  curves->add_option("--in", curves_in, "Predictions file (.csv or .jsonl)")->required();
  curves->add_option("--out", curves_out, "Output CSV path")->required();
  curves->add_option("--grid", grid_points, "Threshold grid points")->check(CLI::Range(2, 100000000));
  curves->add_option("--subset", curves_subset, "Restrict to records of this subset");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic embedding data directory");
  std::string synth_config, synth_out;
  std::optional<std::uint64_t> seed;
  synth->add_option("--config", synth_config, "Synth config (JSON)")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", seed, "Override every seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the context pair on a data directory");
  std::string data_dir, train_config, train_out;
  train_cmd->add_option("--data", data_dir, "Data directory written by synth")->required();
  train_cmd->add_option("--config", train_config, "Task config (JSON)")->required();
  train_cmd->add_option("--out", train_out, "Output directory")->required();
  train_cmd->add_option("--seed", seed, "Override every seed");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Train one model per (lambda1, lambda2) and report held-out metrics");
  std::vector<double> l1_values, l2_values;
  std::string ablate_out, ablate_csv, ablate_config, eval_split = "shift";
  ablate_cmd->add_option("--data", data_dir, "Data directory written by synth")->required();
  ablate_cmd->add_option("--l1", l1_values, "Comma-separated lambda1 values")->required()->delimiter(',');
  ablate_cmd->add_option("--l2", l2_values, "Comma-separated lambda2 values")->required()->delimiter(',');
  ablate_cmd->add_option("--out", ablate_out, "Markdown table path")->required();
  ablate_cmd->add_option("--csv", ablate_csv, "Optional CSV table path");
  ablate_cmd->add_option("--config", ablate_config, "Task config (JSON); defaults to the built-in task");
  ablate_cmd->add_option("--eval", eval_split, "Held-out split")->check(CLI::IsMember({"shift", "in"}));
  ablate_cmd->add_option("--seed", seed, "Override every seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help requests exit 0; every other parse failure is a usage error.
    return app.exit(e, out, err) == 0 ? kOk : kUsageError;
  }

  try {
    if (score->parsed()) {
      const auto records = bench::load_predictions(score_in);
      if (records.empty()) throw DataError("no records in " + score_in);
      const auto grid = metrics::uniform_grid(grid_points);
      const auto samples = bench::to_samples(records);
      const auto rep = metrics::full_report(samples, op_threshold, grid);
      print_report(out, rep);
      if (!score_json.empty()) report::write_file(score_json, report_json(rep).dump(2) + "\n");
    } else if (bench_cmd->parsed()) {
      const auto manifest = bench::load_manifest(manifest_path);
      const auto result = bench::run_benchmark(manifest, {op_threshold, grid_points});
      bench::export_report(result, bench::ReportFormat::kMarkdown, bench_out);
      if (!bench_csv.empty()) bench::export_report(result, bench::ReportFormat::kCsv, bench_csv);
      out << "evaluated " << result.per_subset.size() << " subsets in " << result.per_dataset.size()
          << " datasets -> " << bench_out << '\n';
    } else if (curves->parsed()) {
      auto records = bench::load_predictions(curves_in);
      if (!curves_subset.empty())
        std::erase_if(records, [&](const bench::PredictionRecord& r) { return r.subset != curves_subset; });
      if (records.empty()) throw DataError("no records selected");
      const auto grid = metrics::uniform_grid(grid_points);
      const std::vector<double> betas{1.0, 2.0};
      bench::export_curves(records, betas, grid, curves_out);
      out << "wrote " << grid.size() << " thresholds -> " << curves_out << '\n';
    } else if (synth->parsed()) {
      const auto j = config::read_json_file(synth_config);
      auto cfg = (j.is_object() && j.contains("synth")) ? config::task_from_json(j).synth
                                                         : config::synth_from_json(j, config::default_task().synth);
      if (seed) cfg.seed = *seed;
      const auto data = synthgen::generate(cfg);
      io::save_synth_dir(synth_out, cfg, data);
      out << "wrote train/test_in/test_shift (" << data.train.size() << " rows each) -> " << synth_out << '\n';
    } else if (train_cmd->parsed()) {
      auto task = detail::load_task(train_config);
      if (seed) config::override_seed(task, *seed);
      const auto data = io::load_synth_dir(data_dir);
      detail::check_task_matches(task, data);
      const auto model = detail::build_model(task, data);
      const auto result = trainer::train(model, data.train, task.train);

      detail::ensure_dir(train_out);
      const fs::path dir = train_out;
      io::save_checkpoint(dir / "checkpoint.json", model, task.model_seed, result.params);
      report::write_file(dir / "history.csv", io::render_history(result.history));
      auto records = io::to_records(data.test_in, objective::predict_fake(model, result.params, data.test_in),
                                    model.tokens.names, "in_domain", "synthetic");
      const auto shifted = io::to_records(data.test_shift, objective::predict_fake(model, result.params, data.test_shift),
                                          model.tokens.names, "shifted", "synthetic");
      records.insert(records.end(), shifted.begin(), shifted.end());
      std::ostringstream preds;
      bench::write_predictions_csv(preds, records);
      report::write_file(dir / "predictions.csv", preds.str());

      const auto& first = result.history.steps.front().loss;
      const auto& last = result.history.steps.back().loss;
      out << "steps=" << result.history.steps.size() - 1 << '\n'
          << "initial_total=" << report::fixed(first.total, 6) << '\n'
          << "final_total=" << report::fixed(last.total, 6) << '\n'
          << "wrote checkpoint.json, history.csv, predictions.csv -> " << train_out << '\n';
    } else if (ablate_cmd->parsed()) {
      auto task = detail::load_task(ablate_config);
      if (seed) config::override_seed(task, *seed);
      const auto data = io::load_synth_dir(data_dir);
      detail::check_task_matches(task, data);
      const auto model = detail::build_model(task, data);
      const auto& eval = eval_split == "in" ? data.test_in : data.test_shift;
      const auto cells = trainer::ablate(model, data.train, l1_values, l2_values, task.train, eval);
      report::write_file(ablate_out, io::render_ablation_markdown(cells, eval_split == "in" ? "in-domain" : "shifted"));
      if (!ablate_csv.empty()) report::write_file(ablate_csv, io::render_ablation_csv(cells));
      out << "trained " << cells.size() << " cells -> " << ablate_out << '\n';
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}

}  // namespace poundkit::cli
