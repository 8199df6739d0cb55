#pragma once

// Adam training of the context pair under the balanced objective, and the
// (lambda1, lambda2) ablation grid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "poundkit/error.hpp"
#include "poundkit/metrics.hpp"
#include "poundkit/objective.hpp"
#include "poundkit/parallel.hpp"
#include "poundkit/rng.hpp"

namespace poundkit::trainer {

using objective::Batch;
using objective::ContextPair;
using objective::LossValue;
using objective::PromptModel;
using objective::Vector;

struct TrainConfig {
  double lr = 1e-2;
  double weight_decay = 1e-4;
  std::size_t epochs = 300;
  std::size_t batch_size = 0;  // 0 = full batch
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be non-negative");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be non-negative");
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
      throw std::invalid_argument("adam betas must lie in (0, 1)");
    if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be positive");
  }
};

struct StepRecord {
  std::size_t step = 0;
  LossValue loss;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
};

struct AdamState {
  Vector m;
  Vector v;
  std::size_t step = 0;
};

// One bias-corrected Adam update with decoupled weight decay
// (theta <- theta - lr * wd * theta, then the Adam delta).
inline void adam_step(Vector& params, const Vector& grads, AdamState& state, const TrainConfig& cfg) {
  if (grads.size() != params.size()) throw std::invalid_argument("gradient shape mismatch");
  if (!grads.allFinite()) throw Error("diverged: non-finite gradient");
  if (state.m.size() == 0) {
    state.m = Vector::Zero(params.size());
    state.v = Vector::Zero(params.size());
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("optimizer state shape mismatch");

  ++state.step;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads.cwiseProduct(grads);
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);

  if (cfg.weight_decay > 0.0) params -= cfg.lr * cfg.weight_decay * params;
  const Vector m_hat = state.m / bc1;
  const Vector v_hat = state.v / bc2;
  params.array() -= cfg.lr * m_hat.array() / (v_hat.array().sqrt() + cfg.adam_eps);
}

struct TrainResult {
  ContextPair params;
  TrainHistory history;
};

namespace detail {

inline Batch subset(const Batch& b, std::span<const std::size_t> idx) {
  Batch out;
  out.images.resize(static_cast<Eigen::Index>(idx.size()), b.images.cols());
  out.labels.reserve(idx.size());
  out.classes.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.images.row(static_cast<Eigen::Index>(i)) = b.images.row(static_cast<Eigen::Index>(idx[i]));
    out.labels.push_back(b.labels[idx[i]]);
    out.classes.push_back(b.classes[idx[i]]);
  }
  return out;
}

inline void check_loss(const LossValue& v, std::size_t step) {
  if (!std::isfinite(v.total)) throw Error("diverged: non-finite loss at step " + std::to_string(step));
}

}  // namespace detail

// Trains from `init` (or a context drawn from cfg.seed). History holds one
// record per optimizer step, taken on that step's batch before the update,
// plus a closing record of the final parameters on the full data.
inline TrainResult train(const PromptModel& model, const Batch& data, const TrainConfig& cfg,
                         std::optional<ContextPair> init = std::nullopt) {
  cfg.validate();
  data.validate(model.space.classes, model.space.dim);
  if (data.size() == 0) throw DataError("empty training set");
  {
    bool has_real = false, has_fake = false;
    for (int y : data.labels) (y ? has_fake : has_real) = true;
    if (!has_real || !has_fake) throw DataError("training data needs both labels");
  }

  TrainResult res{init ? *init : objective::init_context(model.space, cfg.seed), {}};
  Vector flat = res.params.flatten();
  AdamState state;

  const std::size_t n = data.size();
  const std::size_t bs = (cfg.batch_size == 0 || cfg.batch_size >= n) ? n : cfg.batch_size;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = make_rng(cfg.seed, Stream::kShuffle);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (bs < n) std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t stop = std::min(n, start + bs);
      const Batch mini = bs == n ? Batch{} : detail::subset(data, std::span(order).subspan(start, stop - start));
      const Batch& batch = bs == n ? data : mini;
      res.params.assign(flat);
      const auto g = objective::gradients(batch, model, res.params, cfg.lambda1, cfg.lambda2);
      detail::check_loss(g.value, step);
      res.history.steps.push_back({step, g.value});
      adam_step(flat, g.total.flatten(), state, cfg);
      if (!flat.allFinite()) throw Error("diverged: non-finite parameters at step " + std::to_string(step));
      ++step;
    }
  }
  res.params.assign(flat);
  const auto final_loss = objective::total_loss(data, model, res.params, cfg.lambda1, cfg.lambda2);
  detail::check_loss(final_loss, step);
  res.history.steps.push_back({step, final_loss});
  return res;
}

// Held-out report of a trained context on `eval`.
inline metrics::MetricReport evaluate(const PromptModel& model, const ContextPair& ctx, const Batch& eval,
                                      bool class_conditioned = false,
                                      double op_threshold = metrics::kDefaultOpThreshold,
                                      std::span<const double> grid = {}) {
  const auto scores = objective::predict_fake(model, ctx, eval, class_conditioned);
  std::vector<metrics::ScoredSample> samples(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) samples[i] = {scores[i], eval.labels[i]};
  return metrics::full_report(samples, op_threshold, grid);
}

struct AblationCell {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  metrics::MetricReport report;
  LossValue final_loss;
};

// One independent train + evaluate per (lambda1, lambda2) pair, lambda1-major.
// Every cell starts from the same cfg.seed streams, so a cell's result does
// not depend on its position in the grid.
inline std::vector<AblationCell> ablate(const PromptModel& model, const Batch& train_data,
                                        std::span<const double> lambda1_values, std::span<const double> lambda2_values,
                                        const TrainConfig& cfg, const Batch& eval) {
  if (lambda1_values.empty() || lambda2_values.empty()) throw std::invalid_argument("ablation grid is empty");
  std::vector<AblationCell> cells(lambda1_values.size() * lambda2_values.size());
  for (std::size_t i = 0; i < lambda1_values.size(); ++i)
    for (std::size_t j = 0; j < lambda2_values.size(); ++j) {
      auto& cell = cells[i * lambda2_values.size() + j];
      cell.lambda1 = lambda1_values[i];
      cell.lambda2 = lambda2_values[j];
    }
  parallel_for(cells.size(), [&](std::size_t idx) {
    TrainConfig local = cfg;
    local.lambda1 = cells[idx].lambda1;
    local.lambda2 = cells[idx].lambda2;
    const auto result = train(model, train_data, local);
    cells[idx].final_loss = result.history.steps.back().loss;
    cells[idx].report = evaluate(model, result.params, eval);
  });
  return cells;
}

}  // namespace poundkit::trainer
