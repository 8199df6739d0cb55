#pragma once

// Detection metrics over scored binary samples: confusion counts, F-beta,
// threshold curves and their integrals (AUC_f1 / AUC_f2), average precision,
// ROC-AUC and a combined per-set report.
//
// Convention throughout: label 1 is the positive ("fake") class and a sample
// is predicted fake iff score >= tau.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "poundkit/error.hpp"

namespace poundkit::metrics {

struct ScoredSample {
  double score = 0.0;  // probability the item is fake, in [0, 1]
  int label = 0;       // 1 = fake, 0 = real
};

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct ThresholdCurve {
  std::vector<double> taus;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f_beta;
};

struct MetricReport {
  std::optional<double> ap;
  std::optional<double> auc_roc;
  std::optional<double> f1_at_op;
  std::optional<double> acc;
  std::optional<double> acc_real;
  std::optional<double> acc_fake;
  std::optional<double> auc_f1;
  std::optional<double> auc_f2;
  std::size_t n_real = 0;
  std::size_t n_fake = 0;
};

inline constexpr double kDefaultOpThreshold = 0.5;
inline constexpr std::size_t kDefaultGridPoints = 1001;

// Throws DataError if any score lies outside [0, 1] or any label is not 0/1.
inline void validate(std::span<const ScoredSample> samples) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!(s.score >= 0.0 && s.score <= 1.0))
      throw DataError("score out of range [0,1] at sample " + std::to_string(i));
    if (s.label != 0 && s.label != 1)
      throw DataError("label must be 0 or 1 at sample " + std::to_string(i));
  }
}

struct ClassCounts {
  std::size_t real = 0;
  std::size_t fake = 0;
};

inline ClassCounts count_classes(std::span<const ScoredSample> samples) {
  ClassCounts c;
  for (const auto& s : samples) (s.label == 1 ? c.fake : c.real)++;
  return c;
}

// Uniform grid of `points` taus covering [0, 1] inclusive.
inline std::vector<double> uniform_grid(std::size_t points = kDefaultGridPoints) {
  if (points < 2) throw std::invalid_argument("grid needs at least 2 points");
  std::vector<double> grid(points);
  const double denom = static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) grid[i] = static_cast<double>(i) / denom;
  grid.back() = 1.0;
  return grid;
}

inline Confusion confusion_at(std::span<const ScoredSample> samples, double tau) {
  if (samples.empty()) throw Error("empty sample set");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0,1]");
  validate(samples);
  Confusion c;
  for (const auto& s : samples) {
    const bool predicted_fake = s.score >= tau;
    if (s.label == 1)
      (predicted_fake ? c.tp : c.fn)++;
    else
      (predicted_fake ? c.fp : c.tn)++;
  }
  return c;
}

// (1 + b^2) P R / (b^2 P + R), defined as 0 when P + R = 0.
inline double f_beta(double precision, double recall, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (precision + recall <= 0.0) return 0.0;
  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  if (denom <= 0.0) return 0.0;
  return (1.0 + b2) * precision * recall / denom;
}

inline ThresholdCurve threshold_curve(std::span<const ScoredSample> samples, double beta,
                                      std::span<const double> grid) {
  validate(samples);
  const auto counts = count_classes(samples);
  if (counts.real == 0 || counts.fake == 0) throw Error("curve undefined: need both classes");
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (grid.empty()) throw std::invalid_argument("empty threshold grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) throw std::invalid_argument("grid outside [0,1]");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw std::invalid_argument("grid must be strictly increasing");
  }

  std::vector<double> fake_scores, real_scores;
  fake_scores.reserve(counts.fake);
  real_scores.reserve(counts.real);
  for (const auto& s : samples) (s.label == 1 ? fake_scores : real_scores).push_back(s.score);
  std::sort(fake_scores.begin(), fake_scores.end());
  std::sort(real_scores.begin(), real_scores.end());

  // Number of scores >= tau in an ascending vector.
  auto at_or_above = [](const std::vector<double>& v, double tau) {
    return static_cast<std::size_t>(v.end() - std::lower_bound(v.begin(), v.end(), tau));
  };

  ThresholdCurve curve;
  curve.taus.assign(grid.begin(), grid.end());
  curve.precision.resize(grid.size());
  curve.recall.resize(grid.size());
  curve.f_beta.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double tp = static_cast<double>(at_or_above(fake_scores, grid[i]));
    const double fp = static_cast<double>(at_or_above(real_scores, grid[i]));
    const double p = (tp + fp) > 0.0 ? tp / (tp + fp) : 0.0;
    const double r = tp / static_cast<double>(counts.fake);
    curve.precision[i] = p;
    curve.recall[i] = r;
    curve.f_beta[i] = f_beta(p, r, beta);
  }
  return curve;
}

// Trapezoidal integral of a curve's f_beta column over its taus.
inline double integrate(const ThresholdCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.taus.size(); ++i)
    area += 0.5 * (curve.f_beta[i] + curve.f_beta[i - 1]) * (curve.taus[i] - curve.taus[i - 1]);
  return std::clamp(area, 0.0, 1.0);
}

inline double auc_f_beta(std::span<const ScoredSample> samples, double beta,
                         std::span<const double> grid) {
  if (grid.size() < 2) throw std::invalid_argument("grid needs at least 2 points");
  return integrate(threshold_curve(samples, beta, grid));
}

// Step-interpolated AP: sum over descending-score cut points of
// (R_k - R_{k-1}) * P_k, with tied scores forming a single cut.
inline std::optional<double> average_precision(std::span<const ScoredSample> samples) {
  validate(samples);
  const auto counts = count_classes(samples);
  if (counts.real == 0 || counts.fake == 0) return std::nullopt;

  std::vector<ScoredSample> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });

  const double positives = static_cast<double>(counts.fake);
  double tp = 0.0, seen = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      tp += sorted[j].label;
      seen += 1.0;
      ++j;
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / seen);
    prev_recall = recall;
    i = j;
  }
  return ap;
}

// Mann-Whitney statistic P(s_fake > s_real) + 0.5 P(tie), via average ranks.
inline std::optional<double> roc_auc(std::span<const ScoredSample> samples) {
  validate(samples);
  const auto counts = count_classes(samples);
  if (counts.real == 0 || counts.fake == 0) return std::nullopt;

  std::vector<ScoredSample> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredSample& a, const ScoredSample& b) { return a.score < b.score; });

  // Ranks are 1-based; a tie group spanning positions [i, j) gets (i + j + 1) / 2.
  // Summing 2*rank keeps everything integral until the final division.
  long double twice_rank_sum = 0.0L;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    std::size_t group_fakes = 0;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      group_fakes += static_cast<std::size_t>(sorted[j].label);
      ++j;
    }
    twice_rank_sum += static_cast<long double>(group_fakes) * static_cast<long double>(i + j + 1);
    i = j;
  }
  const long double p = counts.fake, n = counts.real;
  const long double u = twice_rank_sum / 2.0L - p * (p + 1.0L) / 2.0L;
  return static_cast<double>(u / (p * n));
}

inline MetricReport full_report(std::span<const ScoredSample> samples,
                                double op_threshold = kDefaultOpThreshold,
                                std::span<const double> grid = {}) {
  if (samples.empty()) throw Error("empty sample set");
  MetricReport rep;
  const auto counts = count_classes(samples);
  rep.n_real = counts.real;
  rep.n_fake = counts.fake;

  const Confusion c = confusion_at(samples, op_threshold);
  if (counts.real > 0) rep.acc_real = static_cast<double>(c.tn) / static_cast<double>(counts.real);
  if (counts.fake > 0) rep.acc_fake = static_cast<double>(c.tp) / static_cast<double>(counts.fake);
  // Accuracy of the whole set; for a single-class set this equals that class's accuracy.
  rep.acc = static_cast<double>(c.tp + c.tn) / static_cast<double>(samples.size());

  if (counts.real == 0 || counts.fake == 0) return rep;

  const double predicted = static_cast<double>(c.tp + c.fp);
  const double precision = predicted > 0.0 ? static_cast<double>(c.tp) / predicted : 0.0;
  const double recall = static_cast<double>(c.tp) / static_cast<double>(counts.fake);
  rep.f1_at_op = f_beta(precision, recall, 1.0);
  rep.ap = average_precision(samples);
  rep.auc_roc = roc_auc(samples);

  std::vector<double> default_grid;
  if (grid.empty()) {
    default_grid = uniform_grid();
    grid = default_grid;
  }
  rep.auc_f1 = auc_f_beta(samples, 1.0, grid);
  rep.auc_f2 = auc_f_beta(samples, 2.0, grid);
  return rep;
}

}  // namespace poundkit::metrics
