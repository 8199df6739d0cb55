#pragma once

// Seeded synthetic unit-norm image embeddings with class structure.
//
// K unit centroids are placed with a minimum pairwise angle. Reals are
// normalize(centroid + sigma * noise); fakes add delta * g, where g is a
// global unit "generator direction". The train and in-domain test splits use
// g_train; the shifted test split uses an independent direction g_test with
// <g_train, g_test> <= kMaxDirectionOverlap, standing in for an unseen
// generator. Noise coordinates are N(0, 1/d) so that |noise| is about 1.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

#include "poundkit/error.hpp"
#include "poundkit/objective.hpp"
#include "poundkit/rng.hpp"

namespace poundkit::synthgen {

using objective::Batch;
using objective::Matrix;
using objective::Vector;

inline constexpr double kMaxDirectionOverlap = 0.2;

struct SynthConfig {
  std::size_t classes = 4;
  std::size_t dim = 16;
  std::size_t n_per_cell = 25;  // samples per (class, label, split)
  double sigma_noise = 0.15;
  double delta_fake = 0.3;
  double min_class_angle = std::numbers::pi / 6.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (classes < 1 || dim < 2 || n_per_cell < 1) throw std::invalid_argument("synth sizes must be positive (dim >= 2)");
    if (!(sigma_noise >= 0.0)) throw std::invalid_argument("sigma_noise must be non-negative");
    if (!(delta_fake >= 0.0)) throw std::invalid_argument("delta_fake must be non-negative");
    if (!(min_class_angle > 0.0 && min_class_angle < std::numbers::pi / 2.0))
      throw std::invalid_argument("min_class_angle must lie in (0, pi/2)");
  }
};

struct SynthData {
  Batch train;
  Batch test_in;
  Batch test_shift;
  Matrix centroids;  // K x d
  Vector g_train;
  Vector g_test;
};

namespace detail {

inline Vector random_unit(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (;;) {
    Vector v(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = dist(rng);
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

inline Matrix place_centroids(const SynthConfig& cfg, Rng& rng) {
  const double max_cos = std::cos(cfg.min_class_angle);
  const std::size_t budget = 10 * cfg.classes * 1000;
  Matrix c(static_cast<Eigen::Index>(cfg.classes), static_cast<Eigen::Index>(cfg.dim));
  std::size_t placed = 0, attempts = 0;
  while (placed < cfg.classes) {
    if (attempts++ >= budget) throw Error("cannot place centroids");
    const Vector v = random_unit(cfg.dim, rng);
    bool ok = true;
    for (std::size_t j = 0; j < placed && ok; ++j) ok = c.row(static_cast<Eigen::Index>(j)).dot(v) <= max_cos;
    if (ok) c.row(static_cast<Eigen::Index>(placed++)) = v.transpose();
  }
  return c;
}

inline Batch draw_split(const SynthConfig& cfg, const Matrix& centroids, const Vector& g, Rng& rng) {
  const std::size_t n = cfg.classes * 2 * cfg.n_per_cell;
  const double noise_sd = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  std::normal_distribution<double> dist(0.0, noise_sd);
  Batch b;
  b.images.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.dim));
  b.labels.reserve(n);
  b.classes.reserve(n);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    for (int label = 0; label <= 1; ++label) {
      for (std::size_t k = 0; k < cfg.n_per_cell; ++k) {
        Vector x = centroids.row(static_cast<Eigen::Index>(c)).transpose();
        if (label == 1) x += cfg.delta_fake * g;
        for (Eigen::Index j = 0; j < x.size(); ++j) x(j) += cfg.sigma_noise * dist(rng);
        const double nx = x.norm();
        if (!(nx > 0.0)) throw Error("degenerate synthetic embedding");
        b.images.row(row++) = (x / nx).transpose();
        b.labels.push_back(label);
        b.classes.push_back(c);
      }
    }
  }
  return b;
}

}  // namespace detail

// Centroids come from rejection sampling unless `anchors` (K x d) is given,
// in which case its rows are normalized and used directly.
inline SynthData generate(const SynthConfig& cfg, const std::optional<Matrix>& anchors = std::nullopt) {
  cfg.validate();
  SynthData out;
  if (anchors) {
    if (static_cast<std::size_t>(anchors->rows()) != cfg.classes || static_cast<std::size_t>(anchors->cols()) != cfg.dim)
      throw std::invalid_argument("anchor shape does not match synth config");
    out.centroids = anchors->rowwise().normalized();
    if (!out.centroids.allFinite()) throw Error("degenerate anchor");
  } else {
    Rng rng = make_rng(cfg.seed, Stream::kSynthCentroids);
    out.centroids = detail::place_centroids(cfg, rng);
  }

  Rng dir_rng = make_rng(cfg.seed, Stream::kSynthDirections);
  out.g_train = detail::random_unit(cfg.dim, dir_rng);
  for (std::size_t attempts = 0;; ++attempts) {
    if (attempts >= 10000) throw Error("cannot place shifted generator direction");
    out.g_test = detail::random_unit(cfg.dim, dir_rng);
    if (out.g_test.dot(out.g_train) <= kMaxDirectionOverlap) break;
  }

  Rng noise = make_rng(cfg.seed, Stream::kSynthNoise);
  out.train = detail::draw_split(cfg, out.centroids, out.g_train, noise);
  out.test_in = detail::draw_split(cfg, out.centroids, out.g_train, noise);
  out.test_shift = detail::draw_split(cfg, out.centroids, out.g_test, noise);
  return out;
}

}  // namespace poundkit::synthgen
