#pragma once

// Independent reference implementations used as test oracles, plus seeded
// generators of random inputs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "poundkit/metrics.hpp"
#include "poundkit/objective.hpp"

namespace poundkit::testing {

using metrics::ScoredSample;

// Random sample set with both classes present. Half the sets draw scores from
// a coarse lattice so that ties are common.
inline std::vector<ScoredSample> random_samples(std::mt19937_64& rng, std::size_t max_n = 200) {
  std::uniform_int_distribution<std::size_t> n_dist(2, max_n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> lattice(0, 10);
  std::bernoulli_distribution coin(0.5);
  const bool coarse = coin(rng);
  const double fake_rate = 0.2 + 0.6 * u(rng);
  const std::size_t n = n_dist(rng);
  std::vector<ScoredSample> out(n);
  for (auto& s : out) {
    s.label = u(rng) < fake_rate ? 1 : 0;
    s.score = coarse ? lattice(rng) / 10.0 : u(rng);
  }
  out[0].label = 0;
  out[1].label = 1;
  return out;
}

// P(s_fake > s_real) + 0.5 P(tie) over every (fake, real) pair.
inline double brute_force_auc(const std::vector<ScoredSample>& s) {
  std::int64_t twice_wins = 0, pairs = 0;
  for (const auto& f : s) {
    if (f.label != 1) continue;
    for (const auto& r : s) {
      if (r.label != 0) continue;
      ++pairs;
      if (f.score > r.score) twice_wins += 2;
      else if (f.score == r.score) twice_wins += 1;
    }
  }
  return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pairs));
}

// Sum over distinct thresholds t (descending) of (R(t) - R(prev)) * P(t), with
// precision and recall recounted from scratch at every threshold.
inline double enumerate_ap(const std::vector<ScoredSample>& s) {
  std::set<double, std::greater<>> cuts;
  std::size_t positives = 0;
  for (const auto& x : s) {
    cuts.insert(x.score);
    positives += static_cast<std::size_t>(x.label);
  }
  double ap = 0.0, prev_recall = 0.0;
  for (double t : cuts) {
    std::size_t tp = 0, predicted = 0;
    for (const auto& x : s) {
      if (x.score >= t) {
        ++predicted;
        tp += static_cast<std::size_t>(x.label);
      }
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    ap += (recall - prev_recall) * static_cast<double>(tp) / static_cast<double>(predicted);
    prev_recall = recall;
  }
  return ap;
}

inline std::vector<ScoredSample> balanced(double fake_score, double real_score, std::size_t per_class) {
  std::vector<ScoredSample> out;
  for (std::size_t i = 0; i < per_class; ++i) {
    out.push_back({fake_score, 1});
    out.push_back({real_score, 0});
  }
  return out;
}

// Random small model, context and batch for objective tests.
struct RandomProblem {
  objective::PromptModel model;
  objective::ContextPair ctx;
  objective::Batch batch;
};

inline RandomProblem random_problem(std::mt19937_64& rng, std::size_t token_dim, std::size_t context_len,
                                    std::size_t classes, std::size_t n, std::size_t dim, double scale) {
  objective::SpaceConfig cfg;
  cfg.dim = dim;
  cfg.token_dim = token_dim;
  cfg.classes = classes;
  cfg.context_len = context_len;
  cfg.logit_scale = scale;
  RandomProblem p{objective::make_model(cfg, rng()), objective::init_context(cfg, rng(), 0.5), {}};
  std::normal_distribution<double> g(0.0, 1.0);
  for (Eigen::Index i = 0; i < p.ctx.v_vision.size(); ++i) p.ctx.v_vision(i) = 0.3 * g(rng);
  p.batch.images.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < p.batch.images.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.batch.images.cols(); ++j) p.batch.images(i, j) = g(rng);
    p.batch.images.row(i).normalize();
  }
  std::uniform_int_distribution<std::size_t> cls(0, classes - 1);
  for (std::size_t i = 0; i < n; ++i) {
    p.batch.labels.push_back(static_cast<int>(i % 2));
    p.batch.classes.push_back(cls(rng));
  }
  return p;
}

inline objective::Batch duplicated(const objective::Batch& b) {
  objective::Batch out;
  out.images.resize(b.images.rows() * 2, b.images.cols());
  out.images << b.images, b.images;
  out.labels = b.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.classes = b.classes;
  out.classes.insert(out.classes.end(), b.classes.begin(), b.classes.end());
  return out;
}

// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("poundkit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace poundkit::testing
