#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace poundkit {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds from one
// user seed so that e.g. data, model and optimizer draws never overlap.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

// Named streams.
enum class Stream : std::uint64_t {
  kClassTokens = 1,
  kEncoder = 2,
  kContextInit = 3,
  kShuffle = 4,
  kSynthCentroids = 5,
  kSynthDirections = 6,
  kSynthNoise = 7,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  return Rng(derive_seed(seed, static_cast<std::uint64_t>(stream)));
}

template <typename Derived>
void fill_gaussian(Eigen::DenseBase<Derived>& m, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  // Row-major fill order so the draw sequence does not depend on storage order.
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
}

}  // namespace poundkit
