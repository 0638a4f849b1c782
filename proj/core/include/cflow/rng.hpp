#pragma once

#include <cstdint>

#include "cflow/common.hpp"

namespace cflow {

// Splittable counter-based generator (splitmix64 core, Box-Muller normals).
// A stream is identified by its construction seed; substream(key) derives a
// disjoint child stream as a pure function of (seed, key), independent of how
// far the parent has advanced. That property is what makes per-iteration
// batch streams, dataset shards, and checkpoint resume bitwise reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Child stream keyed off the construction seed.
  Rng substream(std::uint64_t key) const;
  // Child stream keyed off the current position; advances this stream.
  Rng split();

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Uniform index in [0, n). Modulo bias is < n / 2^64, irrelevant here.
  std::uint64_t uniform_index(std::uint64_t n);
  // Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double normal();
  Vec normal_vec(std::size_t d);

  std::uint64_t seed() const { return seed_; }

  static constexpr const char* kGeneratorName = "splitmix64-boxmuller";

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace cflow
