#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cflow/net.hpp"

namespace cflow {

/// On-disk training snapshot. Binary layout is little-endian with 4-byte
/// magic "SCFL", a u32 version, then length-prefixed arrays in field order:
/// layer widths, parameters, EMA parameters, Adam first/second moments,
/// Adam step counter + hyperparameters, iteration count, config hash, seed.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::vector<std::size_t> widths;
  Vec params;
  Vec ema;
  Vec adam_m, adam_v;
  std::uint64_t adam_step = 0;
  double learning_rate = 0.0;
  double beta1 = 0.0, beta2 = 0.0, epsilon = 0.0;
  std::uint64_t iteration = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t rng_seed = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Validates magic and version; truncation or garbage raises IoError naming
/// the field that failed.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cflow
