#include "cflow/rng.hpp"

#include <cmath>
#include <numbers>

namespace cflow {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

Rng Rng::substream(std::uint64_t key) const {
  return Rng(mix64(seed_ ^ mix64(key + 0x517CC1B727220A95ULL)));
}

Rng Rng::split() { return Rng(mix64(next_u64() ^ kGolden)); }

std::uint64_t Rng::next_u64() {
  state_ += kGolden;
  return mix64(state_);
}

double Rng::uniform() {
  return double(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw InputError("uniform_index: empty range");
  return next_u64() % n;
}

double Rng::normal() {
  // (0,1] keeps the log finite.
  const double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vec Rng::normal_vec(std::size_t d) {
  Vec out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = normal();
  return out;
}

}  // namespace cflow
