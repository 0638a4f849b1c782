#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cflow/common.hpp"
#include "cflow/rng.hpp"

namespace cflow {

/// Fully connected net with tanh hidden layers and a linear output layer.
/// Parameters live in one flat array (per layer: row-major weight matrix,
/// then bias), which is what the optimizer, the EMA shadow, and the
/// checkpoint format operate on.
struct Mlp {
  std::vector<std::size_t> widths;  // input, hidden..., output
  Vec params;

  static std::size_t param_count_for(const std::vector<std::size_t>& widths);
  std::size_t param_count() const { return param_count_for(widths); }
  std::size_t input_size() const { return widths.front(); }
  std::size_t output_size() const { return widths.back(); }

  /// All parameters zero.
  static Mlp zeros(std::vector<std::size_t> widths);
  /// Per-layer uniform init in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static Mlp glorot(std::vector<std::size_t> widths, Rng& rng);

  Vec forward(std::span<const double> x) const;
  /// Forward pass through this topology with externally supplied parameters
  /// (used to evaluate the EMA shadow without copying the net).
  Vec forward_with(std::span<const double> params, std::span<const double> x) const;

  struct LossGrad {
    double loss = 0.0;
    Vec grad;
  };

  /// Mean squared error over batch elements and output dimensions, with the
  /// exact analytic gradient w.r.t. the flat parameter array.
  LossGrad loss_and_grad(const std::vector<Vec>& inputs, const std::vector<Vec>& targets) const;
};

/// Sinusoidal features at geometrically spaced frequencies pi * 2^j,
/// laid out [sin, cos, sin, cos, ...]. Injective on [0,1] for k >= 2
/// because the lowest-frequency cosine is strictly decreasing there.
Vec time_embed(double t, std::size_t k);

/// Step-size-aware conditional velocity model. Input layout is the
/// concatenation [z (d) | embed(t) (k) | embed(dt) (k) | c (d)].
struct VelocityNet {
  std::size_t dim = 0;
  std::size_t time_features = 0;
  Mlp mlp;

  static VelocityNet create(std::size_t dim, const std::vector<std::size_t>& hidden,
                            std::size_t time_features, Rng& rng);

  std::size_t input_size() const { return 2 * dim + 2 * time_features; }
  Vec assemble(const Vec& z, double t, const Vec& c, double dt) const;
  Vec forward(const Vec& z, double t, const Vec& c, double dt) const;
  Vec forward_with(std::span<const double> params, const Vec& z, double t, const Vec& c,
                   double dt) const;
};

/// Exponential moving average of a parameter vector (the target network).
struct EmaShadow {
  Vec params;
  double decay = 0.999;

  EmaShadow() = default;
  EmaShadow(Vec initial, double decay);

  /// shadow <- decay * shadow + (1 - decay) * current, entrywise.
  void update(std::span<const double> current);
};

/// Adam with bias correction.
struct AdamState {
  Vec m, v;
  std::uint64_t step = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState create(std::size_t n, double learning_rate);
  void apply(Vec& params, const Vec& grad);
};

}  // namespace cflow
