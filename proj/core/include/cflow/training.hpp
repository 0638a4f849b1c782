#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "cflow/coupling.hpp"
#include "cflow/net.hpp"

namespace cflow {

enum class SubsetTag { Fm, Shortcut };

struct BatchElement {
  CoupledPair pair;
  double t = 0.0;
  double dt = 0.0;
  SubsetTag tag = SubsetTag::Fm;
};

struct TrainBatch {
  std::vector<BatchElement> elements;

  TrainBatch subset(SubsetTag tag) const;
};

struct TrainConfig {
  std::size_t batch_size = 16;
  double fm_fraction = 0.75;
  double learning_rate = 1e-4;
  std::size_t iterations = 20000;
  double ema_decay = 0.999;
  std::size_t dt_grid_depth = 7;
  bool shortcut = true;
  bool conditioning = true;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

/// (1 - t) z0 + t z1. Throws InputError for t outside [0, 1].
Vec interpolate(const Vec& z0, const Vec& z1, double t);

/// FM objective over an fm-tagged batch: regress v(z_t, t, c, 0) onto z1 - z0.
/// Numerically identical to Mlp::loss_and_grad on the assembled batch.
Mlp::LossGrad fm_loss_batch(const VelocityNet& net, const TrainBatch& batch,
                            bool conditioning = true);

/// Self-consistency target from the EMA parameters: one Euler substep of size
/// dt, then the average of the two EMA velocities. No gradient flows through
/// this value (it never touches the live parameters).
Vec shortcut_target(const VelocityNet& net, std::span<const double> ema_params, const Vec& z_t,
                    double t, const Vec& c, double dt);

/// Shortcut objective over a shortcut-tagged batch: regress v(z_t, t, c, 2dt)
/// onto the EMA two-substep average.
Mlp::LossGrad shortcut_loss_batch(const VelocityNet& net, std::span<const double> ema_params,
                                  const TrainBatch& batch, bool conditioning = true);

/// Draws dt = 2^-j, j uniform in {1..depth}, and t uniform on the dyadic grid
/// {0, dt, 2dt, ...} restricted to t + 2dt <= 1.
std::pair<double, double> sample_dt(std::size_t grid_depth, Rng& rng);

struct TrainLogRow {
  std::uint64_t iteration = 0;
  double fm_loss = 0.0;
  double sc_loss = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct TrainState {
  VelocityNet net;
  EmaShadow ema;
  AdamState opt;
  std::uint64_t iteration = 0;
};

struct TrainResult {
  TrainState state;
  std::vector<TrainLogRow> log;
  bool nan_abort = false;
  // Forward evaluations with a positive dt channel; stays zero when the
  // shortcut loss is disabled.
  std::uint64_t dt_positive_queries = 0;
};

TrainState make_train_state(std::size_t dim, const std::vector<std::size_t>& hidden,
                            std::size_t time_features, const TrainConfig& cfg);

/// Runs the combined FM + shortcut loop from `start`. Batch streams derive
/// from (cfg.seed, iteration index), so resuming from a checkpoint replays
/// the uninterrupted run bitwise. `run_iters` = 0 means "to cfg.iterations".
TrainResult train(const TrainConfig& cfg, const PairSampler& sampler, TrainState start,
                  std::size_t run_iters = 0);

}  // namespace cflow
