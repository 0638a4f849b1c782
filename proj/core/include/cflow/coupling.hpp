#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cflow/common.hpp"
#include "cflow/net.hpp"
#include "cflow/rng.hpp"

namespace cflow {

/// Isotropic Gaussian N(mean, stdev^2 I).
struct GaussianSpec {
  Vec mean;
  double stdev = 1.0;

  void validate() const;
  std::size_t dim() const { return mean.size(); }
  Vec sample(Rng& rng) const;
};

/// Linear-Gaussian degradation: lq = A z1 + eta, eta ~ N(0, noise_stdev^2 I).
struct DegradationModel {
  Mat op;               // d x d
  double noise_stdev = 0.2;

  void validate() const;
  std::size_t dim() const { return op.rows; }
};

/// Latent codec stand-in. Only the identity mode exists at this scale; the
/// type keeps the encode/decode seam explicit where an autoencoder would sit.
struct LatentCodec {
  enum class Mode { Identity };
  Mode mode = Mode::Identity;

  Vec encode(const Vec& z) const { return z; }
  Vec decode(const Vec& z) const { return z; }
};

/// One training example: source, target, conditioning anchor, and the raw
/// degraded observation the anchor was computed from.
struct CoupledPair {
  Vec z0, z1, c, lq;
};

/// Anchor map from a degraded observation to a source-distribution center.
/// Oracle mode is the exact linear-Gaussian posterior mean; learned mode is
/// an l2-trained regressor; identity passes the (encoded) observation through.
struct ConditionalMeanEstimator {
  enum class Mode { Identity, Oracle, Learned };
  Mode mode = Mode::Identity;
  DegradationModel model;  // oracle
  GaussianSpec prior;      // oracle
  Mlp net;                 // learned

  static ConditionalMeanEstimator identity();
  static ConditionalMeanEstimator oracle(DegradationModel model, GaussianSpec prior);
  static ConditionalMeanEstimator learned(Mlp net);

  Vec operator()(const Vec& lq) const;
};

/// lq = A z1 + eta with seeded noise.
Vec degrade(const Vec& z1, const DegradationModel& model, Rng& rng);

/// Draws z0 ~ rho0 and z1 ~ rho1 from disjoint substreams.
std::pair<Vec, Vec> sample_independent_pair(const GaussianSpec& rho0, const GaussianSpec& rho1,
                                            Rng& rng);

/// Data-dependent pair: lq = degrade(z1); anchor = estimator(lq) when an
/// estimator is given, else encode(lq); z0 = anchor + N(0, sigma^2 I); c = anchor.
CoupledPair sample_coupled_pair(const Vec& z1, const DegradationModel& model,
                                const ConditionalMeanEstimator* estimator, double sigma,
                                const LatentCodec& codec, Rng& rng);

/// Exact E[z1 | lq] for z1 ~ prior, lq = A z1 + eta.
Vec conditional_mean_oracle(const Vec& lq, const DegradationModel& model,
                            const GaussianSpec& prior);

/// Draw from N(c, sigma^2 I).
Vec anchored_source(const Vec& c, double sigma, Rng& rng);

struct EstimatorTrainConfig {
  std::vector<std::size_t> hidden{64, 64};
  std::size_t iterations = 4000;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct FitResult {
  ConditionalMeanEstimator estimator;
  double holdout_mse = 0.0;
};

/// Trains the learned regressor on (lq, z1) pairs with Adam and reports
/// held-out MSE. Throws TrainingError when the loss diverges to NaN.
FitResult fit_conditional_mean(const std::vector<std::pair<Vec, Vec>>& dataset,
                               const EstimatorTrainConfig& cfg);

enum class CouplingMode { Independent, LqAnchored, OracleAnchored, LearnedAnchored };

std::string to_string(CouplingMode mode);
CouplingMode coupling_mode_from_string(const std::string& text);

using PairSampler = std::function<CoupledPair(Rng&)>;

/// A fully specified benchmark coupling: target prior, independent-mode
/// source, degradation model, anchor noise, and the anchoring strategy.
struct CouplingSetup {
  std::size_t dim = 2;
  GaussianSpec source;  // rho0 for independent mode
  GaussianSpec prior;   // rho1
  DegradationModel model;
  double sigma = 0.05;
  CouplingMode mode = CouplingMode::OracleAnchored;
  LatentCodec codec;
  std::optional<ConditionalMeanEstimator> estimator;  // required for learned mode

  void validate() const;
  /// Anchor map used for this mode at inference time.
  ConditionalMeanEstimator anchor_estimator() const;
  CoupledPair sample(Rng& rng) const;
  PairSampler sampler() const;
};

}  // namespace cflow
