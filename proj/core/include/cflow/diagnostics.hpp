#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "cflow/coupling.hpp"
#include "cflow/ode.hpp"
#include "cflow/rng.hpp"

namespace cflow {

/// Analytic Gaussian-to-Gaussian flow family used as ground truth. Isotropic
/// marginals; `cross` is the per-coordinate cross-covariance Cov(z0_i, z1_i)
/// (0 = independent coupling, s0*s1 = perfectly correlated).
struct GaussianFlowSpec {
  Vec mu0, mu1;
  double s0 = 1.0, s1 = 1.0;
  double cross = 0.0;

  void validate() const;
  std::size_t dim() const { return mu0.size(); }
};

/// First and second moments of a jointly Gaussian coupling (z0, z1).
/// cov01 is Cov(z0, z1) = E[(z0 - mu0)(z1 - mu1)^T].
struct GaussianCouplingMoments {
  Vec mu0, mu1;
  Mat cov00, cov01, cov11;

  std::size_t dim() const { return mu0.size(); }
};

GaussianCouplingMoments moments_of(const GaussianFlowSpec& spec);

/// Exact moments of the linear-Gaussian benchmark couplings. Throws
/// ConfigError for the learned-anchored mode (no closed form; use
/// empirical_moments).
GaussianCouplingMoments analytic_moments(const CouplingSetup& setup);

/// Sample first/second moments of an arbitrary coupling; the moment-matched
/// Gaussian surrogate for couplings without a closed form.
GaussianCouplingMoments empirical_moments(const PairSampler& sampler, std::size_t n, Rng& rng);

/// Exact marginal velocity E[z1 - z0 | z_t = z] of a jointly Gaussian
/// coupling:  mu_v + C_vz(t) C_zz(t)^{-1} (z - mu_t).
Vec marginal_velocity(const GaussianCouplingMoments& g, const Vec& z, double t);

/// Same through the isotropic spec. Valid on all of [0, 1] as long as the
/// interpolant covariance stays positive definite.
Vec gaussian_marginal_velocity(const GaussianFlowSpec& spec, const Vec& z, double t);

/// Exact trace of Cov(z1 - z0 | z_t); constant in z for Gaussian couplings.
double conditional_variance_exact(const GaussianCouplingMoments& g, double t);

/// Field view over the exact marginal velocity (ignores c and dt).
Field make_gaussian_field(GaussianCouplingMoments moments);
Field make_gaussian_field(const GaussianFlowSpec& spec);

/// Pair sampler realizing a GaussianFlowSpec (c and lq are zero).
PairSampler make_sampler(const GaussianFlowSpec& spec);

struct McEstimate {
  Vec value;
  Vec std_error;
  double n_eff = 0.0;
};

/// Kernel-weighted local-linear Monte Carlo estimate of E[z1 - z0 | z_t ~ z].
/// The local-linear intercept is free of the Nadaraya-Watson slope bias, so
/// for jointly Gaussian couplings (exactly linear conditional mean) the
/// estimate is unbiased at any bandwidth. Brute-force oracle for both the
/// closed form above and trained nets.
McEstimate mc_marginal_velocity(const PairSampler& sampler, const Vec& z, double t,
                                double bandwidth, std::size_t n_samples, Rng& rng);

struct VarianceBin {
  double t = 0.0;
  Vec center;
  double lambda = 0.0;
  double std_error = 0.0;
  double n_eff = 0.0;
  bool valid = false;
};

struct VarianceProfile {
  std::vector<VarianceBin> bins;

  /// n_eff-weighted average over valid bins (and its standard error).
  double bin_average() const;
  double bin_average_se() const;
  std::size_t valid_count() const;
};

/// Tensor grid of bin centers covering +-extent marginal stdevs of z_t per
/// coordinate, probed from the sampler.
std::vector<Vec> variance_grid(const PairSampler& sampler, double t, std::size_t bins_per_axis,
                               double extent, std::size_t probe_n, Rng& rng);

/// Per-bin kernel estimate of lambda_t(z) = tr Cov(z1 - z0 | z_t = z).
/// Bandwidth is bandwidth_factor * marginal stdev of z_t per coordinate.
/// Residuals come from a local-linear mean fit, which removes the slope^2 h^2
/// inflation a plain weighted variance would pick up. Bins with effective
/// sample count below 200 are marked invalid, never fabricated.
VarianceProfile conditional_velocity_variance(const PairSampler& sampler, double t,
                                              const std::vector<Vec>& grid,
                                              double bandwidth_factor, std::size_t n_samples,
                                              Rng& rng);

/// Monte Carlo E int ||Z_dot||^2 dt from finite-difference velocities on a
/// shared trajectory grid.
double kinetic_energy(const std::vector<Trajectory>& trajectories);

struct Moment {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

/// Monte Carlo E ||z1 - z0||^2 of a coupling.
Moment expected_displacement(const PairSampler& sampler, std::size_t n_samples, Rng& rng);

struct JensenResult {
  Moment lhs;  // kinetic energy of integrated trajectories
  Moment rhs;  // expected squared displacement of the coupling
};

/// Both sides of the kinetic-energy bound, computed on the same pair draws
/// so the deterministic-coupling equality case holds to roundoff.
JensenResult jensen_gap(const Field& field, const PairSampler& sampler, std::size_t n_samples,
                        std::size_t n_steps, Rng& rng);

/// Number of unordered pair-of-pairs whose straight interpolants cross in
/// (0,1); equivalently the discordant-pair count.
std::size_t path_crossing_count(const std::vector<std::pair<double, double>>& pairs);
std::size_t path_crossing_count(const std::vector<CoupledPair>& pairs);
/// count / C(n, 2)
double crossing_ratio(const std::vector<std::pair<double, double>>& pairs);

/// Max interior deviation from the z0 -> z1 chord, over the chord length.
/// 0 for straight paths and for zero-length chords.
double straightness(const Trajectory& trajectory);

/// Sliced 2-Wasserstein distance via random 1-D projections and quantile
/// matching. Stand-in endpoint metric for perceptual scores at this scale.
double sliced_w2(const std::vector<Vec>& a, const std::vector<Vec>& b,
                 std::size_t n_projections, Rng& rng);

/// Per-fold sliced-W2 values (index-strided folds, shared projection
/// directions), for paired model comparisons with standard errors.
std::vector<double> sliced_w2_per_fold(const std::vector<Vec>& a, const std::vector<Vec>& b,
                                       std::size_t n_projections, std::size_t folds, Rng& rng);

Moment moment_of(const std::vector<double>& values);

}  // namespace cflow
