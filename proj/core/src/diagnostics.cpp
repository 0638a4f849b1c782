#include "cflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cflow/parallel.hpp"
#include "cflow/training.hpp"

namespace cflow {

void GaussianFlowSpec::validate() const {
  if (mu0.empty() || mu0.size() != mu1.size())
    throw ConfigError("GaussianFlowSpec: mean dimension mismatch");
  check_finite(mu0, "GaussianFlowSpec mu0");
  check_finite(mu1, "GaussianFlowSpec mu1");
  if (!(s0 > 0.0) || !(s1 > 0.0)) throw ConfigError("GaussianFlowSpec: stdevs must be positive");
  if (std::fabs(cross) > s0 * s1 + 1e-15)
    throw ConfigError("GaussianFlowSpec: |cross| must not exceed s0*s1");
}

GaussianCouplingMoments moments_of(const GaussianFlowSpec& spec) {
  spec.validate();
  const std::size_t d = spec.dim();
  GaussianCouplingMoments g;
  g.mu0 = spec.mu0;
  g.mu1 = spec.mu1;
  g.cov00 = Mat::scaled_identity(d, spec.s0 * spec.s0);
  g.cov11 = Mat::scaled_identity(d, spec.s1 * spec.s1);
  g.cov01 = Mat::scaled_identity(d, spec.cross);
  return g;
}

GaussianCouplingMoments analytic_moments(const CouplingSetup& setup) {
  setup.validate();
  const std::size_t d = setup.dim;
  const double s2 = setup.prior.stdev * setup.prior.stdev;
  const double noise2 = setup.model.noise_stdev * setup.model.noise_stdev;
  const double sig2 = setup.sigma * setup.sigma;

  GaussianCouplingMoments g;
  g.mu1 = setup.prior.mean;
  g.cov11 = Mat::scaled_identity(d, s2);

  switch (setup.mode) {
    case CouplingMode::Independent:
      g.mu0 = setup.source.mean;
      g.cov00 = Mat::scaled_identity(d, setup.source.stdev * setup.source.stdev);
      g.cov01 = Mat(d, d);
      return g;
    case CouplingMode::LqAnchored: {
      // z0 = A z1 + eta + eps
      const Mat& A = setup.model.op;
      g.mu0 = mat_vec(A, setup.prior.mean);
      g.cov00 = mat_add(mat_scaled(mat_mul(A, transpose(A)), s2),
                        Mat::scaled_identity(d, noise2 + sig2));
      g.cov01 = mat_scaled(A, s2);
      return g;
    }
    case CouplingMode::OracleAnchored: {
      // anchor = mu + K (lq - A mu), K = Sigma_post A^T / noise2;
      // z0 - mu = K A zeta + K eta + eps with zeta ~ N(0, s2 I).
      const Mat& A = setup.model.op;
      const Mat at = transpose(A);
      Mat precision = mat_add(mat_scaled(mat_mul(at, A), 1.0 / noise2),
                              Mat::scaled_identity(d, 1.0 / s2));
      const Mat sigma_post = inverse_spd(std::move(precision));
      const Mat gain = mat_scaled(mat_mul(sigma_post, at), 1.0 / noise2);
      const Mat ka = mat_mul(gain, A);
      g.mu0 = setup.prior.mean;
      Mat cov00 = mat_scaled(mat_mul(ka, transpose(ka)), s2);
      cov00 = mat_add(cov00, mat_scaled(mat_mul(gain, transpose(gain)), noise2));
      cov00 = mat_add(cov00, Mat::scaled_identity(d, sig2));
      g.cov00 = std::move(cov00);
      g.cov01 = mat_scaled(ka, s2);
      return g;
    }
    case CouplingMode::LearnedAnchored:
      throw ConfigError(
          "analytic_moments: learned-anchored coupling has no closed form; use "
          "empirical_moments");
  }
  throw ConfigError("analytic_moments: invalid mode");
}

GaussianCouplingMoments empirical_moments(const PairSampler& sampler, std::size_t n, Rng& rng) {
  if (n < 2) throw InputError("empirical_moments: need at least two samples");
  std::vector<CoupledPair> pairs(n);
  for (std::size_t i = 0; i < n; ++i) pairs[i] = sampler(rng);
  const std::size_t d = pairs.front().z0.size();

  GaussianCouplingMoments g;
  g.mu0 = zeros(d);
  g.mu1 = zeros(d);
  for (const auto& p : pairs) {
    axpy(g.mu0, 1.0 / double(n), p.z0);
    axpy(g.mu1, 1.0 / double(n), p.z1);
  }
  g.cov00 = Mat(d, d);
  g.cov01 = Mat(d, d);
  g.cov11 = Mat(d, d);
  for (const auto& p : pairs) {
    for (std::size_t i = 0; i < d; ++i) {
      const double a0 = p.z0[i] - g.mu0[i];
      const double a1 = p.z1[i] - g.mu1[i];
      for (std::size_t j = 0; j < d; ++j) {
        g.cov00(i, j) += a0 * (p.z0[j] - g.mu0[j]);
        g.cov01(i, j) += a0 * (p.z1[j] - g.mu1[j]);
        g.cov11(i, j) += a1 * (p.z1[j] - g.mu1[j]);
      }
    }
  }
  const double inv = 1.0 / double(n - 1);
  for (double& v : g.cov00.a) v *= inv;
  for (double& v : g.cov01.a) v *= inv;
  for (double& v : g.cov11.a) v *= inv;
  return g;
}

namespace {

struct InterpolantGaussian {
  Vec mu_t;   // (1-t) mu0 + t mu1
  Vec mu_v;   // mu1 - mu0
  Mat czz;    // Cov(z_t)
  Mat cvz;    // Cov(v, z_t)
};

InterpolantGaussian interpolant_gaussian(const GaussianCouplingMoments& g, double t) {
  const std::size_t d = g.dim();
  if (g.cov00.rows != d || g.cov01.rows != d || g.cov11.rows != d)
    throw ConfigError("marginal_velocity: moment shape mismatch");
  const double a = 1.0 - t;
  InterpolantGaussian ig;
  ig.mu_t.resize(d);
  ig.mu_v.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    ig.mu_t[i] = a * g.mu0[i] + t * g.mu1[i];
    ig.mu_v[i] = g.mu1[i] - g.mu0[i];
  }
  const Mat c10 = transpose(g.cov01);
  // Czz = a^2 S00 + t^2 S11 + a t (S01 + S10)
  ig.czz = mat_add(mat_add(mat_scaled(g.cov00, a * a), mat_scaled(g.cov11, t * t)),
                   mat_scaled(mat_add(g.cov01, c10), a * t));
  // Cvz = a S10 + t S11 - a S00 - t S01
  Mat cvz = mat_add(mat_scaled(c10, a), mat_scaled(g.cov11, t));
  cvz = mat_add(cvz, mat_scaled(g.cov00, -a));
  cvz = mat_add(cvz, mat_scaled(g.cov01, -t));
  ig.cvz = std::move(cvz);
  return ig;
}

}  // namespace

Vec marginal_velocity(const GaussianCouplingMoments& g, const Vec& z, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("marginal_velocity: t outside [0,1]");
  if (z.size() != g.dim()) throw ConfigError("marginal_velocity: dimension mismatch");
  InterpolantGaussian ig = interpolant_gaussian(g, t);
  Vec dz = sub(z, ig.mu_t);
  Vec w;
  try {
    w = solve_spd(ig.czz, std::move(dz));
  } catch (const NumericalError&) {
    throw NumericalError("marginal_velocity: degenerate interpolant covariance at t=" +
                         std::to_string(t));
  }
  Vec v = mat_vec(ig.cvz, w);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += ig.mu_v[i];
  return v;
}

Vec gaussian_marginal_velocity(const GaussianFlowSpec& spec, const Vec& z, double t) {
  return marginal_velocity(moments_of(spec), z, t);
}

double conditional_variance_exact(const GaussianCouplingMoments& g, double t) {
  InterpolantGaussian ig = interpolant_gaussian(g, t);
  const Mat c10 = transpose(g.cov01);
  Mat cvv = mat_add(g.cov00, g.cov11);
  cvv = mat_add(cvv, mat_scaled(g.cov01, -1.0));
  cvv = mat_add(cvv, mat_scaled(c10, -1.0));
  // tr(Cvz Czz^{-1} Czv)
  const Mat czz_inv = inverse_spd(ig.czz);
  const Mat reduction = mat_mul(mat_mul(ig.cvz, czz_inv), transpose(ig.cvz));
  return trace(cvv) - trace(reduction);
}

Field make_gaussian_field(GaussianCouplingMoments moments) {
  return [g = std::move(moments)](const Vec& z, double t, const Vec&, double) {
    return marginal_velocity(g, z, t);
  };
}

Field make_gaussian_field(const GaussianFlowSpec& spec) {
  return make_gaussian_field(moments_of(spec));
}

PairSampler make_sampler(const GaussianFlowSpec& spec) {
  spec.validate();
  const std::size_t d = spec.dim();
  // z0 = mu0 + s0 u;  z1 = mu1 + (cross/s0) u + sqrt(s1^2 - cross^2/s0^2) w
  const double slope = spec.cross / spec.s0;
  const double resid = std::sqrt(std::max(0.0, spec.s1 * spec.s1 - slope * slope));
  return [spec, d, slope, resid](Rng& rng) {
    CoupledPair pair;
    pair.z0.resize(d);
    pair.z1.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      const double u = rng.normal();
      const double w = rng.normal();
      pair.z0[i] = spec.mu0[i] + spec.s0 * u;
      pair.z1[i] = spec.mu1[i] + slope * u + resid * w;
    }
    pair.c = zeros(d);
    pair.lq = zeros(d);
    return pair;
  };
}

namespace {

struct KernelSamples {
  std::vector<Vec> zt;
  std::vector<Vec> v;
};

KernelSamples draw_kernel_samples(const PairSampler& sampler, double t, std::size_t n,
                                  Rng& rng) {
  KernelSamples ks;
  ks.zt.resize(n);
  ks.v.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    const CoupledPair pair = sampler(rng);
    ks.zt[s] = interpolate(pair.z0, pair.z1, t);
    ks.v[s] = sub(pair.z1, pair.z0);
  }
  return ks;
}

struct LocalFit {
  Vec value;      // conditional mean estimate at the center
  Vec std_error;  // per-coordinate SE of the estimate
  double sum_w = 0.0;
  double sum_w2 = 0.0;
  double n_eff = 0.0;
  std::vector<double> weights;
  std::vector<Vec> residuals;  // v - fitted(z_t), per sample with w > 0
  std::vector<std::size_t> index;
};

// Weighted local-linear regression of v on [1, z_t - center]. Falls back to
// the plain weighted mean when the window has no spread (e.g. atomic data).
LocalFit local_linear(const KernelSamples& ks, const Vec& center,
                      const Vec& inv_two_h2) {
  const std::size_t n = ks.zt.size();
  const std::size_t d = center.size();
  const std::size_t p = d + 1;

  LocalFit fit;
  fit.weights.reserve(n / 4);
  fit.index.reserve(n / 4);
  for (std::size_t s = 0; s < n; ++s) {
    double e = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = ks.zt[s][i] - center[i];
      e += diff * diff * inv_two_h2[i];
    }
    if (e > 700.0) continue;  // exp underflow; weight is numerically zero
    const double w = std::exp(-e);
    fit.weights.push_back(w);
    fit.index.push_back(s);
    fit.sum_w += w;
    fit.sum_w2 += w * w;
  }
  if (fit.sum_w <= 0.0 || fit.sum_w2 <= 0.0) {
    fit.n_eff = 0.0;
    return fit;
  }
  fit.n_eff = fit.sum_w * fit.sum_w / fit.sum_w2;

  const std::size_t m = fit.index.size();
  // Gram matrices of the design x = [1, z_t - center].
  Mat gram(p, p);
  Mat gram2(p, p);
  std::vector<Vec> rhs(d, Vec(p, 0.0));
  Vec x(p);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t s = fit.index[k];
    const double w = fit.weights[k];
    x[0] = 1.0;
    for (std::size_t i = 0; i < d; ++i) x[1 + i] = ks.zt[s][i] - center[i];
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        gram(i, j) += w * x[i] * x[j];
        gram2(i, j) += w * w * x[i] * x[j];
      }
    }
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t i = 0; i < p; ++i) rhs[c][i] += w * x[i] * ks.v[s][c];
  }

  // Spread of the window; degenerate spread means the slope is unidentified.
  double spread = 0.0;
  for (std::size_t i = 1; i < p; ++i)
    spread = std::max(spread, gram(i, i) / fit.sum_w);

  fit.value.assign(d, 0.0);
  fit.std_error.assign(d, 0.0);
  fit.residuals.assign(m, Vec(d, 0.0));

  bool linear_ok = spread > 1e-12;
  std::vector<Vec> beta(d);
  Mat sandwich;
  if (linear_ok) {
    try {
      const Mat gram_inv = inverse_spd(gram);
      sandwich = mat_mul(mat_mul(gram_inv, gram2), gram_inv);
      for (std::size_t c = 0; c < d; ++c) beta[c] = mat_vec(gram_inv, rhs[c]);
    } catch (const NumericalError&) {
      linear_ok = false;
    }
  }

  if (!linear_ok) {
    // Weighted-mean fallback (Nadaraya-Watson).
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < m; ++k) acc += fit.weights[k] * ks.v[fit.index[k]][c];
      fit.value[c] = acc / fit.sum_w;
    }
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t c = 0; c < d; ++c)
        fit.residuals[k][c] = ks.v[fit.index[k]][c] - fit.value[c];
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        const double r = fit.residuals[k][c];
        acc += fit.weights[k] * fit.weights[k] * r * r;
      }
      fit.std_error[c] = std::sqrt(acc) / fit.sum_w;
    }
    return fit;
  }

  for (std::size_t c = 0; c < d; ++c) fit.value[c] = beta[c][0];
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t s = fit.index[k];
    x[0] = 1.0;
    for (std::size_t i = 0; i < d; ++i) x[1 + i] = ks.zt[s][i] - center[i];
    for (std::size_t c = 0; c < d; ++c) {
      double pred = 0.0;
      for (std::size_t i = 0; i < p; ++i) pred += beta[c][i] * x[i];
      fit.residuals[k][c] = ks.v[s][c] - pred;
    }
  }
  const double h00 = sandwich(0, 0);
  for (std::size_t c = 0; c < d; ++c) {
    double s2 = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double r = fit.residuals[k][c];
      s2 += fit.weights[k] * r * r;
    }
    s2 /= fit.sum_w;
    fit.std_error[c] = std::sqrt(std::max(0.0, s2 * h00));
  }
  return fit;
}

}  // namespace

McEstimate mc_marginal_velocity(const PairSampler& sampler, const Vec& z, double t,
                                double bandwidth, std::size_t n_samples, Rng& rng) {
  if (n_samples < 10000) throw InputError("mc_marginal_velocity: need >= 1e4 samples");
  if (!(bandwidth > 0.0)) throw InputError("mc_marginal_velocity: bandwidth must be positive");
  const std::size_t d = z.size();
  const KernelSamples ks = draw_kernel_samples(sampler, t, n_samples, rng);
  const Vec inv_two_h2(d, 1.0 / (2.0 * bandwidth * bandwidth));
  const LocalFit fit = local_linear(ks, z, inv_two_h2);
  if (fit.n_eff < 50.0)
    throw InputError("mc_marginal_velocity: insufficient effective samples (n_eff = " +
                     std::to_string(fit.n_eff) + ")");
  McEstimate est;
  est.value = fit.value;
  est.std_error = fit.std_error;
  est.n_eff = fit.n_eff;
  return est;
}

double VarianceProfile::bin_average() const {
  double sw = 0.0, acc = 0.0;
  for (const auto& b : bins) {
    if (!b.valid) continue;
    sw += b.n_eff;
    acc += b.n_eff * b.lambda;
  }
  if (sw <= 0.0) throw NumericalError("VarianceProfile: no valid bins");
  return acc / sw;
}

double VarianceProfile::bin_average_se() const {
  double sw = 0.0, acc = 0.0;
  for (const auto& b : bins) {
    if (!b.valid) continue;
    sw += b.n_eff;
    acc += (b.n_eff * b.std_error) * (b.n_eff * b.std_error);
  }
  if (sw <= 0.0) throw NumericalError("VarianceProfile: no valid bins");
  return std::sqrt(acc) / sw;
}

std::size_t VarianceProfile::valid_count() const {
  std::size_t n = 0;
  for (const auto& b : bins) n += b.valid ? 1 : 0;
  return n;
}

std::vector<Vec> variance_grid(const PairSampler& sampler, double t, std::size_t bins_per_axis,
                               double extent, std::size_t probe_n, Rng& rng) {
  if (bins_per_axis < 1) throw ConfigError("variance_grid: need at least one bin per axis");
  const KernelSamples probe = draw_kernel_samples(sampler, t, std::max<std::size_t>(probe_n, 2), rng);
  const std::size_t d = probe.zt.front().size();
  Vec mean = zeros(d), sd = zeros(d);
  for (const auto& s : probe.zt) axpy(mean, 1.0 / double(probe.zt.size()), s);
  for (const auto& s : probe.zt)
    for (std::size_t i = 0; i < d; ++i) sd[i] += (s[i] - mean[i]) * (s[i] - mean[i]);
  for (std::size_t i = 0; i < d; ++i)
    sd[i] = std::sqrt(sd[i] / double(probe.zt.size() - 1));

  std::vector<Vec> axes(d);
  for (std::size_t i = 0; i < d; ++i) {
    axes[i].resize(bins_per_axis);
    for (std::size_t b = 0; b < bins_per_axis; ++b) {
      const double frac = bins_per_axis == 1
                              ? 0.0
                              : -1.0 + 2.0 * double(b) / double(bins_per_axis - 1);
      axes[i][b] = mean[i] + frac * extent * sd[i];
    }
  }

  std::vector<Vec> grid;
  std::vector<std::size_t> idx(d, 0);
  for (;;) {
    Vec center(d);
    for (std::size_t i = 0; i < d; ++i) center[i] = axes[i][idx[i]];
    grid.push_back(std::move(center));
    std::size_t k = 0;
    while (k < d && ++idx[k] == bins_per_axis) idx[k++] = 0;
    if (k == d) break;
  }
  return grid;
}

VarianceProfile conditional_velocity_variance(const PairSampler& sampler, double t,
                                              const std::vector<Vec>& grid,
                                              double bandwidth_factor, std::size_t n_samples,
                                              Rng& rng) {
  if (!(t > 0.0 && t < 1.0)) throw InputError("conditional_velocity_variance: t outside (0,1)");
  if (!(bandwidth_factor > 0.0))
    throw InputError("conditional_velocity_variance: bandwidth factor must be positive");
  if (grid.empty()) throw InputError("conditional_velocity_variance: empty grid");

  const KernelSamples ks = draw_kernel_samples(sampler, t, n_samples, rng);
  const std::size_t d = grid.front().size();

  // Bandwidth per coordinate from the marginal spread of z_t.
  Vec mean = zeros(d), sd = zeros(d);
  for (const auto& s : ks.zt) axpy(mean, 1.0 / double(n_samples), s);
  for (const auto& s : ks.zt)
    for (std::size_t i = 0; i < d; ++i) sd[i] += (s[i] - mean[i]) * (s[i] - mean[i]);
  Vec inv_two_h2(d);
  for (std::size_t i = 0; i < d; ++i) {
    sd[i] = std::sqrt(sd[i] / double(n_samples - 1));
    const double h = bandwidth_factor * (sd[i] > 0.0 ? sd[i] : 1.0);
    inv_two_h2[i] = 1.0 / (2.0 * h * h);
  }

  VarianceProfile profile;
  profile.bins.resize(grid.size());
  parallel_for(grid.size(), [&](std::size_t b) {
    VarianceBin& bin = profile.bins[b];
    bin.t = t;
    bin.center = grid[b];
    const LocalFit fit = local_linear(ks, grid[b], inv_two_h2);
    bin.n_eff = fit.n_eff;
    if (fit.n_eff < 200.0) {
      bin.valid = false;
      return;
    }
    double lambda = 0.0;
    for (std::size_t k = 0; k < fit.residuals.size(); ++k)
      lambda += fit.weights[k] * squared_norm(fit.residuals[k]);
    lambda /= fit.sum_w;
    double var_acc = 0.0;
    for (std::size_t k = 0; k < fit.residuals.size(); ++k) {
      const double q = squared_norm(fit.residuals[k]) - lambda;
      var_acc += fit.weights[k] * fit.weights[k] * q * q;
    }
    bin.lambda = lambda;
    bin.std_error = std::sqrt(var_acc) / fit.sum_w;
    bin.valid = true;
  });
  return profile;
}

namespace {

double trajectory_kinetic_energy(const Trajectory& traj) {
  if (traj.times.size() < 2) throw InputError("kinetic_energy: trajectory with fewer than 2 points");
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < traj.times.size(); ++i) {
    const double dt = traj.times[i + 1] - traj.times[i];
    if (!(dt > 0.0)) throw InputError("kinetic_energy: times not strictly increasing");
    acc += squared_dist(traj.states[i + 1], traj.states[i]) / dt;
  }
  return acc;
}

}  // namespace

double kinetic_energy(const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) throw InputError("kinetic_energy: no trajectories");
  const auto& ref_times = trajectories.front().times;
  double acc = 0.0;
  for (const auto& traj : trajectories) {
    if (traj.times != ref_times)
      throw InputError("kinetic_energy: trajectories do not share a time grid");
    acc += trajectory_kinetic_energy(traj);
  }
  return acc / double(trajectories.size());
}

Moment moment_of(const std::vector<double>& values) {
  Moment m;
  m.n = values.size();
  if (values.empty()) return m;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= double(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var = values.size() > 1 ? var / double(values.size() - 1) : 0.0;
  m.value = mean;
  m.std_error = std::sqrt(var / double(values.size()));
  return m;
}

Moment expected_displacement(const PairSampler& sampler, std::size_t n_samples, Rng& rng) {
  if (n_samples < 10000) throw InputError("expected_displacement: need >= 1e4 samples");
  std::vector<double> d2(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const CoupledPair pair = sampler(rng);
    d2[i] = squared_dist(pair.z1, pair.z0);
  }
  return moment_of(d2);
}

JensenResult jensen_gap(const Field& field, const PairSampler& sampler, std::size_t n_samples,
                        std::size_t n_steps, Rng& rng) {
  if (n_samples < 2) throw InputError("jensen_gap: need at least two samples");
  std::vector<CoupledPair> pairs(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) pairs[i] = sampler(rng);

  std::vector<double> disp(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i)
    disp[i] = squared_dist(pairs[i].z1, pairs[i].z0);

  std::vector<double> energy(n_samples);
  parallel_for(n_samples, [&](std::size_t i) {
    const Trajectory traj = integrate(field, pairs[i].z0, pairs[i].c, n_steps,
                                      DtMode::Instantaneous);
    energy[i] = trajectory_kinetic_energy(traj);
  });

  JensenResult result;
  result.lhs = moment_of(energy);
  result.rhs = moment_of(disp);
  return result;
}

std::size_t path_crossing_count(const std::vector<std::pair<double, double>>& pairs) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = i + 1; j < pairs.size(); ++j) {
      const double d0 = pairs[i].first - pairs[j].first;
      const double d1 = pairs[i].second - pairs[j].second;
      if (d0 * d1 < 0.0) ++count;
    }
  }
  return count;
}

std::size_t path_crossing_count(const std::vector<CoupledPair>& pairs) {
  std::vector<std::pair<double, double>> flat;
  flat.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.z0.size() != 1 || p.z1.size() != 1)
      throw InputError("path_crossing_count: pairs must be one-dimensional");
    flat.emplace_back(p.z0[0], p.z1[0]);
  }
  return path_crossing_count(flat);
}

double crossing_ratio(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 2) throw InputError("crossing_ratio: need at least two pairs");
  const double total = 0.5 * double(pairs.size()) * double(pairs.size() - 1);
  return double(path_crossing_count(pairs)) / total;
}

double straightness(const Trajectory& traj) {
  if (traj.states.size() < 3) throw InputError("straightness: need at least three points");
  const Vec& z0 = traj.states.front();
  const Vec& z1 = traj.states.back();
  const Vec chord = sub(z1, z0);
  const double len2 = squared_norm(chord);
  if (len2 == 0.0) return 0.0;
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < traj.states.size(); ++i) {
    const Vec rel = sub(traj.states[i], z0);
    const double along = dot(rel, chord) / len2;
    double perp2 = 0.0;
    for (std::size_t j = 0; j < rel.size(); ++j) {
      const double p = rel[j] - along * chord[j];
      perp2 += p * p;
    }
    worst = std::max(worst, perp2);
  }
  return std::sqrt(worst / len2);
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * double(sorted.size()) - 0.5;
  if (pos <= 0.0) return sorted.front();
  if (pos >= double(sorted.size() - 1)) return sorted.back();
  const std::size_t lo = std::size_t(pos);
  const double frac = pos - double(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

double sliced_w2_impl(const std::vector<Vec>& a, const std::vector<Vec>& b,
                      std::size_t n_projections, const Rng& dir_root) {
  const std::size_t d = a.front().size();
  const std::size_t grid_n = std::max(a.size(), b.size());
  std::vector<double> w2sq(n_projections, 0.0);
  parallel_for(n_projections, [&](std::size_t p) {
    Rng rng = dir_root.substream(p);
    Vec dir = rng.normal_vec(d);
    const double len = norm(dir);
    if (len == 0.0) dir[0] = 1.0;
    else
      for (double& x : dir) x /= len;

    std::vector<double> pa(a.size()), pb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] = dot(a[i], dir);
    for (std::size_t i = 0; i < b.size(); ++i) pb[i] = dot(b[i], dir);
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());

    double acc = 0.0;
    if (a.size() == b.size()) {
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = pa[i] - pb[i];
        acc += diff * diff;
      }
      acc /= double(a.size());
    } else {
      for (std::size_t i = 0; i < grid_n; ++i) {
        const double q = (double(i) + 0.5) / double(grid_n);
        const double diff = quantile_sorted(pa, q) - quantile_sorted(pb, q);
        acc += diff * diff;
      }
      acc /= double(grid_n);
    }
    w2sq[p] = acc;
  });
  double mean = 0.0;
  for (double v : w2sq) mean += v;
  return std::sqrt(mean / double(n_projections));
}

}  // namespace

double sliced_w2(const std::vector<Vec>& a, const std::vector<Vec>& b,
                 std::size_t n_projections, Rng& rng) {
  if (a.empty() || b.empty()) throw InputError("sliced_w2: empty sample set");
  if (a.front().size() != b.front().size())
    throw ConfigError("sliced_w2: dimension mismatch");
  if (n_projections == 0) throw InputError("sliced_w2: need at least one projection");
  const Rng dir_root = rng.split();
  return sliced_w2_impl(a, b, n_projections, dir_root);
}

std::vector<double> sliced_w2_per_fold(const std::vector<Vec>& a, const std::vector<Vec>& b,
                                       std::size_t n_projections, std::size_t folds, Rng& rng) {
  if (folds < 2) throw InputError("sliced_w2_per_fold: need at least two folds");
  if (a.size() < folds || b.size() < folds)
    throw InputError("sliced_w2_per_fold: fewer samples than folds");
  // Shared projection directions across folds keep model comparisons paired.
  const Rng dir_root = rng.split();
  std::vector<double> out(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<Vec> fa, fb;
    for (std::size_t i = f; i < a.size(); i += folds) fa.push_back(a[i]);
    for (std::size_t i = f; i < b.size(); i += folds) fb.push_back(b[i]);
    out[f] = sliced_w2_impl(fa, fb, n_projections, dir_root);
  }
  return out;
}

}  // namespace cflow
