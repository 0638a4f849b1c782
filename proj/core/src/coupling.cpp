#include "cflow/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cflow {

void GaussianSpec::validate() const {
  if (mean.empty()) throw ConfigError("GaussianSpec: empty mean");
  check_finite(mean, "GaussianSpec mean");
  if (!(stdev > 0.0) || !std::isfinite(stdev))
    throw ConfigError("GaussianSpec: stdev must be positive");
}

Vec GaussianSpec::sample(Rng& rng) const {
  Vec out = rng.normal_vec(mean.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mean[i] + stdev * out[i];
  return out;
}

void DegradationModel::validate() const {
  if (op.rows == 0 || op.rows != op.cols) throw ConfigError("DegradationModel: operator must be square");
  check_finite(op.a, "DegradationModel operator");
  if (!(noise_stdev > 0.0) || !std::isfinite(noise_stdev))
    throw ConfigError("DegradationModel: noise stdev must be positive");
}

ConditionalMeanEstimator ConditionalMeanEstimator::identity() {
  ConditionalMeanEstimator e;
  e.mode = Mode::Identity;
  return e;
}

ConditionalMeanEstimator ConditionalMeanEstimator::oracle(DegradationModel model,
                                                          GaussianSpec prior) {
  model.validate();
  prior.validate();
  if (model.dim() != prior.dim())
    throw ConfigError("ConditionalMeanEstimator: model/prior dimension mismatch");
  ConditionalMeanEstimator e;
  e.mode = Mode::Oracle;
  e.model = std::move(model);
  e.prior = std::move(prior);
  return e;
}

ConditionalMeanEstimator ConditionalMeanEstimator::learned(Mlp net) {
  if (net.input_size() != net.output_size())
    throw ConfigError("ConditionalMeanEstimator: learned net must map d -> d");
  ConditionalMeanEstimator e;
  e.mode = Mode::Learned;
  e.net = std::move(net);
  return e;
}

Vec ConditionalMeanEstimator::operator()(const Vec& lq) const {
  switch (mode) {
    case Mode::Identity:
      return lq;
    case Mode::Oracle:
      return conditional_mean_oracle(lq, model, prior);
    case Mode::Learned:
      return net.forward(lq);
  }
  throw ConfigError("ConditionalMeanEstimator: invalid mode");
}

Vec degrade(const Vec& z1, const DegradationModel& model, Rng& rng) {
  model.validate();
  if (z1.size() != model.dim()) throw ConfigError("degrade: dimension mismatch");
  Vec lq = mat_vec(model.op, z1);
  for (std::size_t i = 0; i < lq.size(); ++i) lq[i] += model.noise_stdev * rng.normal();
  return lq;
}

std::pair<Vec, Vec> sample_independent_pair(const GaussianSpec& rho0, const GaussianSpec& rho1,
                                            Rng& rng) {
  rho0.validate();
  rho1.validate();
  if (rho0.dim() != rho1.dim())
    throw ConfigError("sample_independent_pair: dimension mismatch");
  Rng r0 = rng.split();
  Rng r1 = rng.split();
  return {rho0.sample(r0), rho1.sample(r1)};
}

CoupledPair sample_coupled_pair(const Vec& z1, const DegradationModel& model,
                                const ConditionalMeanEstimator* estimator, double sigma,
                                const LatentCodec& codec, Rng& rng) {
  if (!(sigma > 0.0)) throw ConfigError("sample_coupled_pair: sigma must be positive");
  CoupledPair pair;
  pair.z1 = z1;
  pair.lq = degrade(z1, model, rng);
  Vec anchor = estimator ? (*estimator)(pair.lq) : codec.encode(pair.lq);
  if (anchor.size() != z1.size())
    throw ConfigError("sample_coupled_pair: estimator output dimension mismatch");
  pair.z0 = anchor;
  for (std::size_t i = 0; i < pair.z0.size(); ++i) pair.z0[i] += sigma * rng.normal();
  pair.c = std::move(anchor);
  return pair;
}

Vec conditional_mean_oracle(const Vec& lq, const DegradationModel& model,
                            const GaussianSpec& prior) {
  model.validate();
  prior.validate();
  const std::size_t d = model.dim();
  if (lq.size() != d || prior.dim() != d)
    throw ConfigError("conditional_mean_oracle: dimension mismatch");

  // Posterior precision  I/s^2 + A^T A / s_eta^2, posterior mean from the
  // normal equations. Cholesky failure (singular operator) surfaces as a
  // numerical error.
  const double inv_prior = 1.0 / (prior.stdev * prior.stdev);
  const double inv_noise = 1.0 / (model.noise_stdev * model.noise_stdev);
  const Mat at = transpose(model.op);
  Mat precision = mat_add(mat_scaled(mat_mul(at, model.op), inv_noise),
                          Mat::scaled_identity(d, inv_prior));
  Vec rhs = mat_vec(at, lq);
  for (std::size_t i = 0; i < d; ++i) rhs[i] = rhs[i] * inv_noise + prior.mean[i] * inv_prior;
  return solve_spd(std::move(precision), std::move(rhs));
}

Vec anchored_source(const Vec& c, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) throw ConfigError("anchored_source: sigma must be positive");
  check_finite(c, "anchored_source center");
  Vec out = c;
  for (double& x : out) x += sigma * rng.normal();
  return out;
}

FitResult fit_conditional_mean(const std::vector<std::pair<Vec, Vec>>& dataset,
                               const EstimatorTrainConfig& cfg) {
  if (dataset.empty()) throw InputError("fit_conditional_mean: empty dataset");
  const std::size_t d = dataset.front().first.size();
  if (dataset.size() < 100 * d)
    throw InputError("fit_conditional_mean: dataset smaller than 100 * d");
  for (const auto& [lq, z1] : dataset) {
    if (lq.size() != d || z1.size() != d)
      throw ConfigError("fit_conditional_mean: inconsistent dimensions");
  }

  Rng root(cfg.seed);
  Rng shuffle_rng = root.substream(0);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i-- > 1;)
    std::swap(order[i], order[shuffle_rng.uniform_index(i + 1)]);

  const std::size_t holdout =
      std::max<std::size_t>(1, std::size_t(cfg.holdout_fraction * double(dataset.size())));
  const std::size_t train_n = dataset.size() - holdout;
  if (train_n == 0) throw ConfigError("fit_conditional_mean: holdout leaves no training data");

  std::vector<std::size_t> widths;
  widths.push_back(d);
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(d);
  Rng init_rng = root.substream(1);
  Mlp net = Mlp::glorot(widths, init_rng);
  AdamState opt = AdamState::create(net.param_count(), cfg.learning_rate);

  std::vector<Vec> xs(cfg.batch_size), ys(cfg.batch_size);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    Rng batch_rng = root.substream(2 + it);
    for (std::size_t j = 0; j < cfg.batch_size; ++j) {
      const auto& sample = dataset[order[batch_rng.uniform_index(train_n)]];
      xs[j] = sample.first;
      ys[j] = sample.second;
    }
    auto lg = net.loss_and_grad(xs, ys);
    if (!std::isfinite(lg.loss))
      throw TrainingError("fit_conditional_mean: loss diverged to non-finite at iteration " +
                          std::to_string(it));
    opt.apply(net.params, lg.grad);
  }

  double mse = 0.0;
  for (std::size_t i = train_n; i < dataset.size(); ++i) {
    const auto& sample = dataset[order[i]];
    mse += squared_dist(net.forward(sample.first), sample.second);
  }
  mse /= double(holdout) * double(d);

  FitResult result;
  result.estimator = ConditionalMeanEstimator::learned(std::move(net));
  result.holdout_mse = mse;
  return result;
}

std::string to_string(CouplingMode mode) {
  switch (mode) {
    case CouplingMode::Independent: return "independent";
    case CouplingMode::LqAnchored: return "lq-anchored";
    case CouplingMode::OracleAnchored: return "oracle-anchored";
    case CouplingMode::LearnedAnchored: return "learned-anchored";
  }
  throw ConfigError("to_string: invalid coupling mode");
}

CouplingMode coupling_mode_from_string(const std::string& text) {
  if (text == "independent") return CouplingMode::Independent;
  if (text == "lq-anchored") return CouplingMode::LqAnchored;
  if (text == "oracle-anchored") return CouplingMode::OracleAnchored;
  if (text == "learned-anchored") return CouplingMode::LearnedAnchored;
  throw ParseError("unknown coupling mode '" + text + "'");
}

void CouplingSetup::validate() const {
  source.validate();
  prior.validate();
  model.validate();
  if (source.dim() != dim || prior.dim() != dim || model.dim() != dim)
    throw ConfigError("CouplingSetup: dimension mismatch");
  if (!(sigma > 0.0)) throw ConfigError("CouplingSetup: sigma must be positive");
  if (mode == CouplingMode::LearnedAnchored &&
      (!estimator || estimator->mode != ConditionalMeanEstimator::Mode::Learned))
    throw ConfigError("CouplingSetup: learned-anchored mode needs a fitted estimator");
}

ConditionalMeanEstimator CouplingSetup::anchor_estimator() const {
  switch (mode) {
    case CouplingMode::Independent:
      throw ConfigError("CouplingSetup: independent mode has no anchor estimator");
    case CouplingMode::LqAnchored:
      return ConditionalMeanEstimator::identity();
    case CouplingMode::OracleAnchored:
      return ConditionalMeanEstimator::oracle(model, prior);
    case CouplingMode::LearnedAnchored:
      if (!estimator) throw ConfigError("CouplingSetup: missing learned estimator");
      return *estimator;
  }
  throw ConfigError("CouplingSetup: invalid mode");
}

CoupledPair CouplingSetup::sample(Rng& rng) const {
  if (mode == CouplingMode::Independent) {
    auto [z0, z1] = sample_independent_pair(source, prior, rng);
    CoupledPair pair;
    pair.z0 = std::move(z0);
    pair.z1 = std::move(z1);
    pair.c = zeros(dim);
    pair.lq = zeros(dim);
    return pair;
  }
  const Vec z1 = prior.sample(rng);
  if (mode == CouplingMode::LqAnchored)
    return sample_coupled_pair(z1, model, nullptr, sigma, codec, rng);
  const ConditionalMeanEstimator est = anchor_estimator();
  return sample_coupled_pair(z1, model, &est, sigma, codec, rng);
}

PairSampler CouplingSetup::sampler() const {
  validate();
  // Resolve the anchor map once; the closure then owns everything it needs.
  if (mode == CouplingMode::Independent) {
    CouplingSetup copy = *this;
    return [copy](Rng& rng) { return copy.sample(rng); };
  }
  const bool lq_anchor = (mode == CouplingMode::LqAnchored);
  ConditionalMeanEstimator est =
      lq_anchor ? ConditionalMeanEstimator::identity() : anchor_estimator();
  GaussianSpec rho1 = prior;
  DegradationModel deg = model;
  LatentCodec cod = codec;
  const double sig = sigma;
  return [rho1, deg, est, lq_anchor, sig, cod](Rng& rng) {
    const Vec z1 = rho1.sample(rng);
    return sample_coupled_pair(z1, deg, lq_anchor ? nullptr : &est, sig, cod, rng);
  };
}

}  // namespace cflow
