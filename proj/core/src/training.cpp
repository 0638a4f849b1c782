#include "cflow/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace cflow {

namespace {
constexpr std::uint64_t kTrainStream = 0x7261696eULL;  // stream tag
}  // namespace

TrainBatch TrainBatch::subset(SubsetTag tag) const {
  TrainBatch out;
  for (const auto& e : elements)
    if (e.tag == tag) out.elements.push_back(e);
  return out;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("TrainConfig: batch_size must be positive");
  if (!(fm_fraction > 0.0 && fm_fraction < 1.0))
    throw ConfigError("TrainConfig: fm_fraction must be in (0,1)");
  if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be positive");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0))
    throw ConfigError("TrainConfig: ema_decay must be in [0,1)");
  if (dt_grid_depth < 1) throw ConfigError("TrainConfig: dt_grid_depth must be >= 1");
  if (shortcut && batch_size < 2)
    throw ConfigError("TrainConfig: shortcut training needs batch_size >= 2");
}

Vec interpolate(const Vec& z0, const Vec& z1, double t) {
  if (z0.size() != z1.size()) throw ConfigError("interpolate: dimension mismatch");
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("interpolate: t outside [0,1]");
  Vec out(z0.size());
  const double a = 1.0 - t;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + t * z1[i];
  return out;
}

Mlp::LossGrad fm_loss_batch(const VelocityNet& net, const TrainBatch& batch, bool conditioning) {
  if (batch.elements.empty()) throw InputError("fm_loss_batch: empty batch");
  const Vec zero = zeros(net.dim);
  std::vector<Vec> xs, ys;
  xs.reserve(batch.elements.size());
  ys.reserve(batch.elements.size());
  for (const auto& e : batch.elements) {
    if (e.tag != SubsetTag::Fm)
      throw InputError("fm_loss_batch: shortcut-tagged element present");
    if (e.dt != 0.0) throw InputError("fm_loss_batch: fm element with nonzero dt");
    const Vec z_t = interpolate(e.pair.z0, e.pair.z1, e.t);
    const Vec& c = conditioning ? e.pair.c : zero;
    xs.push_back(net.assemble(z_t, e.t, c, 0.0));
    ys.push_back(sub(e.pair.z1, e.pair.z0));
  }
  return net.mlp.loss_and_grad(xs, ys);
}

Vec shortcut_target(const VelocityNet& net, std::span<const double> ema_params, const Vec& z_t,
                    double t, const Vec& c, double dt) {
  if (!(dt > 0.0)) throw InputError("shortcut_target: dt must be positive");
  if (t + 2.0 * dt > 1.0 + 1e-12) throw InputError("shortcut_target: interval overrun");
  const Vec v1 = net.forward_with(ema_params, z_t, t, c, dt);
  Vec z_next = z_t;
  axpy(z_next, dt, v1);
  const Vec v2 = net.forward_with(ema_params, z_next, t + dt, c, dt);
  Vec target(v1.size());
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = 0.5 * (v1[i] + v2[i]);
  return target;
}

Mlp::LossGrad shortcut_loss_batch(const VelocityNet& net, std::span<const double> ema_params,
                                  const TrainBatch& batch, bool conditioning) {
  if (batch.elements.empty()) throw InputError("shortcut_loss_batch: empty batch");
  const Vec zero = zeros(net.dim);
  std::vector<Vec> xs, ys;
  xs.reserve(batch.elements.size());
  ys.reserve(batch.elements.size());
  for (const auto& e : batch.elements) {
    if (e.tag != SubsetTag::Shortcut)
      throw InputError("shortcut_loss_batch: fm-tagged element present");
    if (!(e.dt > 0.0)) throw InputError("shortcut_loss_batch: dt must be positive");
    if (e.t + 2.0 * e.dt > 1.0 + 1e-12)
      throw InputError("shortcut_loss_batch: interval overrun");
    const Vec z_t = interpolate(e.pair.z0, e.pair.z1, e.t);
    const Vec& c = conditioning ? e.pair.c : zero;
    ys.push_back(shortcut_target(net, ema_params, z_t, e.t, c, e.dt));
    xs.push_back(net.assemble(z_t, e.t, c, 2.0 * e.dt));
  }
  return net.mlp.loss_and_grad(xs, ys);
}

std::pair<double, double> sample_dt(std::size_t grid_depth, Rng& rng) {
  if (grid_depth < 1) throw ConfigError("sample_dt: grid depth must be >= 1");
  const std::uint64_t j = 1 + rng.uniform_index(grid_depth);
  const double dt = std::ldexp(1.0, -int(j));
  // Valid anchors are t = m * dt with t + 2dt <= 1, i.e. m in [0, 2^j - 2].
  const std::uint64_t slots = (std::uint64_t(1) << j) - 1;
  const double t = double(rng.uniform_index(slots)) * dt;
  return {t, dt};
}

TrainState make_train_state(std::size_t dim, const std::vector<std::size_t>& hidden,
                            std::size_t time_features, const TrainConfig& cfg) {
  cfg.validate();
  Rng init = Rng(cfg.seed).substream(0x696e6974ULL);
  TrainState st;
  st.net = VelocityNet::create(dim, hidden, time_features, init);
  st.ema = EmaShadow(st.net.mlp.params, cfg.ema_decay);
  st.opt = AdamState::create(st.net.mlp.param_count(), cfg.learning_rate);
  st.opt.beta1 = cfg.adam_beta1;
  st.opt.beta2 = cfg.adam_beta2;
  st.opt.epsilon = cfg.adam_epsilon;
  return st;
}

TrainResult train(const TrainConfig& cfg, const PairSampler& sampler, TrainState start,
                  std::size_t run_iters) {
  cfg.validate();
  TrainResult result;
  result.state = std::move(start);
  TrainState& st = result.state;
  const std::size_t d = st.net.dim;

  const std::uint64_t stop = run_iters == 0
                                 ? cfg.iterations
                                 : std::min<std::uint64_t>(cfg.iterations,
                                                           st.iteration + run_iters);
  if (st.iteration > cfg.iterations)
    throw ConfigError("train: start iteration beyond configured total");
  result.log.reserve(stop > st.iteration ? std::size_t(stop - st.iteration) : 0);

  const Rng root = Rng(cfg.seed).substream(kTrainStream);

  std::size_t n_fm = cfg.batch_size;
  if (cfg.shortcut) {
    n_fm = std::size_t(std::llround(cfg.fm_fraction * double(cfg.batch_size)));
    n_fm = std::clamp<std::size_t>(n_fm, 1, cfg.batch_size - 1);
  }

  while (st.iteration < stop) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng it_rng = root.substream(st.iteration + 1);

    TrainBatch batch;
    batch.elements.resize(cfg.batch_size);
    for (std::size_t j = 0; j < cfg.batch_size; ++j) {
      BatchElement& e = batch.elements[j];
      e.pair = sampler(it_rng);
      if (e.pair.z0.size() != d || e.pair.z1.size() != d)
        throw ConfigError("train: sampler dimension does not match net");
      if (j < n_fm) {
        e.t = it_rng.uniform();
        e.dt = 0.0;
        e.tag = SubsetTag::Fm;
      } else {
        auto [t, dt] = sample_dt(cfg.dt_grid_depth, it_rng);
        e.t = t;
        e.dt = dt;
        e.tag = SubsetTag::Shortcut;
      }
    }

    const TrainBatch fm_subset = batch.subset(SubsetTag::Fm);
    auto fm = fm_loss_batch(st.net, fm_subset, cfg.conditioning);

    double sc_loss = 0.0;
    Vec grad = std::move(fm.grad);
    if (cfg.shortcut) {
      const TrainBatch sc_subset = batch.subset(SubsetTag::Shortcut);
      if (!sc_subset.elements.empty()) {
        auto sc = shortcut_loss_batch(st.net, st.ema.params, sc_subset, cfg.conditioning);
        sc_loss = sc.loss;
        axpy(grad, 1.0, sc.grad);
        // 1 live query at 2dt plus 2 EMA queries at dt per element.
        result.dt_positive_queries += 3 * sc_subset.elements.size();
      }
    }

    const double grad_norm = norm(grad);
    if (!std::isfinite(fm.loss) || !std::isfinite(sc_loss) || !std::isfinite(grad_norm)) {
      // Parameters have not been touched this iteration; the state on return
      // is the last good one.
      result.nan_abort = true;
      break;
    }

    st.opt.apply(st.net.mlp.params, grad);
    st.ema.update(st.net.mlp.params);
    ++st.iteration;

    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back({st.iteration, fm.loss, sc_loss, grad_norm, wall_ms});
  }
  return result;
}

}  // namespace cflow
