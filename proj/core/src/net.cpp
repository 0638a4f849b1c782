#include "cflow/net.hpp"

#include <cmath>
#include <numbers>

namespace cflow {

std::size_t Mlp::param_count_for(const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw ConfigError("Mlp: need at least input and output widths");
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    if (widths[l] == 0 || widths[l + 1] == 0) throw ConfigError("Mlp: zero layer width");
    n += widths[l + 1] * widths[l] + widths[l + 1];
  }
  return n;
}

Mlp Mlp::zeros(std::vector<std::size_t> widths) {
  Mlp net;
  net.params.assign(param_count_for(widths), 0.0);
  net.widths = std::move(widths);
  return net;
}

Mlp Mlp::glorot(std::vector<std::size_t> widths, Rng& rng) {
  Mlp net = zeros(widths);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
    const std::size_t fan_in = net.widths[l];
    const std::size_t fan_out = net.widths[l + 1];
    const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
    for (std::size_t i = 0; i < fan_out * fan_in; ++i)
      net.params[off + i] = rng.uniform(-limit, limit);
    off += fan_out * fan_in + fan_out;  // biases stay zero
  }
  return net;
}

namespace {

void forward_impl(const std::vector<std::size_t>& widths, std::span<const double> p,
                  std::span<const double> x, std::vector<Vec>& activations) {
  activations.resize(widths.size());
  activations[0].assign(x.begin(), x.end());
  std::size_t off = 0;
  const std::size_t layers = widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = widths[l];
    const std::size_t out = widths[l + 1];
    const Vec& h = activations[l];
    Vec& next = activations[l + 1];
    next.assign(out, 0.0);
    const double* w = p.data() + off;
    const double* b = p.data() + off + out * in;
    const bool last = (l + 1 == layers);
    for (std::size_t i = 0; i < out; ++i) {
      double acc = b[i];
      const double* row = w + i * in;
      for (std::size_t j = 0; j < in; ++j) acc += row[j] * h[j];
      next[i] = last ? acc : std::tanh(acc);
    }
    off += out * in + out;
  }
}

}  // namespace

Vec Mlp::forward(std::span<const double> x) const { return forward_with(params, x); }

Vec Mlp::forward_with(std::span<const double> p, std::span<const double> x) const {
  if (x.size() != input_size()) throw ConfigError("Mlp::forward: input length mismatch");
  if (p.size() != param_count()) throw ConfigError("Mlp::forward: parameter length mismatch");
  check_finite(x, "Mlp::forward input");
  std::vector<Vec> acts;
  forward_impl(widths, p, x, acts);
  return acts.back();
}

Mlp::LossGrad Mlp::loss_and_grad(const std::vector<Vec>& inputs,
                                 const std::vector<Vec>& targets) const {
  if (inputs.empty()) throw InputError("loss_and_grad: empty batch");
  if (inputs.size() != targets.size())
    throw ConfigError("loss_and_grad: inputs/targets size mismatch");

  const std::size_t layers = widths.size() - 1;
  const std::size_t d_out = output_size();
  const double inv_norm = 1.0 / (double(inputs.size()) * double(d_out));

  LossGrad result;
  result.grad.assign(param_count(), 0.0);

  std::vector<Vec> acts;
  std::vector<Vec> deltas(widths.size());

  for (std::size_t b = 0; b < inputs.size(); ++b) {
    const Vec& x = inputs[b];
    const Vec& y = targets[b];
    if (x.size() != input_size()) throw ConfigError("loss_and_grad: input length mismatch");
    if (y.size() != d_out) throw ConfigError("loss_and_grad: target length mismatch");
    check_finite(x, "loss_and_grad input");

    forward_impl(widths, params, x, acts);

    // Output layer is linear, so the delta is the loss derivative directly.
    Vec& dout = deltas[layers];
    dout.assign(d_out, 0.0);
    for (std::size_t i = 0; i < d_out; ++i) {
      const double r = acts[layers][i] - y[i];
      result.loss += r * r * inv_norm;
      dout[i] = 2.0 * r * inv_norm;
    }

    std::size_t off = param_count();
    for (std::size_t ll = layers; ll-- > 0;) {
      const std::size_t in = widths[ll];
      const std::size_t out = widths[ll + 1];
      off -= out * in + out;
      const double* w = params.data() + off;
      double* gw = result.grad.data() + off;
      double* gb = result.grad.data() + off + out * in;
      const Vec& h = acts[ll];
      const Vec& delta = deltas[ll + 1];

      for (std::size_t i = 0; i < out; ++i) {
        const double di = delta[i];
        gb[i] += di;
        double* grow = gw + i * in;
        for (std::size_t j = 0; j < in; ++j) grow[j] += di * h[j];
      }
      if (ll > 0) {
        Vec& dprev = deltas[ll];
        dprev.assign(in, 0.0);
        for (std::size_t i = 0; i < out; ++i) {
          const double di = delta[i];
          const double* row = w + i * in;
          for (std::size_t j = 0; j < in; ++j) dprev[j] += row[j] * di;
        }
        // tanh'(pre) expressed through the stored activation.
        for (std::size_t j = 0; j < in; ++j) dprev[j] *= 1.0 - h[j] * h[j];
      }
    }
  }
  return result;
}

Vec time_embed(double t, std::size_t k) {
  if (k < 2 || k % 2 != 0) throw ConfigError("time_embed: feature count must be even and >= 2");
  if (!std::isfinite(t)) throw InputError("time_embed: non-finite time");
  Vec out(k);
  double omega = std::numbers::pi;
  for (std::size_t j = 0; j < k / 2; ++j) {
    out[2 * j] = std::sin(omega * t);
    out[2 * j + 1] = std::cos(omega * t);
    omega *= 2.0;
  }
  return out;
}

VelocityNet VelocityNet::create(std::size_t dim, const std::vector<std::size_t>& hidden,
                                std::size_t time_features, Rng& rng) {
  if (dim == 0) throw ConfigError("VelocityNet: dim must be positive");
  VelocityNet net;
  net.dim = dim;
  net.time_features = time_features;
  std::vector<std::size_t> widths;
  widths.push_back(2 * dim + 2 * time_features);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(dim);
  net.mlp = Mlp::glorot(std::move(widths), rng);
  return net;
}

Vec VelocityNet::assemble(const Vec& z, double t, const Vec& c, double dt) const {
  if (z.size() != dim || c.size() != dim)
    throw ConfigError("VelocityNet: z/c length does not match dim");
  if (!std::isfinite(t) || !std::isfinite(dt))
    throw InputError("VelocityNet: non-finite t or dt");
  check_finite(z, "VelocityNet z");
  check_finite(c, "VelocityNet c");
  Vec x;
  x.reserve(input_size());
  x.insert(x.end(), z.begin(), z.end());
  const Vec et = time_embed(t, time_features);
  x.insert(x.end(), et.begin(), et.end());
  const Vec edt = time_embed(dt, time_features);
  x.insert(x.end(), edt.begin(), edt.end());
  x.insert(x.end(), c.begin(), c.end());
  return x;
}

Vec VelocityNet::forward(const Vec& z, double t, const Vec& c, double dt) const {
  return mlp.forward(assemble(z, t, c, dt));
}

Vec VelocityNet::forward_with(std::span<const double> params, const Vec& z, double t,
                              const Vec& c, double dt) const {
  return mlp.forward_with(params, assemble(z, t, c, dt));
}

EmaShadow::EmaShadow(Vec initial, double decay_in) : params(std::move(initial)), decay(decay_in) {
  if (!(decay >= 0.0 && decay < 1.0)) throw ConfigError("EmaShadow: decay must be in [0,1)");
}

void EmaShadow::update(std::span<const double> current) {
  if (current.size() != params.size()) throw ConfigError("EmaShadow: parameter count mismatch");
  if (!(decay >= 0.0 && decay < 1.0)) throw ConfigError("EmaShadow: decay must be in [0,1)");
  const double blend = 1.0 - decay;
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i] = decay * params[i] + blend * current[i];
}

AdamState AdamState::create(std::size_t n, double learning_rate) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.learning_rate = learning_rate;
  return s;
}

void AdamState::apply(Vec& params, const Vec& grad) {
  if (m.size() != params.size() || grad.size() != params.size())
    throw ConfigError("AdamState: array length mismatch");
  ++step;
  const double bc1 = 1.0 - std::pow(beta1, double(step));
  const double bc2 = 1.0 - std::pow(beta2, double(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    params[i] -= learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + epsilon);
  }
}

}  // namespace cflow
