#include "cflow/ode.hpp"

#include <cmath>
#include <string>

namespace cflow {

Vec euler_step(const Field& field, const Vec& z, double t, const Vec& c, double dt) {
  if (t + dt > 1.0 + 1e-12) throw InputError("euler_step: t + dt overruns 1");
  Vec out = z;
  if (dt == 0.0) return out;
  const Vec v = field(z, t, c, dt);
  if (v.size() != z.size()) throw ConfigError("euler_step: field dimension mismatch");
  axpy(out, dt, v);
  return out;
}

Trajectory integrate(const Field& field, const Vec& z0, const Vec& c, std::size_t n_steps,
                     DtMode mode) {
  if (n_steps < 1) throw InputError("integrate: need at least one step");
  const double h = 1.0 / double(n_steps);
  const double dt_channel = (mode == DtMode::Shortcut) ? h : 0.0;

  Trajectory traj;
  traj.times.reserve(n_steps + 1);
  traj.states.reserve(n_steps + 1);
  traj.times.push_back(0.0);
  traj.states.push_back(z0);

  Vec z = z0;
  for (std::size_t i = 0; i < n_steps; ++i) {
    const double t = double(i) / double(n_steps);
    const Vec v = field(z, t, c, dt_channel);
    if (v.size() != z.size()) throw ConfigError("integrate: field dimension mismatch");
    axpy(z, h, v);
    if (!all_finite(z))
      throw IntegrationError("integrate: non-finite state at step " + std::to_string(i + 1));
    traj.times.push_back(double(i + 1) / double(n_steps));
    traj.states.push_back(z);
  }
  return traj;
}

Trajectory rk4_integrate(const Field& field, const Vec& z0, const Vec& c, std::size_t n_steps) {
  if (n_steps < 1) throw InputError("rk4_integrate: need at least one step");
  const double h = 1.0 / double(n_steps);

  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(z0);

  Vec z = z0;
  for (std::size_t i = 0; i < n_steps; ++i) {
    const double t = double(i) / double(n_steps);
    const Vec k1 = field(z, t, c, 0.0);
    Vec z2 = z;
    axpy(z2, 0.5 * h, k1);
    const Vec k2 = field(z2, t + 0.5 * h, c, 0.0);
    Vec z3 = z;
    axpy(z3, 0.5 * h, k2);
    const Vec k3 = field(z3, t + 0.5 * h, c, 0.0);
    Vec z4 = z;
    axpy(z4, h, k3);
    const double t_end = double(i + 1) / double(n_steps);
    const Vec k4 = field(z4, std::min(t_end, 1.0), c, 0.0);
    for (std::size_t j = 0; j < z.size(); ++j)
      z[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    if (!all_finite(z))
      throw IntegrationError("rk4_integrate: non-finite state at step " + std::to_string(i + 1));
    traj.times.push_back(t_end);
    traj.states.push_back(z);
  }
  return traj;
}

Vec one_step_restore(const Field& field, const Vec& lq, const ConditionalMeanEstimator& estimator,
                     double sigma, Rng& rng) {
  const Vec c = estimator(lq);
  Vec z0 = anchored_source(c, sigma, rng);
  const Vec v = field(z0, 0.0, c, 1.0);
  if (v.size() != z0.size()) throw ConfigError("one_step_restore: field dimension mismatch");
  axpy(z0, 1.0, v);
  return z0;
}

Field make_net_field(VelocityNet net, bool conditioning, Vec params_override) {
  if (!params_override.empty() && params_override.size() != net.mlp.param_count())
    throw ConfigError("make_net_field: parameter override length mismatch");
  const Vec zero = zeros(net.dim);
  return [net = std::move(net), conditioning, params = std::move(params_override),
          zero](const Vec& z, double t, const Vec& c, double dt) {
    const Vec& cc = conditioning ? c : zero;
    return params.empty() ? net.forward(z, t, cc, dt) : net.forward_with(params, z, t, cc, dt);
  };
}

}  // namespace cflow
