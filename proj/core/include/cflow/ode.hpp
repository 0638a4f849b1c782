#pragma once

#include <functional>
#include <vector>

#include "cflow/coupling.hpp"
#include "cflow/net.hpp"

namespace cflow {

/// A velocity field view: (z, t, c, dt-channel) -> velocity. Trained nets,
/// EMA shadows, and analytic oracles all fit behind this signature.
using Field = std::function<Vec(const Vec& z, double t, const Vec& c, double dt)>;

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;

  std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
};

enum class DtMode { Instantaneous, Shortcut };

/// z + field(z, t, c, dt) * dt. Throws InputError when t + dt overruns 1.
Vec euler_step(const Field& field, const Vec& z, double t, const Vec& c, double dt);

/// Forward Euler on the uniform grid {0, 1/n, ..., 1}. Instantaneous mode
/// queries the field with dt-channel 0; shortcut mode with dt-channel 1/n.
/// Throws IntegrationError naming the step index if a state goes non-finite.
Trajectory integrate(const Field& field, const Vec& z0, const Vec& c, std::size_t n_steps,
                     DtMode mode);

/// Classical RK4 on the same grid, dt-channel 0. Reference integrator for
/// analytic fields only; the learned field's inference path is Euler-form.
Trajectory rk4_integrate(const Field& field, const Vec& z0, const Vec& c, std::size_t n_steps);

/// Single-step restoration: c = estimator(lq), z0 ~ N(c, sigma^2 I),
/// output z0 + field(z0, 0, c, 1).
Vec one_step_restore(const Field& field, const Vec& lq, const ConditionalMeanEstimator& estimator,
                     double sigma, Rng& rng);

/// Wraps a trained net (by value) as a Field. With conditioning disabled the
/// c channel is zeroed before every evaluation. A non-empty params override
/// evaluates the same topology with different weights (EMA inference).
Field make_net_field(VelocityNet net, bool conditioning, Vec params_override = {});

}  // namespace cflow
