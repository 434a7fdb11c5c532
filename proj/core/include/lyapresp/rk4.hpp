#pragma once

#include "lyapresp/system.hpp"
#include "lyapresp/types.hpp"

#include <cmath>
#include <cstdint>
#include <utility>

namespace lyapresp {

/// Fixed-step integration parameters. `substeps` RK4 steps of size `dt` make
/// up one history step h = dt * substeps (the sampling grid of the response
/// estimator); `spinup` time units are discarded before any statistics.
struct IntegratorConfig {
  double dt = 0.01;
  int substeps = 25;
  double spinup = 1000.0;

  double history_step() const { return dt * static_cast<double>(substeps); }
};

/// One classical RK4 step in place. Throws TrajectoryDivergence (with index -1)
/// if the updated state is non-finite; long-running drivers re-throw with the
/// offending step index attached.
void rk4_step(const System& sys, double dt, Vector& x);

/// One RK4 step of the state x fused with its tangent block v (dv/dt = Df(x(t)) v),
/// evaluating the Jacobian action at the same stage states used for x. v may have
/// any number of columns (1 for a Lyapunov vector, n for a full tangent map).
void rk4_joint_step(const System& sys, double dt, Vector& x, Matrix& v);

/// Advance `steps` RK4 steps from x, invoking obs(step_index, state) after each
/// completed step (step_index counts from 1). Divergence errors carry the index.
template <typename Observer>
Vector advance(const System& sys, Vector x, double dt, std::int64_t steps, Observer&& obs) {
  for (std::int64_t i = 0; i < steps; ++i) {
    try {
      rk4_step(sys, dt, x);
    } catch (const TrajectoryDivergence&) {
      throw TrajectoryDivergence(i + 1, static_cast<double>(i + 1) * dt);
    }
    obs(i + 1, std::as_const(x));
  }
  return x;
}

inline Vector advance(const System& sys, Vector x, double dt, std::int64_t steps) {
  return advance(sys, std::move(x), dt, steps, [](std::int64_t, const Vector&) {});
}

}  // namespace lyapresp
