#include "lyapresp/lorenz96.hpp"

#include "lyapresp/parallel.hpp"
#include "lyapresp/rk4.hpp"
#include "lyapresp/rng.hpp"

#include <cmath>
#include <vector>

namespace lyapresp {

void Lorenz96System::rhs(const Vector& x, Vector& dxdt) const {
  const int n = p_.n;
  const double ab = p_.alpha * p_.beta;
  const double drive = p_.beta * p_.beta * (p_.forcing - p_.alpha);
  dxdt.resize(n);
  for (int i = 0; i < n; ++i) {
    const int im1 = (i - 1 + n) % n;
    const int im2 = (i - 2 + n) % n;
    const int ip1 = (i + 1) % n;
    dxdt[i] = (x[im1] + ab) * (x[ip1] - x[im2]) - p_.beta * x[i] + drive;
  }
}

void Lorenz96System::jacobian(const Vector& x, Matrix& jac) const {
  const int n = p_.n;
  const double ab = p_.alpha * p_.beta;
  jac.setZero(n, n);
  for (int i = 0; i < n; ++i) {
    const int im1 = (i - 1 + n) % n;
    const int im2 = (i - 2 + n) % n;
    const int ip1 = (i + 1) % n;
    jac(i, im2) += -(x[im1] + ab);
    jac(i, im1) += x[ip1] - x[im2];
    jac(i, i) += -p_.beta;
    jac(i, ip1) += x[im1] + ab;
  }
}

void Lorenz96System::apply_jacobian(const Vector& x, const Matrix& v, Matrix& out) const {
  const int n = p_.n;
  const double ab = p_.alpha * p_.beta;
  out.resize(n, v.cols());
  for (int i = 0; i < n; ++i) {
    const int im1 = (i - 1 + n) % n;
    const int im2 = (i - 2 + n) % n;
    const int ip1 = (i + 1) % n;
    const double adv = x[im1] + ab;
    out.row(i) = -adv * v.row(im2) + (x[ip1] - x[im2]) * v.row(im1) - p_.beta * v.row(i) +
                 adv * v.row(ip1);
  }
}

void Lorenz96System::hessian_contract(const Vector& /*x*/, const Vector& w, const Vector& u,
                                      Vector& out) const {
  // Nonzero second derivatives of f_a: d2f_a/dx_{a-1}dx_{a+1} = 1 and
  // d2f_a/dx_{a-1}dx_{a-2} = -1, plus their symmetric counterparts.
  const int n = p_.n;
  out.setZero(n);
  for (int a = 0; a < n; ++a) {
    const int am1 = (a - 1 + n) % n;
    const int am2 = (a - 2 + n) % n;
    const int ap1 = (a + 1) % n;
    const double wa = w[a];
    out[ap1] += wa * u[am1];
    out[am1] += wa * u[ap1];
    out[am2] -= wa * u[am1];
    out[am1] -= wa * u[am2];
  }
}

Vector seeded_initial_state(int n, std::uint64_t seed, double amplitude) {
  std::mt19937_64 gen(seed);
  Vector x(n);
  for (int i = 0; i < n; ++i) {
    x[i] = amplitude * (2.0 * uniform01(gen) - 1.0);
  }
  return x;
}

namespace {

struct MomentSums {
  Vector sum;
  Vector sum_sq;
  std::int64_t count = 0;

  explicit MomentSums(int n) : sum(Vector::Zero(n)), sum_sq(Vector::Zero(n)) {}

  void add(const Vector& x) {
    sum += x;
    sum_sq += x.cwiseProduct(x);
    ++count;
  }
  void merge(const MomentSums& other) {
    sum += other.sum;
    sum_sq += other.sum_sq;
    count += other.count;
  }
};

/// Integrates `shards` independent trajectories of `sys` (window/shards time
/// units each after spin-up) and returns per-node moment sums merged in shard
/// order. Seeds are mix_seed(seed, salt + shard).
MomentSums accumulate_moments(const System& sys, double dt, double spinup, double window,
                              int shards, std::uint64_t seed, std::uint64_t salt, int threads) {
  const int n = sys.dimension();
  const std::int64_t spin_steps = static_cast<std::int64_t>(std::llround(spinup / dt));
  const std::int64_t steps = static_cast<std::int64_t>(std::llround(window / shards / dt));

  std::vector<MomentSums> partial(static_cast<std::size_t>(shards), MomentSums(n));
  run_tasks(shards, threads, [&](std::int64_t s) {
    Vector x = seeded_initial_state(n, mix_seed(seed, salt + static_cast<std::uint64_t>(s)));
    x = advance(sys, std::move(x), dt, spin_steps);
    MomentSums& acc = partial[static_cast<std::size_t>(s)];
    advance(sys, std::move(x), dt, steps,
            [&acc](std::int64_t, const Vector& state) { acc.add(state); });
  });

  MomentSums total(n);
  for (const MomentSums& p : partial) total.merge(p);
  return total;
}

}  // namespace

CalibrationResult calibrate(int n, double forcing, const CalibrationOptions& options,
                            int threads) {
  L96Params standard{n, forcing, 0.0, 1.0};
  standard.validate();
  if (options.shards < 1) throw std::invalid_argument("calibrate: shards must be >= 1");
  if (options.sample_window <= 0.0 || options.validation_window <= 0.0) {
    throw std::invalid_argument("calibrate: windows must be positive");
  }

  const Lorenz96System standard_sys(standard);
  const MomentSums climate =
      accumulate_moments(standard_sys, options.dt, options.spinup, options.sample_window,
                         options.shards, options.seed, /*salt=*/0, threads);

  const double total = static_cast<double>(climate.count) * static_cast<double>(n);
  const double mean = climate.sum.sum() / total;
  const double var = climate.sum_sq.sum() / total - mean * mean;
  if (!(var > 1e-10)) {
    throw CalibrationError(
        "degenerate attractor: climatological variance collapsed, no rescaling exists", mean,
        var);
  }

  CalibrationResult result;
  result.alpha = mean;
  result.beta = 1.0 / std::sqrt(var);
  result.sample_window = options.sample_window;
  result.validation_window = options.validation_window;
  result.shards = options.shards;
  result.seed = options.seed;

  // Self-validation: the rescaled model must have per-node mean ~0 and variance ~1.
  const Lorenz96System rescaled(result.rescaled_params(n, forcing));
  const MomentSums check =
      accumulate_moments(rescaled, options.dt, options.spinup, options.validation_window,
                         options.shards, options.seed, /*salt=*/0x9d5u, threads);

  const double inv_count = 1.0 / static_cast<double>(check.count);
  double worst_mean = 0.0;
  double worst_var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double mi = check.sum[i] * inv_count;
    const double vi = check.sum_sq[i] * inv_count - mi * mi;
    worst_mean = std::max(worst_mean, std::abs(mi));
    worst_var = std::max(worst_var, std::abs(vi - 1.0));
  }
  result.residual_mean = worst_mean;
  result.residual_var = worst_var;

  if (worst_mean > k_max_residual_mean || worst_var > k_max_residual_var) {
    throw CalibrationError("calibration self-validation failed", worst_mean, worst_var);
  }
  return result;
}

}  // namespace lyapresp
