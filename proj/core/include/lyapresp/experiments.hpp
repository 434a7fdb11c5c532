#pragma once

#include "lyapresp/lyapunov.hpp"
#include "lyapresp/rk4.hpp"
#include "lyapresp/system.hpp"
#include "lyapresp/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace lyapresp {

/// Constant forcing p * e_node applied to one component of the vector field.
struct PerturbationSpec {
  int node = 0;
  double magnitude = 0.0;
};

/// Ensemble of independent trajectories combined by duration-weighted
/// averaging; the task plan (per-trajectory seeds) is fixed by `seed`.
struct EnsembleOptions {
  int trajectories = 1;
  std::uint64_t seed = 1;
  int threads = 1;
};

/// Largest Lyapunov exponent over an ensemble of trajectories with initial
/// conditions initial_state(trajectory_seed).
LyapunovResult measure_lyapunov(const System& sys,
                                const std::function<Vector(std::uint64_t)>& initial_state,
                                const LyapunovSettings& settings, const EnsembleOptions& ensemble);

/// Exponent of the perturbed field f(x) + p * e_node. A zero magnitude runs
/// the unperturbed system through the identical code path, so the p = 0 row
/// of a sweep reproduces the unperturbed exponent exactly.
LyapunovResult measure_perturbed_lyapunov(const System& base, const PerturbationSpec& pert,
                                          const std::function<Vector(std::uint64_t)>& initial_state,
                                          const LyapunovSettings& settings,
                                          const EnsembleOptions& ensemble);

struct SweepRow {
  double p = 0.0;
  int node = 0;
  double lambda = 0.0;
  double stderr_lambda = 0.0;
  bool diverged = false;
  std::string error;
  std::uint64_t seed = 0;
};

struct SweepResult {
  double lambda0 = 0.0;          // unperturbed exponent
  double stderr0 = 0.0;
  int node = 0;
  std::vector<SweepRow> rows;    // sorted by ascending p
};

struct SweepOptions {
  std::vector<double> magnitudes;
  int node = 0;
  LyapunovSettings lyapunov{};
  EnsembleOptions ensemble{};
  /// Record diverged rows instead of propagating TrajectoryDivergence.
  bool allow_partial = false;
};

/// Measures the exponent for every forcing magnitude (rows sorted ascending).
/// Every row uses the same base seed, so the p = 0 row is bit-identical to an
/// unperturbed measurement with that seed.
SweepResult response_sweep(const System& base,
                           const std::function<Vector(std::uint64_t)>& initial_state,
                           const SweepOptions& options);

/// Weighted least-squares comparison of measured exponent changes against the
/// predicted slope r(t0): a through-origin linear fit over |p| <= fit_max_p,
/// and a quadratic fit Delta_lambda = a*p + b*p^2 over all rows whose
/// curvature significance |b|/se(b) quantifies departure from linear response.
struct FitReport {
  double predicted_slope = 0.0;  // r(t0)
  double fit_max_p = 0.0;
  double linear_slope = 0.0;
  double linear_slope_stderr = 0.0;
  double relative_slope_error = 0.0;  // |linear_slope - predicted| / |predicted|
  double quad_linear = 0.0;           // a of the quadratic fit
  double quad_coeff = 0.0;            // b of the quadratic fit
  double quad_coeff_stderr = 0.0;
  double quad_significance = 0.0;     // |b| / se(b)
  std::vector<std::size_t> used_rows;  // indices into sweep.rows (linear fit)
  std::vector<double> residuals;       // Delta_lambda - slope*p per used row
};

FitReport linear_fit_compare(const SweepResult& sweep, double r_t0, double fit_max_p);

/// Default linear-range bound |p| for the three reference forcing regimes
/// (stronger chaos tolerates larger forcing before curvature shows).
double default_fit_max_p(double forcing);

/// Node-pooled autocorrelation of the state on the sampling grid h, mean
/// removed and variance normalised so acf(0) = 1.
struct AcfResult {
  double h = 0.0;
  std::vector<double> lags;
  std::vector<double> acf;
  double mean = 0.0;
  double variance = 0.0;
  std::int64_t samples = 0;
};

/// Streaming accumulator over equally spaced vector samples.
class AcfAccumulator {
 public:
  AcfAccumulator(int dim, int max_lag);

  void push(const Vector& x);
  std::int64_t samples() const { return count_; }
  /// h is the sample spacing in time units. Throws on degenerate variance.
  AcfResult finalize(double h) const;

 private:
  int dim_;
  int max_lag_;
  std::int64_t count_ = 0;
  std::vector<Vector> ring_;
  std::vector<double> cross_;
  Vector sum_;
};

AcfResult autocorrelation(const System& sys, const Vector& x0, const IntegratorConfig& integrator,
                          double lag_max, double window);

}  // namespace lyapresp
