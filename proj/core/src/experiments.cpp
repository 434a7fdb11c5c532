#include "lyapresp/experiments.hpp"

#include "lyapresp/parallel.hpp"
#include "lyapresp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lyapresp {

LyapunovResult measure_lyapunov(const System& sys,
                                const std::function<Vector(std::uint64_t)>& initial_state,
                                const LyapunovSettings& settings,
                                const EnsembleOptions& ensemble) {
  if (ensemble.trajectories < 1) {
    throw std::invalid_argument("measure_lyapunov: trajectories must be >= 1");
  }
  if (ensemble.trajectories == 1) {
    return largest_lyapunov(sys, initial_state(ensemble.seed), settings);
  }

  std::vector<LyapunovResult> parts(static_cast<std::size_t>(ensemble.trajectories));
  run_tasks(ensemble.trajectories, ensemble.threads, [&](std::int64_t t) {
    const std::uint64_t seed = mix_seed(ensemble.seed, static_cast<std::uint64_t>(t));
    parts[static_cast<std::size_t>(t)] = largest_lyapunov(sys, initial_state(seed), settings);
  });

  LyapunovResult combined;
  double weighted = 0.0;
  double duration = 0.0;
  for (const LyapunovResult& p : parts) {
    weighted += p.lambda * p.window;
    duration += p.window;
    combined.block_lambdas.insert(combined.block_lambdas.end(), p.block_lambdas.begin(),
                                  p.block_lambdas.end());
  }
  combined.lambda = weighted / duration;
  combined.window = duration;
  combined.trace = parts.front().trace;
  combined.blocks = static_cast<std::int64_t>(combined.block_lambdas.size());
  if (combined.blocks >= 2) {
    double mean = 0.0;
    for (double b : combined.block_lambdas) mean += b;
    mean /= static_cast<double>(combined.blocks);
    double ss = 0.0;
    for (double b : combined.block_lambdas) ss += (b - mean) * (b - mean);
    combined.stderr_lambda =
        std::sqrt(ss / static_cast<double>(combined.blocks - 1) / static_cast<double>(combined.blocks));
  }
  return combined;
}

LyapunovResult measure_perturbed_lyapunov(const System& base, const PerturbationSpec& pert,
                                          const std::function<Vector(std::uint64_t)>& initial_state,
                                          const LyapunovSettings& settings,
                                          const EnsembleOptions& ensemble) {
  const int n = base.dimension();
  if (pert.node < 0 || pert.node >= n) {
    throw std::invalid_argument("measure_perturbed_lyapunov: node out of range");
  }
  if (pert.magnitude == 0.0) {
    return measure_lyapunov(base, initial_state, settings, ensemble);
  }
  Vector forcing = Vector::Zero(n);
  forcing[pert.node] = pert.magnitude;
  const AdditiveForcing forced(base, std::move(forcing));
  return measure_lyapunov(forced, initial_state, settings, ensemble);
}

SweepResult response_sweep(const System& base,
                           const std::function<Vector(std::uint64_t)>& initial_state,
                           const SweepOptions& options) {
  if (options.magnitudes.empty()) {
    throw std::invalid_argument("response_sweep: at least one magnitude required");
  }
  std::vector<double> mags = options.magnitudes;
  std::sort(mags.begin(), mags.end());

  SweepResult result;
  result.node = options.node;

  bool have_zero = false;
  for (double p : mags) {
    SweepRow row;
    row.p = p;
    row.node = options.node;
    row.seed = options.ensemble.seed;
    try {
      const LyapunovResult r = measure_perturbed_lyapunov(
          base, PerturbationSpec{options.node, p}, initial_state, options.lyapunov,
          options.ensemble);
      row.lambda = r.lambda;
      row.stderr_lambda = r.stderr_lambda;
      if (p == 0.0) {
        have_zero = true;
        result.lambda0 = r.lambda;
        result.stderr0 = r.stderr_lambda;
      }
    } catch (const TrajectoryDivergence& e) {
      if (!options.allow_partial) throw;
      row.diverged = true;
      row.error = e.what();
      row.lambda = std::nan("");
      row.stderr_lambda = std::nan("");
    }
    result.rows.push_back(std::move(row));
  }

  if (!have_zero) {
    const LyapunovResult r =
        measure_lyapunov(base, initial_state, options.lyapunov, options.ensemble);
    result.lambda0 = r.lambda;
    result.stderr0 = r.stderr_lambda;
  }
  return result;
}

namespace {

struct WeightedRow {
  double p;
  double dlambda;
  double weight;
  std::size_t index;
};

std::vector<WeightedRow> usable_rows(const SweepResult& sweep, double max_abs_p,
                                     bool& weighted) {
  weighted = true;
  for (const SweepRow& r : sweep.rows) {
    if (r.diverged) continue;
    if (std::abs(r.p) > max_abs_p * (1.0 + 1e-12)) continue;
    if (!(r.stderr_lambda > 0.0)) weighted = false;
  }
  std::vector<WeightedRow> rows;
  for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
    const SweepRow& r = sweep.rows[i];
    if (r.diverged) continue;
    if (std::abs(r.p) > max_abs_p * (1.0 + 1e-12)) continue;
    const double w = weighted ? 1.0 / (r.stderr_lambda * r.stderr_lambda) : 1.0;
    rows.push_back(WeightedRow{r.p, r.lambda - sweep.lambda0, w, i});
  }
  return rows;
}

}  // namespace

FitReport linear_fit_compare(const SweepResult& sweep, double r_t0, double fit_max_p) {
  FitReport report;
  report.predicted_slope = r_t0;
  report.fit_max_p = fit_max_p;

  // Through-origin linear fit over the linear range.
  bool weighted = false;
  const std::vector<WeightedRow> lin = usable_rows(sweep, fit_max_p, weighted);
  std::size_t informative = 0;
  for (const WeightedRow& r : lin) {
    if (r.p != 0.0) ++informative;
  }
  if (informative < 2) {
    throw std::invalid_argument(
        "linear_fit_compare: need at least two non-zero magnitudes inside the linear range");
  }

  double swp2 = 0.0, swpd = 0.0;
  for (const WeightedRow& r : lin) {
    swp2 += r.weight * r.p * r.p;
    swpd += r.weight * r.p * r.dlambda;
  }
  report.linear_slope = swpd / swp2;

  if (weighted) {
    report.linear_slope_stderr = std::sqrt(1.0 / swp2);
  } else {
    double ss = 0.0;
    std::size_t used = 0;
    for (const WeightedRow& r : lin) {
      const double resid = r.dlambda - report.linear_slope * r.p;
      ss += resid * resid;
      ++used;
    }
    const double dof = static_cast<double>(used > 1 ? used - 1 : 1);
    report.linear_slope_stderr = std::sqrt(ss / dof / swp2);
  }

  for (const WeightedRow& r : lin) {
    report.used_rows.push_back(r.index);
    report.residuals.push_back(r.dlambda - report.linear_slope * r.p);
  }
  report.relative_slope_error =
      r_t0 != 0.0 ? std::abs(report.linear_slope - r_t0) / std::abs(r_t0)
                  : std::numeric_limits<double>::quiet_NaN();

  // Quadratic fit over all rows: Delta = a*p + b*p^2 (through the origin by
  // construction, since Delta(0) = 0 identically).
  bool all_weighted = false;
  const std::vector<WeightedRow> all =
      usable_rows(sweep, std::numeric_limits<double>::infinity(), all_weighted);
  double s22 = 0.0, s23 = 0.0, s24 = 0.0, sd1 = 0.0, sd2 = 0.0;
  for (const WeightedRow& r : all) {
    const double p2 = r.p * r.p;
    s22 += r.weight * p2;
    s23 += r.weight * p2 * r.p;
    s24 += r.weight * p2 * p2;
    sd1 += r.weight * r.p * r.dlambda;
    sd2 += r.weight * p2 * r.dlambda;
  }
  const double det = s22 * s24 - s23 * s23;
  if (det > 0.0) {
    report.quad_linear = (s24 * sd1 - s23 * sd2) / det;
    report.quad_coeff = (s22 * sd2 - s23 * sd1) / det;
    double scale = 1.0;
    if (!all_weighted) {
      // Unweighted: scale the covariance by the residual variance.
      double ss = 0.0;
      for (const WeightedRow& r : all) {
        const double resid =
            r.dlambda - report.quad_linear * r.p - report.quad_coeff * r.p * r.p;
        ss += resid * resid;
      }
      const std::size_t dof = all.size() > 2 ? all.size() - 2 : 1;
      scale = ss / static_cast<double>(dof);
    }
    report.quad_coeff_stderr = std::sqrt(scale * s22 / det);
    report.quad_significance =
        report.quad_coeff_stderr > 0.0 ? std::abs(report.quad_coeff) / report.quad_coeff_stderr
                                       : std::numeric_limits<double>::infinity();
  }
  return report;
}

double default_fit_max_p(double forcing) {
  if (forcing <= 5.5) return 0.01;
  if (forcing <= 7.0) return 0.02;
  return 0.03;
}

AcfAccumulator::AcfAccumulator(int dim, int max_lag) : dim_(dim), max_lag_(max_lag) {
  if (dim < 1) throw std::invalid_argument("AcfAccumulator: dim must be >= 1");
  if (max_lag < 0) throw std::invalid_argument("AcfAccumulator: max_lag must be >= 0");
  ring_.assign(static_cast<std::size_t>(max_lag_) + 1, Vector::Zero(dim_));
  cross_.assign(static_cast<std::size_t>(max_lag_) + 1, 0.0);
  sum_ = Vector::Zero(dim_);
}

void AcfAccumulator::push(const Vector& x) {
  if (x.size() != dim_) throw std::invalid_argument("AcfAccumulator: dimension mismatch");
  const std::size_t slot = static_cast<std::size_t>(count_ % (max_lag_ + 1));
  ring_[slot] = x;
  sum_ += x;
  const std::int64_t max_j = std::min<std::int64_t>(max_lag_, count_);
  for (std::int64_t j = 0; j <= max_j; ++j) {
    const std::size_t past = static_cast<std::size_t>((count_ - j) % (max_lag_ + 1));
    cross_[static_cast<std::size_t>(j)] += x.dot(ring_[past]);
  }
  ++count_;
}

AcfResult AcfAccumulator::finalize(double h) const {
  if (count_ <= max_lag_) {
    throw std::invalid_argument("AcfAccumulator: window too short for the requested lag");
  }
  const double denom = static_cast<double>(count_) * static_cast<double>(dim_);
  const double mean = sum_.sum() / denom;
  const double second = cross_[0] / denom;
  const double var = second - mean * mean;
  if (!(var > 0.0)) {
    throw std::invalid_argument("AcfAccumulator: degenerate series (zero variance)");
  }

  AcfResult result;
  result.h = h;
  result.mean = mean;
  result.variance = var;
  result.samples = count_;
  result.lags.resize(static_cast<std::size_t>(max_lag_) + 1);
  result.acf.resize(static_cast<std::size_t>(max_lag_) + 1);
  for (int j = 0; j <= max_lag_; ++j) {
    const double cnt = static_cast<double>(count_ - j) * static_cast<double>(dim_);
    const double corr = cross_[static_cast<std::size_t>(j)] / cnt - mean * mean;
    result.lags[static_cast<std::size_t>(j)] = h * static_cast<double>(j);
    result.acf[static_cast<std::size_t>(j)] = corr / var;
  }
  return result;
}

AcfResult autocorrelation(const System& sys, const Vector& x0, const IntegratorConfig& integrator,
                          double lag_max, double window) {
  const double h = integrator.history_step();
  const int max_lag = static_cast<int>(std::llround(lag_max / h));
  const std::int64_t samples = static_cast<std::int64_t>(std::llround(window / h));
  if (samples <= max_lag) {
    throw std::invalid_argument("autocorrelation: window too short for the requested lag");
  }

  const std::int64_t spin_steps =
      static_cast<std::int64_t>(std::llround(integrator.spinup / integrator.dt));
  Vector x = advance(sys, x0, integrator.dt, spin_steps);

  AcfAccumulator acc(sys.dimension(), max_lag);
  acc.push(x);
  for (std::int64_t k = 1; k < samples; ++k) {
    for (int i = 0; i < integrator.substeps; ++i) {
      try {
        rk4_step(sys, integrator.dt, x);
      } catch (const TrajectoryDivergence&) {
        const std::int64_t step = spin_steps + (k - 1) * integrator.substeps + i + 1;
        throw TrajectoryDivergence(step, static_cast<double>(step) * integrator.dt);
      }
    }
    acc.push(x);
  }
  return acc.finalize(h);
}

}  // namespace lyapresp
