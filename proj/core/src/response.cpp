#include "lyapresp/response.hpp"

#include "lyapresp/parallel.hpp"
#include "lyapresp/rng.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace lyapresp {

CorrelationGrid::CorrelationGrid(ResponseGridConfig config) : config_(config) {
  config_.validate();
  const int m_count = config_.depth + 1;
  c1_.assign(static_cast<std::size_t>(m_count), Vector::Zero(config_.dim));
  c2_.assign(static_cast<std::size_t>(m_count) * (m_count + 1) / 2, Vector::Zero(config_.dim));
}

std::size_t CorrelationGrid::tri_index(int m, int n) const {
  if (m < 0 || n < m || n > config_.depth) {
    throw std::out_of_range("CorrelationGrid: lag pair (" + std::to_string(m) + ", " +
                            std::to_string(n) + ") outside the triangle");
  }
  const std::size_t mm = static_cast<std::size_t>(m);
  const std::size_t depth1 = static_cast<std::size_t>(config_.depth) + 1;
  return mm * depth1 - mm * (mm - 1) / 2 + static_cast<std::size_t>(n - m);
}

Vector& CorrelationGrid::c1(int m) {
  if (m < 0 || m > config_.depth) throw std::out_of_range("CorrelationGrid: lag out of range");
  return c1_[static_cast<std::size_t>(m)];
}
const Vector& CorrelationGrid::c1(int m) const {
  if (m < 0 || m > config_.depth) throw std::out_of_range("CorrelationGrid: lag out of range");
  return c1_[static_cast<std::size_t>(m)];
}
Vector& CorrelationGrid::c2(int m, int n) { return c2_[tri_index(m, n)]; }
const Vector& CorrelationGrid::c2(int m, int n) const { return c2_[tri_index(m, n)]; }

void CorrelationGrid::merge(const CorrelationGrid& other) {
  if (config_.dim != other.config_.dim || config_.depth != other.config_.depth ||
      config_.h != other.config_.h || config_.endpoint != other.config_.endpoint) {
    throw std::invalid_argument("CorrelationGrid::merge: grid configurations differ");
  }
  if (averaged_ || other.averaged_) {
    throw std::logic_error("CorrelationGrid::merge: cannot merge averaged grids");
  }
  for (std::size_t i = 0; i < c1_.size(); ++i) c1_[i] += other.c1_[i];
  for (std::size_t i = 0; i < c2_.size(); ++i) c2_[i] += other.c2_[i];
  samples_ += other.samples_;
}

CorrelationGrid CorrelationGrid::finalized() const {
  if (samples_ < 1) throw std::logic_error("CorrelationGrid::finalized: no samples accumulated");
  if (averaged_) return *this;
  CorrelationGrid out(config_);
  const double inv = 1.0 / static_cast<double>(samples_);
  for (std::size_t i = 0; i < c1_.size(); ++i) out.c1_[i] = c1_[i] * inv;
  for (std::size_t i = 0; i < c2_.size(); ++i) out.c2_[i] = c2_[i] * inv;
  out.samples_ = samples_;
  out.averaged_ = true;
  return out;
}

void accumulate_sample(CorrelationGrid& grid, const MapHistory& history, const Vector& x_k,
                       const Vector& w_k, const System& sys) {
  const ResponseGridConfig& cfg = grid.config();
  const int depth = cfg.depth;
  const int n = cfg.dim;
  if (grid.averaged()) throw std::logic_error("accumulate_sample: grid already averaged");
  if (history.depth() != depth || history.dim() != n) {
    throw std::invalid_argument("accumulate_sample: history/grid shape mismatch");
  }
  if (!history.full()) {
    throw std::logic_error("accumulate_sample: history must hold depth+1 increments");
  }
  const std::int64_t k = history.newest_index();
  const bool printed = cfg.endpoint == EndpointMode::printed;

  thread_local Matrix jac;
  thread_local Vector q, a, u, rho, sigma, tmp, g;
  sys.jacobian(x_k, jac);
  g.noalias() = jac * w_k;
  tmp.noalias() = jac.transpose() * w_k;
  g += tmp;
  // Project out the tangent direction: (I - w w^T) (Df + Df^T) w.
  g -= w_k * w_k.dot(g);

  sys.hessian_contract(x_k, w_k, w_k, q);  // c1 integrand at lag 0 (row vector)
  a = g;                                   // row prefix of c2, lag 0
  u = w_k;                                 // backward direction, lag 0

  for (int m = 0; m <= depth; ++m) {
    if (m > 0) {
      const Matrix& t_km = history.map_at(k - m);
      tmp.noalias() = t_km.transpose() * q;
      q.swap(tmp);
      tmp.noalias() = t_km.transpose() * a;
      a.swap(tmp);
      tmp = history.lu_at(k - m).solve(u);
      u.swap(tmp);
    }
    grid.c1(m) += q;

    sys.hessian_contract(history.state_at(k - m), a, u, rho);
    if (printed) {
      sigma.noalias() = history.map_at(k - m).transpose() * rho;
    } else {
      sigma = rho;
    }
    grid.c2(m, m) += sigma;
    for (int nn = m + 1; nn <= depth; ++nn) {
      tmp.noalias() = history.map_at(k - nn).transpose() * sigma;
      sigma.swap(tmp);
      grid.c2(m, nn) += sigma;
    }
  }
  grid.add_sample_count(1);
}

ResponseCurve response_curve(const CorrelationGrid& averaged) {
  if (!averaged.averaged()) {
    throw std::logic_error("response_curve: grid must be finalized (averaged) first");
  }
  const ResponseGridConfig& cfg = averaged.config();
  const int depth = cfg.depth;
  const double h = cfg.h;

  ResponseCurve curve;
  curve.h = h;
  curve.times.resize(static_cast<std::size_t>(depth) + 1);
  curve.r.assign(static_cast<std::size_t>(depth) + 1, Vector::Zero(cfg.dim));
  curve.r_scalar.resize(static_cast<std::size_t>(depth) + 1);

  Vector inner(cfg.dim);
  Vector total(cfg.dim);
  for (int i = 0; i <= depth; ++i) {
    curve.times[static_cast<std::size_t>(i)] = h * static_cast<double>(i);
    total.setZero();
    if (i > 0) {
      // Trapezoid in tau of [c1(tau) + trapezoid in s over [tau, t_i] of c2(tau, s)].
      for (int m = 0; m <= i; ++m) {
        inner = averaged.c1(m);
        if (m < i) {
          Vector f = Vector::Zero(cfg.dim);
          f += 0.5 * averaged.c2(m, m);
          for (int nn = m + 1; nn < i; ++nn) f += averaged.c2(m, nn);
          f += 0.5 * averaged.c2(m, i);
          inner += h * f;
        }
        const double w = (m == 0 || m == i) ? 0.5 : 1.0;
        total += (w * h) * inner;
      }
    }
    curve.r[static_cast<std::size_t>(i)] = total;
    curve.r_scalar[static_cast<std::size_t>(i)] = total.mean();
  }
  return curve;
}

ResponseTimeSelection select_response_time(const ResponseCurve& curve,
                                           const PlateauOptions& options) {
  const int count = static_cast<int>(curve.times.size());
  if (options.min_points < 2) throw std::invalid_argument("PlateauOptions: min_points must be >= 2");

  int first = 0;
  while (first < count && curve.times[static_cast<std::size_t>(first)] <= options.t_min) ++first;

  for (int length = count - first; length >= options.min_points; --length) {
    for (int a = first; a + length - 1 < count; ++a) {
      const int b = a + length - 1;
      double mean = 0.0;
      for (int i = a; i <= b; ++i) mean += curve.r_scalar[static_cast<std::size_t>(i)];
      mean /= static_cast<double>(length);
      double worst = 0.0;
      for (int i = a; i <= b; ++i) {
        worst = std::max(worst, std::abs(curve.r_scalar[static_cast<std::size_t>(i)] - mean));
      }
      if (worst < options.tol * std::abs(mean)) {
        ResponseTimeSelection sel;
        sel.window_begin = a;
        sel.window_end = b;
        sel.window_mean = mean;
        sel.index = (a + b) / 2;
        sel.t0 = curve.times[static_cast<std::size_t>(sel.index)];
        sel.r_at_t0 = curve.r_scalar[static_cast<std::size_t>(sel.index)];
        sel.method = "auto";
        return sel;
      }
    }
  }
  throw NoPlateauError("no plateau: the scalar response curve has no window of >= " +
                       std::to_string(options.min_points) + " points above t = " +
                       std::to_string(options.t_min) + " within the relative tolerance " +
                       std::to_string(options.tol));
}

ResponseTimeSelection select_response_time(const ResponseCurve& curve, double t0) {
  const double idx_real = t0 / curve.h;
  const long idx = std::lround(idx_real);
  if (std::abs(idx_real - static_cast<double>(idx)) > 1e-9) {
    throw ConfigError("response.t0", "t0 = " + std::to_string(t0) +
                                         " does not lie on the lag grid (h = " +
                                         std::to_string(curve.h) + ")");
  }
  if (idx < 0 || idx >= static_cast<long>(curve.times.size())) {
    throw ConfigError("response.t0", "t0 = " + std::to_string(t0) + " outside the grid span");
  }
  ResponseTimeSelection sel;
  sel.index = static_cast<int>(idx);
  sel.t0 = curve.times[static_cast<std::size_t>(idx)];
  sel.r_at_t0 = curve.r_scalar[static_cast<std::size_t>(idx)];
  sel.window_begin = sel.window_end = sel.index;
  sel.window_mean = sel.r_at_t0;
  sel.method = "manual";
  return sel;
}

namespace {

ResponseChunkInfo run_chunk(const System& sys, const Vector& x0, const ResponseRunOptions& opt,
                            std::uint64_t chunk_seed, std::int64_t samples,
                            CorrelationGrid& grid) {
  const double dt = opt.integrator.dt;
  const int substeps = opt.integrator.substeps;
  const int n = sys.dimension();

  const std::int64_t spin_steps = static_cast<std::int64_t>(std::llround(opt.integrator.spinup / dt));
  const std::int64_t align_blocks =
      static_cast<std::int64_t>(std::llround(opt.tangent_align / (dt * substeps)));

  Vector x = x0;
  std::int64_t global_step = 0;
  for (std::int64_t i = 0; i < spin_steps; ++i) {
    try {
      rk4_step(sys, dt, x);
    } catch (const TrajectoryDivergence&) {
      throw TrajectoryDivergence(i + 1, static_cast<double>(i + 1) * dt);
    }
    ++global_step;
  }

  Matrix v = Matrix::Constant(n, 1, 1.0 / std::sqrt(static_cast<double>(n)));
  for (std::int64_t b = 0; b < align_blocks; ++b) {
    for (int i = 0; i < substeps; ++i) {
      try {
        rk4_joint_step(sys, dt, x, v);
      } catch (const TrajectoryDivergence&) {
        throw TrajectoryDivergence(global_step + 1, static_cast<double>(global_step + 1) * dt);
      }
      ++global_step;
    }
    v.col(0).normalize();
  }
  Vector w = v.col(0).normalized();

  MapHistory history(opt.depth, n);
  double log_sum = 0.0;
  std::int64_t collected = 0;
  Vector x_anchor(n), w_anchor(n);
  for (std::int64_t k = 0; collected < samples; ++k) {
    x_anchor = x;
    w_anchor = w;
    IncrementalTangentMap map;
    try {
      map = incremental_map(sys, x_anchor, x, dt, substeps, k);
    } catch (const TrajectoryDivergence&) {
      throw TrajectoryDivergence(global_step + (k + 1) * substeps,
                                 static_cast<double>(global_step + (k + 1) * substeps) * dt);
    }
    history.push(map, x_anchor, w_anchor);
    if (history.full()) {
      accumulate_sample(grid, history, x_anchor, w_anchor, sys);
      ++collected;
    }
    Vector stretched = map.matrix * w;
    const double norm = stretched.norm();
    log_sum += std::log(norm);
    w = stretched / norm;
  }

  ResponseChunkInfo info;
  info.seed = chunk_seed;
  info.samples = samples;
  const std::int64_t pushes = static_cast<std::int64_t>(opt.depth) + samples;
  info.lambda = log_sum / (static_cast<double>(pushes) * dt * static_cast<double>(substeps));
  return info;
}

}  // namespace

ResponseRunResult run_response(const System& sys,
                               const std::function<Vector(std::uint64_t)>& initial_state,
                               const ResponseRunOptions& options) {
  if (options.total_samples < 1) {
    throw std::invalid_argument("run_response: total_samples must be >= 1");
  }
  if (options.chunk_samples < 1) {
    throw std::invalid_argument("run_response: chunk_samples must be >= 1");
  }

  ResponseGridConfig grid_cfg;
  grid_cfg.dim = sys.dimension();
  grid_cfg.depth = options.depth;
  grid_cfg.h = options.integrator.history_step();
  grid_cfg.endpoint = options.endpoint;

  const std::int64_t n_chunks =
      (options.total_samples + options.chunk_samples - 1) / options.chunk_samples;

  std::vector<std::unique_ptr<CorrelationGrid>> partial(static_cast<std::size_t>(n_chunks));
  std::vector<ResponseChunkInfo> infos(static_cast<std::size_t>(n_chunks));

  run_tasks(n_chunks, options.threads, [&](std::int64_t c) {
    const std::uint64_t chunk_seed = mix_seed(options.seed, static_cast<std::uint64_t>(c));
    const std::int64_t samples =
        std::min<std::int64_t>(options.chunk_samples,
                               options.total_samples - c * options.chunk_samples);
    auto grid = std::make_unique<CorrelationGrid>(grid_cfg);
    infos[static_cast<std::size_t>(c)] =
        run_chunk(sys, initial_state(chunk_seed), options, chunk_seed, samples, *grid);
    partial[static_cast<std::size_t>(c)] = std::move(grid);
  });

  ResponseRunResult result{CorrelationGrid(grid_cfg), 0.0, {}};
  double weighted = 0.0;
  double duration = 0.0;
  for (std::int64_t c = 0; c < n_chunks; ++c) {
    result.grid.merge(*partial[static_cast<std::size_t>(c)]);
    const ResponseChunkInfo& info = infos[static_cast<std::size_t>(c)];
    const double span = static_cast<double>(info.samples + options.depth);
    weighted += info.lambda * span;
    duration += span;
    result.chunks.push_back(info);
  }
  result.lambda = weighted / duration;
  return result;
}

}  // namespace lyapresp
