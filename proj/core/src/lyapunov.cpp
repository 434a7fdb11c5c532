#include "lyapresp/lyapunov.hpp"

#include "lyapresp/rk4.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lyapresp {

namespace {

constexpr double k_min_rcond = 1e-14;

std::int64_t steps_from_time(double span, double dt) {
  return static_cast<std::int64_t>(std::llround(span / dt));
}

}  // namespace

LyapunovResult largest_lyapunov(const System& sys, const Vector& x0, const LyapunovSettings& s) {
  if (s.dt <= 0.0 || s.window <= 0.0 || s.renorm_every < 1) {
    throw std::invalid_argument("largest_lyapunov: dt, window and renorm_every must be positive");
  }
  const int n = sys.dimension();
  if (x0.size() != n) throw std::invalid_argument("largest_lyapunov: x0 dimension mismatch");

  const std::int64_t spin_steps = steps_from_time(s.spinup, s.dt);
  const std::int64_t align_steps = steps_from_time(s.tangent_align, s.dt);
  const std::int64_t window_steps = steps_from_time(s.window, s.dt);
  const std::int64_t block_steps = std::max<std::int64_t>(1, steps_from_time(s.block_time, s.dt));

  Vector x = x0;
  Matrix v = Matrix::Constant(n, 1, 1.0 / std::sqrt(static_cast<double>(n)));

  std::int64_t global_step = 0;
  auto joint_step = [&]() {
    try {
      rk4_joint_step(sys, s.dt, x, v);
    } catch (const TrajectoryDivergence&) {
      throw TrajectoryDivergence(global_step + 1, static_cast<double>(global_step + 1) * s.dt);
    }
    ++global_step;
  };

  // State spin-up, then tangent alignment (stretch discarded), both before statistics.
  for (std::int64_t i = 0; i < spin_steps; ++i) {
    try {
      rk4_step(sys, s.dt, x);
    } catch (const TrajectoryDivergence&) {
      throw TrajectoryDivergence(i + 1, static_cast<double>(i + 1) * s.dt);
    }
    ++global_step;
  }
  for (std::int64_t i = 0; i < align_steps; ++i) {
    joint_step();
    if ((i + 1) % s.renorm_every == 0) v.col(0).normalize();
  }
  v.col(0).normalize();

  LyapunovResult result;
  result.window = static_cast<double>(window_steps) * s.dt;

  double total_log = 0.0;
  double block_log = 0.0;
  std::int64_t block_start = 0;     // measured steps at the start of the open block
  std::int64_t next_trace = s.trace_stride > 0 ? s.trace_stride : window_steps + 1;

  auto record_blocks_and_trace = [&](std::int64_t measured) {
    if (measured - block_start >= block_steps) {
      const double span = static_cast<double>(measured - block_start) * s.dt;
      result.block_lambdas.push_back(block_log / span);
      block_log = 0.0;
      block_start = measured;
    }
    if (measured >= next_trace) {
      const double t = static_cast<double>(measured) * s.dt;
      result.trace.emplace_back(t, total_log / t);
      next_trace += s.trace_stride;
    }
  };

  std::int64_t measured = 0;
  while (measured < window_steps) {
    const std::int64_t chunk =
        std::min<std::int64_t>(s.renorm_every, window_steps - measured);
    for (std::int64_t i = 0; i < chunk; ++i) joint_step();
    measured += chunk;
    const double norm = v.col(0).norm();
    const double log_stretch = std::log(norm);
    total_log += log_stretch;
    block_log += log_stretch;
    v.col(0) /= norm;
    record_blocks_and_trace(measured);
  }

  result.lambda = total_log / result.window;
  result.blocks = static_cast<std::int64_t>(result.block_lambdas.size());
  if (result.blocks >= 2) {
    double mean = 0.0;
    for (double b : result.block_lambdas) mean += b;
    mean /= static_cast<double>(result.blocks);
    double ss = 0.0;
    for (double b : result.block_lambdas) ss += (b - mean) * (b - mean);
    const double var = ss / static_cast<double>(result.blocks - 1);
    result.stderr_lambda = std::sqrt(var / static_cast<double>(result.blocks));
  }
  return result;
}

IncrementalTangentMap incremental_map(const System& sys, const Vector& x_start, Vector& x_end,
                                      double dt, int substeps, std::int64_t anchor_index) {
  if (substeps < 1) throw std::invalid_argument("incremental_map: substeps must be >= 1");
  const int n = sys.dimension();
  IncrementalTangentMap map;
  map.anchor_index = anchor_index;
  map.span = dt * static_cast<double>(substeps);
  map.matrix = Matrix::Identity(n, n);

  Vector x = x_start;
  for (int i = 0; i < substeps; ++i) {
    rk4_joint_step(sys, dt, x, map.matrix);
  }
  x_end = std::move(x);
  return map;
}

MapHistory::MapHistory(int depth, int dim) : depth_(depth), dim_(dim) {
  if (depth < 1) throw std::invalid_argument("MapHistory: depth must be >= 1");
  if (dim < 1) throw std::invalid_argument("MapHistory: dim must be >= 1");
  ring_.resize(static_cast<std::size_t>(depth_) + 1);
}

void MapHistory::push(const IncrementalTangentMap& map, const Vector& x_anchor,
                      const Vector& w_anchor) {
  if (map.matrix.rows() != dim_ || map.matrix.cols() != dim_) {
    throw std::invalid_argument("MapHistory::push: map dimension mismatch");
  }
  if (map.anchor_index < 0) {
    throw std::invalid_argument("MapHistory::push: anchor index must be non-negative");
  }
  if (size_ > 0 && map.anchor_index != newest_ + 1) {
    throw std::invalid_argument("MapHistory::push: anchor indices must be contiguous (expected " +
                                std::to_string(newest_ + 1) + ", got " +
                                std::to_string(map.anchor_index) + ")");
  }

  Entry& e = ring_[static_cast<std::size_t>(map.anchor_index % (depth_ + 1))];
  e.t = map.matrix;
  e.lu.compute(e.t);
  // Eigen's PartialPivLU::rcond() estimate returns 1 for exactly singular
  // factorizations (NaNs from the zero pivots defeat the norm estimator), so
  // gauge degeneracy from the pivot magnitudes instead.
  const Vector pivots = e.lu.matrixLU().diagonal().cwiseAbs();
  const double pivot_max = pivots.maxCoeff();
  e.rcond = pivot_max > 0.0 ? pivots.minCoeff() / pivot_max : 0.0;
  e.x = x_anchor;
  e.w = w_anchor;
  e.k = map.anchor_index;

  newest_ = map.anchor_index;
  if (size_ < depth_ + 1) ++size_;
}

const MapHistory::Entry& MapHistory::at(std::int64_t k) const {
  if (size_ == 0 || k > newest_ || k < oldest_index()) {
    throw std::out_of_range("MapHistory: increment " + std::to_string(k) +
                            " is not in the stored window [" + std::to_string(oldest_index()) +
                            ", " + std::to_string(newest_) + "]");
  }
  return ring_[static_cast<std::size_t>(k % (depth_ + 1))];
}

const Matrix& MapHistory::map_at(std::int64_t k) const { return at(k).t; }

const Eigen::PartialPivLU<Matrix>& MapHistory::lu_at(std::int64_t k) const {
  const Entry& e = at(k);
  if (!(e.rcond > k_min_rcond)) throw DegenerateMapError(e.rcond);
  return e.lu;
}

const Vector& MapHistory::state_at(std::int64_t k) const { return at(k).x; }
const Vector& MapHistory::tangent_at(std::int64_t k) const { return at(k).w; }

Matrix forward_product(const MapHistory& history, std::int64_t k, int m) {
  if (m < 0) throw std::invalid_argument("forward_product: m must be >= 0");
  Matrix b = Matrix::Identity(history.dim(), history.dim());
  for (int j = 1; j <= m; ++j) {
    b = b * history.map_at(k - j);
  }
  return b;
}

Vector backward_direction(const MapHistory& history, std::int64_t k, int m, const Vector& w) {
  if (m < 0) throw std::invalid_argument("backward_direction: m must be >= 0");
  Vector u = w;
  for (int j = 1; j <= m; ++j) {
    u = history.lu_at(k - j).solve(u);
  }
  return u;
}

}  // namespace lyapresp
