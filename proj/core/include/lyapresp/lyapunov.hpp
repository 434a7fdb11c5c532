#pragma once

#include "lyapresp/system.hpp"
#include "lyapresp/types.hpp"

#include <Eigen/LU>

#include <cstdint>
#include <utility>
#include <vector>

namespace lyapresp {

struct LyapunovSettings {
  double dt = 0.01;
  /// State-only spin-up (time units), discarded.
  double spinup = 1000.0;
  /// Joint spin-up of (x, v) after state spin-up; aligns the tangent vector
  /// with the leading direction, stretch factors discarded.
  double tangent_align = 50.0;
  /// Averaging window (time units).
  double window = 5e4;
  /// Renormalise the tangent vector every this many RK4 steps. The default
  /// matches one history step (h = 0.25 at dt = 0.01), so renormalisation and
  /// response sampling share the same grid.
  int renorm_every = 25;
  /// Block length (time units) for the standard error of the mean, from
  /// non-overlapping block averages of the log-stretch increments.
  double block_time = 1000.0;
  /// Record the running estimate every this many steps.
  std::int64_t trace_stride = 1000;
};

struct LyapunovResult {
  double lambda = 0.0;
  /// Standard error from non-overlapping block averages (0 if fewer than 2 blocks).
  double stderr_lambda = 0.0;
  double window = 0.0;
  std::int64_t blocks = 0;
  /// Running estimate (t, log_sum(t)/t), recorded every trace_stride steps.
  std::vector<std::pair<double, double>> trace;
  /// Per-block finite-window estimates (for combining ensembles).
  std::vector<double> block_lambdas;
};

/// Largest Lyapunov exponent by joint RK4 propagation of (x, v) with periodic
/// renormalisation of v to unit norm: lambda = sum(log stretch) / window.
/// The estimate is invariant (to rounding) under the renormalisation cadence.
LyapunovResult largest_lyapunov(const System& sys, const Vector& x0, const LyapunovSettings& s);

/// Tangent map of the h-flow: d(phi^h)/dx at the anchor state x_k, where
/// h = dt * substeps. Computed by fused RK4 propagation of the identity block
/// alongside the state.
struct IncrementalTangentMap {
  Matrix matrix;
  std::int64_t anchor_index = 0;
  double span = 0.0;
};

/// Computes the increment anchored at x_start; writes the advanced state to
/// x_end (may alias x_start).
IncrementalTangentMap incremental_map(const System& sys, const Vector& x_start, Vector& x_end,
                                      double dt, int substeps, std::int64_t anchor_index = 0);

inline IncrementalTangentMap incremental_map(const System& sys, const Vector& x_start, double dt,
                                             int substeps, std::int64_t anchor_index = 0) {
  Vector scratch = x_start;
  return incremental_map(sys, x_start, scratch, dt, substeps, anchor_index);
}

/// Ring buffer of the most recent depth+1 incremental maps T_{k-M}..T_k with
/// their LU factorisations and matching anchor states/tangents x_j, w_j.
/// Entries must be pushed with contiguous anchor indices. One slot beyond the
/// correlation depth M is held because the discretized correlation at lag zero
/// references the increment anchored at the sample index itself.
class MapHistory {
 public:
  MapHistory(int depth, int dim);

  int depth() const { return depth_; }
  int dim() const { return dim_; }
  int size() const { return size_; }
  bool full() const { return size_ == depth_ + 1; }
  std::int64_t newest_index() const { return newest_; }
  std::int64_t oldest_index() const { return newest_ - size_ + 1; }

  void push(const IncrementalTangentMap& map, const Vector& x_anchor, const Vector& w_anchor);

  const Matrix& map_at(std::int64_t k) const;
  const Eigen::PartialPivLU<Matrix>& lu_at(std::int64_t k) const;
  const Vector& state_at(std::int64_t k) const;
  const Vector& tangent_at(std::int64_t k) const;

 private:
  struct Entry {
    Matrix t;
    Eigen::PartialPivLU<Matrix> lu;
    double rcond = 1.0;
    Vector x;
    Vector w;
    std::int64_t k = -1;
  };

  const Entry& at(std::int64_t k) const;

  int depth_;
  int dim_;
  int size_ = 0;
  std::int64_t newest_ = -1;
  std::vector<Entry> ring_;
};

/// T_{k-1} * T_{k-2} * ... * T_{k-m} (later increments multiply on the left);
/// m = 0 returns the identity. Maps a tangent vector at index k-m forward to k.
Matrix forward_product(const MapHistory& history, std::int64_t k, int m);

/// u_m = T_{k-m}^{-1} * ... * T_{k-1}^{-1} * w, i.e. w pulled back m history
/// steps, computed by successive LU solves (never explicit inverses).
Vector backward_direction(const MapHistory& history, std::int64_t k, int m, const Vector& w);

}  // namespace lyapresp
