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

/// Which product closes the inner correlation at equal times. `printed` keeps
/// the one-extra-increment endpoint of the discretized formula (an O(h)
/// difference); `continuum` drops it so the s = tau endpoint is the identity.
enum class EndpointMode { printed, continuum };

struct ResponseGridConfig {
  int dim = 20;       // state dimension N
  int depth = 60;     // number of lags M; grid spans [0, M*h]
  double h = 0.25;    // history step (lag resolution)
  EndpointMode endpoint = EndpointMode::printed;

  void validate() const {
    if (dim < 1) throw std::invalid_argument("ResponseGridConfig: dim must be >= 1");
    if (depth < 1) throw std::invalid_argument("ResponseGridConfig: depth must be >= 1");
    if (h <= 0.0) throw std::invalid_argument("ResponseGridConfig: h must be > 0");
  }
};

/// Accumulated correlation sums on the lag grid: c1 over lags tau_m = m*h and
/// c2 over the triangle tau_m <= s_n <= M*h. Entries are n-vectors (one
/// component per forcing direction). Shard grids merge by summing sums and
/// sample counts; `finalized()` converts sums to averages.
class CorrelationGrid {
 public:
  explicit CorrelationGrid(ResponseGridConfig config);

  const ResponseGridConfig& config() const { return config_; }
  std::int64_t samples() const { return samples_; }
  bool averaged() const { return averaged_; }

  Vector& c1(int m);
  const Vector& c1(int m) const;
  Vector& c2(int m, int n);
  const Vector& c2(int m, int n) const;

  void add_sample_count(std::int64_t k) { samples_ += k; }

  /// Sums and counts add; configs must match exactly. Associative and
  /// commutative up to floating-point rounding; callers fold in a fixed order
  /// for bit reproducibility.
  void merge(const CorrelationGrid& other);

  /// Averaged copy (sums / samples). Requires at least one sample.
  CorrelationGrid finalized() const;

 private:
  std::size_t tri_index(int m, int n) const;

  ResponseGridConfig config_;
  std::int64_t samples_ = 0;
  bool averaged_ = false;
  std::vector<Vector> c1_;
  std::vector<Vector> c2_;
};

/// Adds one trajectory sample to the correlation sums. The sample index is
/// k = history.newest_index(); the history must be full (increments
/// T_{k-M}..T_k) and x_k, w_k must be the anchor state and unit tangent at k.
/// All lag products are evaluated by row-vector recurrences against the stored
/// increments; backward directions use the cached LU factorisations.
void accumulate_sample(CorrelationGrid& grid, const MapHistory& history, const Vector& x_k,
                       const Vector& w_k, const System& sys);

/// Response curve r(t_i) on the lag grid, assembled from an averaged grid by
/// the iterated trapezoid rule:
///   r(t) = int_0^t c1(tau) dtau + int_0^t dtau int_tau^t c2(tau, s) ds.
/// r(0) = 0 exactly (empty quadrature). r_scalar is the mean over components.
struct ResponseCurve {
  double h = 0.0;
  std::vector<double> times;
  std::vector<Vector> r;
  std::vector<double> r_scalar;
};

ResponseCurve response_curve(const CorrelationGrid& averaged);

struct PlateauOptions {
  double tol = 0.1;     // max |r - mean| / |mean| inside the window
  int min_points = 5;   // minimum window length in grid points
  double t_min = 1.0;   // windows must lie strictly above this time
};

struct ResponseTimeSelection {
  double t0 = 0.0;
  int index = 0;            // grid index of t0
  double r_at_t0 = 0.0;     // scalar response at t0
  int window_begin = 0;     // grid indices of the detected plateau (auto only)
  int window_end = 0;
  double window_mean = 0.0;
  std::string method;       // "auto" or "manual"
};

/// Automatic selection: midpoint of the longest window (>= min_points points,
/// t > t_min) in which the scalar curve stays within tol of its window mean,
/// relative to |mean|. Throws NoPlateauError when no window qualifies.
ResponseTimeSelection select_response_time(const ResponseCurve& curve,
                                           const PlateauOptions& options);

/// Manual selection: t0 must lie on the lag grid (within 1e-9 h) and inside
/// [0, M*h]; throws ConfigError otherwise.
ResponseTimeSelection select_response_time(const ResponseCurve& curve, double t0);

/// Work plan and execution options of the correlation accumulation. The plan
/// (chunk boundaries and per-chunk seeds) is fixed by total_samples,
/// chunk_samples and seed; `threads` only parallelises execution, so merged
/// sums are byte-identical for any thread count.
struct ResponseRunOptions {
  IntegratorConfig integrator{};        // dt, substeps (h = dt*substeps), spinup
  double tangent_align = 50.0;
  int depth = 60;
  std::int64_t total_samples = 200000;
  std::int64_t chunk_samples = 25000;
  EndpointMode endpoint = EndpointMode::printed;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct ResponseChunkInfo {
  std::uint64_t seed = 0;
  std::int64_t samples = 0;
  double lambda = 0.0;      // per-chunk finite-window exponent (diagnostic)
};

struct ResponseRunResult {
  CorrelationGrid grid;     // merged sums (not yet averaged)
  double lambda = 0.0;      // duration-weighted over chunks
  std::vector<ResponseChunkInfo> chunks;
};

/// Runs the fixed chunk plan over independent trajectories of `sys` (initial
/// conditions from initial_state(chunk_seed)) and returns the merged sums.
ResponseRunResult run_response(const System& sys,
                               const std::function<Vector(std::uint64_t)>& initial_state,
                               const ResponseRunOptions& options);

}  // namespace lyapresp
