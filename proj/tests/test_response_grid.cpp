#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lyapresp/lorenz96.hpp"
#include "lyapresp/response.hpp"
#include "lyapresp/rng.hpp"

#include <Eigen/LU>

#include <vector>

using namespace lyapresp;

namespace {

// ---------------------------------------------------------------------------
// Dense brute-force reference for one accumulation sample. Everything here is
// computed with explicit matrices, dense second-derivative tensors, full
// products, and dense inverses; nothing is shared with the streaming
// implementation except the stored increments themselves.
// ---------------------------------------------------------------------------

/// H[a](b, c) = d^2 f_a / dx_b dx_c for the rescaled model; only the quadratic
/// advection term (x_{a-1} + alpha*beta)(x_{a+1} - x_{a-2}) contributes.
std::vector<Matrix> dense_hessian_tensor(const L96Params& p) {
  std::vector<Matrix> h(static_cast<std::size_t>(p.n), Matrix::Zero(p.n, p.n));
  for (int a = 0; a < p.n; ++a) {
    const int am1 = (a - 1 + p.n) % p.n;
    const int am2 = (a - 2 + p.n) % p.n;
    const int ap1 = (a + 1) % p.n;
    h[static_cast<std::size_t>(a)](am1, ap1) += 1.0;
    h[static_cast<std::size_t>(a)](ap1, am1) += 1.0;
    h[static_cast<std::size_t>(a)](am1, am2) -= 1.0;
    h[static_cast<std::size_t>(a)](am2, am1) -= 1.0;
  }
  return h;
}

Vector dense_contract(const std::vector<Matrix>& h, const Vector& w, const Vector& u) {
  const int n = static_cast<int>(w.size());
  Vector out = Vector::Zero(n);
  for (int c = 0; c < n; ++c)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        out[c] += w[a] * h[static_cast<std::size_t>(a)](b, c) * u[b];
  return out;
}

/// T_{k-1} * ... * T_{k-m} built by explicit multiplication (later factors left).
Matrix dense_forward(const MapHistory& history, std::int64_t k, int m) {
  Matrix b = Matrix::Identity(history.dim(), history.dim());
  for (std::int64_t j = k - 1; j >= k - m; --j) b = b * history.map_at(j);
  return b;
}

/// Printed product T_{k-m} * T_{k-m-1} * ... * T_{k-n} (n-m+1 factors); the
/// continuum variant drops the leading T_{k-m}.
Matrix dense_inner(const MapHistory& history, std::int64_t k, int m, int n, bool printed) {
  Matrix p = Matrix::Identity(history.dim(), history.dim());
  const std::int64_t start = printed ? k - m : k - m - 1;
  for (std::int64_t j = start; j >= k - n; --j) p = p * history.map_at(j);
  return p;
}

struct SampleFixture {
  L96Params params{6, 8.0, 0.7, 1.3};
  Lorenz96System sys{params};
  MapHistory history{4, 6};
  Vector x_k, w_k;

  SampleFixture() {
    Vector x = advance(sys, seeded_initial_state(6, 12), 0.01, 3000);
    Vector w = Vector::Ones(6).normalized();
    for (std::int64_t k = 0; k <= 4; ++k) {
      x_k = x;
      w_k = w;
      const auto map = incremental_map(sys, x_k, x, 0.01, 10, k);
      history.push(map, x_k, w_k);
      w = (map.matrix * w).normalized();
    }
  }

  /// Dense evaluation of both lag grids for the single sample at k = 4.
  void oracle(bool printed, std::vector<Vector>& c1, std::vector<std::vector<Vector>>& c2) const {
    const auto tensor = dense_hessian_tensor(params);
    const std::int64_t k = history.newest_index();

    Matrix jac(6, 6);
    sys.jacobian(x_k, jac);
    Vector g = (jac + jac.transpose()) * w_k;
    g -= w_k * w_k.dot(g);

    c1.assign(5, Vector::Zero(6));
    c2.assign(5, std::vector<Vector>(5, Vector::Zero(6)));
    for (int m = 0; m <= 4; ++m) {
      const Matrix b_m = dense_forward(history, k, m);
      c1[static_cast<std::size_t>(m)] = b_m.transpose() * dense_contract(tensor, w_k, w_k);

      const Vector a_m = b_m.transpose() * g;
      const Vector u_m = b_m.inverse() * w_k;
      const Vector rho = dense_contract(tensor, a_m, u_m);
      for (int n = m; n <= 4; ++n) {
        c2[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)] =
            dense_inner(history, k, m, n, printed).transpose() * rho;
      }
    }
  }
};

}  // namespace

TEST_CASE("one sample matches the dense brute-force evaluation (both endpoints)") {
  SampleFixture f;
  for (const EndpointMode endpoint : {EndpointMode::printed, EndpointMode::continuum}) {
    const bool printed = endpoint == EndpointMode::printed;
    CorrelationGrid grid({6, 4, 0.1, endpoint});
    accumulate_sample(grid, f.history, f.x_k, f.w_k, f.sys);
    CHECK(grid.samples() == 1);

    std::vector<Vector> c1;
    std::vector<std::vector<Vector>> c2;
    f.oracle(printed, c1, c2);

    for (int m = 0; m <= 4; ++m) {
      const Vector& want = c1[static_cast<std::size_t>(m)];
      CHECK((grid.c1(m) - want).norm() <= 1e-12 * (1.0 + want.norm()));
      for (int n = m; n <= 4; ++n) {
        const Vector& want2 = c2[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)];
        CHECK((grid.c2(m, n) - want2).norm() <= 1e-12 * (1.0 + want2.norm()));
      }
    }
  }
}

TEST_CASE("printed and continuum endpoints genuinely differ at s = tau") {
  SampleFixture f;
  CorrelationGrid printed({6, 4, 0.1, EndpointMode::printed});
  CorrelationGrid continuum({6, 4, 0.1, EndpointMode::continuum});
  accumulate_sample(printed, f.history, f.x_k, f.w_k, f.sys);
  accumulate_sample(continuum, f.history, f.x_k, f.w_k, f.sys);
  CHECK((printed.c2(2, 2) - continuum.c2(2, 2)).norm() > 0.0);
  // The c1 lags do not involve the inner product and agree exactly.
  for (int m = 0; m <= 4; ++m) CHECK((printed.c1(m) - continuum.c1(m)).norm() == 0.0);
}

TEST_CASE("lag-zero c1 term is exactly the Hessian contraction of (w, w)") {
  SampleFixture f;
  CorrelationGrid grid({6, 4, 0.1, EndpointMode::printed});
  accumulate_sample(grid, f.history, f.x_k, f.w_k, f.sys);
  Vector hc(6);
  f.sys.hessian_contract(f.x_k, f.w_k, f.w_k, hc);
  CHECK((grid.c1(0) - hc).norm() == 0.0);
}

TEST_CASE("a linear system contributes exactly zero to every lag") {
  Matrix a(6, 6);
  std::mt19937_64 gen(31);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) a(i, j) = (uniform01(gen) - 0.5) * (i == j ? 1.0 : 0.4);
  a.diagonal().array() -= 0.6;
  LinearSystem sys(a);

  Vector x = seeded_initial_state(6, 2, 0.5);
  Vector w = Vector::Ones(6).normalized();
  MapHistory history(4, 6);
  Vector x_k, w_k;
  for (std::int64_t k = 0; k <= 4; ++k) {
    x_k = x;
    w_k = w;
    const auto map = incremental_map(sys, x_k, x, 0.01, 10, k);
    history.push(map, x_k, w_k);
    w = (map.matrix * w).normalized();
  }
  CorrelationGrid grid({6, 4, 0.1, EndpointMode::printed});
  accumulate_sample(grid, history, x_k, w_k, sys);
  for (int m = 0; m <= 4; ++m) {
    CHECK(grid.c1(m).cwiseAbs().maxCoeff() == 0.0);
    for (int n = m; n <= 4; ++n) CHECK(grid.c2(m, n).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("accumulation preconditions are enforced") {
  SampleFixture f;
  CorrelationGrid wrong_depth({6, 3, 0.1, EndpointMode::printed});
  CHECK_THROWS_AS(accumulate_sample(wrong_depth, f.history, f.x_k, f.w_k, f.sys),
                  std::invalid_argument);

  MapHistory partial(4, 6);
  const auto map = incremental_map(f.sys, f.x_k, 0.01, 25, 0);
  partial.push(map, f.x_k, f.w_k);
  CorrelationGrid grid({6, 4, 0.1, EndpointMode::printed});
  CHECK_THROWS_AS(accumulate_sample(grid, partial, f.x_k, f.w_k, f.sys), std::logic_error);
}

TEST_CASE("triangular indexing rejects out-of-triangle lag pairs") {
  CorrelationGrid grid({6, 4, 0.1, EndpointMode::printed});
  CHECK_THROWS_AS(grid.c2(3, 2), std::out_of_range);
  CHECK_THROWS_AS(grid.c2(0, 5), std::out_of_range);
  CHECK_THROWS_AS(grid.c1(5), std::out_of_range);
  CHECK_NOTHROW(grid.c2(4, 4));
}

TEST_CASE("finalize averages sums and refuses empty grids") {
  SampleFixture f;
  CorrelationGrid grid({6, 4, 0.1, EndpointMode::printed});
  CHECK_THROWS_AS(grid.finalized(), std::logic_error);

  accumulate_sample(grid, f.history, f.x_k, f.w_k, f.sys);
  const CorrelationGrid avg = grid.finalized();
  CHECK(avg.averaged());
  CHECK((avg.c1(2) - grid.c1(2)).norm() == 0.0);  // one sample: average == sum

  accumulate_sample(grid, f.history, f.x_k, f.w_k, f.sys);
  const CorrelationGrid avg2 = grid.finalized();
  CHECK((avg2.c1(2) - grid.c1(2) / 2.0).norm() == 0.0);
}

TEST_CASE("merging shard grids equals accumulating the concatenated stream") {
  SampleFixture a;
  SampleFixture b;  // same fixture trajectory; distinct grid objects
  CorrelationGrid g1({6, 4, 0.1, EndpointMode::printed});
  CorrelationGrid g2({6, 4, 0.1, EndpointMode::printed});
  CorrelationGrid whole({6, 4, 0.1, EndpointMode::printed});
  accumulate_sample(g1, a.history, a.x_k, a.w_k, a.sys);
  accumulate_sample(g2, b.history, b.x_k, b.w_k, b.sys);
  accumulate_sample(whole, a.history, a.x_k, a.w_k, a.sys);
  accumulate_sample(whole, b.history, b.x_k, b.w_k, b.sys);

  g1.merge(g2);
  CHECK(g1.samples() == whole.samples());
  for (int m = 0; m <= 4; ++m)
    CHECK((g1.c1(m) - whole.c1(m)).norm() <= 1e-15 * (1.0 + whole.c1(m).norm()));

  CorrelationGrid other({6, 3, 0.25, EndpointMode::printed});
  CHECK_THROWS_AS(g1.merge(other), std::invalid_argument);
  const CorrelationGrid avg = g1.finalized();
  CorrelationGrid fresh({6, 4, 0.1, EndpointMode::printed});
  CHECK_THROWS_AS(fresh.merge(avg), std::logic_error);
}

TEST_CASE("the chunk plan is fixed and thread-count invariant") {
  Lorenz96System sys(L96Params{6, 8.0, 0.0, 1.0});
  ResponseRunOptions opt;
  opt.integrator.dt = 0.01;
  opt.integrator.substeps = 25;
  opt.integrator.spinup = 20.0;
  opt.tangent_align = 5.0;
  opt.depth = 4;
  opt.total_samples = 60;
  opt.chunk_samples = 25;
  opt.seed = 77;
  auto initial = [](std::uint64_t s) { return seeded_initial_state(6, s); };

  opt.threads = 1;
  const ResponseRunResult serial = run_response(sys, initial, opt);
  opt.threads = 3;
  const ResponseRunResult parallel = run_response(sys, initial, opt);

  REQUIRE(serial.chunks.size() == 3);
  CHECK(serial.chunks[0].samples == 25);
  CHECK(serial.chunks[1].samples == 25);
  CHECK(serial.chunks[2].samples == 10);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(serial.chunks[c].seed == mix_seed(77, c));
    CHECK(serial.chunks[c].seed == parallel.chunks[c].seed);
    CHECK(serial.chunks[c].lambda == parallel.chunks[c].lambda);
  }
  CHECK(serial.grid.samples() == 60);
  CHECK(serial.lambda == parallel.lambda);
  for (int m = 0; m <= 4; ++m) {
    CHECK((serial.grid.c1(m) - parallel.grid.c1(m)).norm() == 0.0);
    for (int n = m; n <= 4; ++n)
      CHECK((serial.grid.c2(m, n) - parallel.grid.c2(m, n)).norm() == 0.0);
  }
}
