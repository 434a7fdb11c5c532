#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lyapresp/lorenz96.hpp"
#include "lyapresp/rk4.hpp"
#include "lyapresp/system.hpp"

#include <cmath>
#include <vector>

using namespace lyapresp;

namespace {

/// Planar pendulum (theta, omega): exercises the default dense apply_jacobian
/// and a state-dependent second derivative.
class PendulumSystem final : public System {
 public:
  int dimension() const override { return 2; }
  void rhs(const Vector& x, Vector& dxdt) const override {
    dxdt[0] = x[1];
    dxdt[1] = -std::sin(x[0]);
  }
  void jacobian(const Vector& x, Matrix& jac) const override {
    jac.setZero(2, 2);
    jac(0, 1) = 1.0;
    jac(1, 0) = -std::cos(x[0]);
  }
  void hessian_contract(const Vector& x, const Vector& w, const Vector& u,
                        Vector& out) const override {
    out.setZero(2);
    out[0] = w[1] * std::sin(x[0]) * u[0];
  }
};

/// dx/dt = x^2: finite-time blow-up at t = 1/x0.
class BlowupSystem final : public System {
 public:
  int dimension() const override { return 1; }
  void rhs(const Vector& x, Vector& dxdt) const override { dxdt[0] = x[0] * x[0]; }
  void jacobian(const Vector& x, Matrix& jac) const override {
    jac.resize(1, 1);
    jac(0, 0) = 2.0 * x[0];
  }
  void hessian_contract(const Vector&, const Vector& w, const Vector& u,
                        Vector& out) const override {
    out.resize(1);
    out[0] = 2.0 * w[0] * u[0];
  }
};

Matrix rotation_generator() {
  Matrix a(2, 2);
  a << 0.0, -1.0, 1.0, 0.0;
  return a;
}

Matrix rotation(double angle) {
  Matrix r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

}  // namespace

TEST_CASE("scalar exponential decay, one step, frozen value") {
  LinearSystem sys(Matrix::Constant(1, 1, -1.0));
  Vector x = Vector::Constant(1, 1.0);
  rk4_step(sys, 0.1, x);
  // 1 - h + h^2/2 - h^3/6 + h^4/24 at h = 0.1
  CHECK(x[0] == doctest::Approx(0.9048375).epsilon(1e-15));
}

TEST_CASE("rotation system: one coarse step lands in the order-4 error band") {
  LinearSystem sys(rotation_generator());
  Vector x(2);
  x << 1.0, 0.0;
  Matrix v = Matrix::Identity(2, 2);
  rk4_joint_step(sys, 0.25, x, v);

  const Matrix exact = rotation(0.25);
  const double tangent_err = (v - exact).norm();
  const double state_err = (x - exact.col(0)).norm();
  // One RK4 step is the degree-4 Taylor polynomial of exp(Ah); for +/-i
  // eigenvalues the truncation is |e^{ih} - P4(ih)| ~ h^5/5! = 8.14e-6, and
  // the real 2x2 embedding doubles its Frobenius square: sqrt(2)*8.14e-6 =
  // 1.15e-5. The band guards against both a broken stage sequence and a
  // silently different order.
  CHECK(tangent_err < 1.25e-5);
  CHECK(tangent_err > 1.05e-5);
  CHECK(state_err < 1e-5);
}

TEST_CASE("rotation system: 25 fine steps reach 1e-8 of the exact flow") {
  LinearSystem sys(rotation_generator());
  Vector x(2);
  x << 1.0, 0.0;
  Matrix v = Matrix::Identity(2, 2);
  for (int i = 0; i < 25; ++i) rk4_joint_step(sys, 0.01, x, v);

  const Matrix exact = rotation(0.25);
  CHECK((v - exact).norm() < 1e-8);
  CHECK((x - exact.col(0)).norm() < 1e-8);
}

TEST_CASE("halving dt shrinks the error ~16x (4th order)") {
  Lorenz96System sys(L96Params{6, 8.0, 0.0, 1.0});
  const Vector x0 = advance(sys, seeded_initial_state(6, 11, 0.5), 0.01, 2000);

  auto integrate = [&](double dt, int steps) {
    Vector x = x0;
    for (int i = 0; i < steps; ++i) rk4_step(sys, dt, x);
    return x;
  };
  const Vector reference = integrate(0.2 / 256.0, 256);
  const double err_coarse = (integrate(0.1, 2) - reference).norm();
  const double err_fine = (integrate(0.05, 4) - reference).norm();
  const double ratio = err_coarse / err_fine;
  CHECK(ratio > 14.0);
  CHECK(ratio < 18.0);
}

TEST_CASE("joint step propagates tangent columns linearly") {
  Lorenz96System sys(L96Params{8, 8.0, 0.0, 1.0});
  const Vector x0 = advance(sys, seeded_initial_state(8, 3, 0.5), 0.01, 1000);
  Vector u = seeded_initial_state(8, 5, 1.0);
  Vector w = seeded_initial_state(8, 6, 1.0);
  const double a = 1.75, b = -0.4;

  Matrix v(8, 3);
  v.col(0) = u;
  v.col(1) = w;
  v.col(2) = a * u + b * w;
  Vector x = x0;
  rk4_joint_step(sys, 0.01, x, v);

  CHECK((v.col(2) - (a * v.col(0) + b * v.col(1))).norm() < 1e-13 * v.col(2).norm());

  // And the tangent block never feeds back into the state.
  Vector x_alone = x0;
  rk4_step(sys, 0.01, x_alone);
  CHECK((x - x_alone).norm() == 0.0);
}

TEST_CASE("advance invokes the observer with 1-based step indices") {
  Lorenz96System sys(L96Params{6, 8.0, 0.0, 1.0});
  const Vector x0 = seeded_initial_state(6, 1);
  std::vector<std::int64_t> indices;
  Vector last;
  const Vector x_end = advance(sys, x0, 0.01, 5, [&](std::int64_t i, const Vector& x) {
    indices.push_back(i);
    last = x;
  });
  CHECK(indices == std::vector<std::int64_t>{1, 2, 3, 4, 5});
  CHECK((last - x_end).norm() == 0.0);

  Vector manual = x0;
  for (int i = 0; i < 5; ++i) rk4_step(sys, 0.01, manual);
  CHECK((manual - x_end).norm() == 0.0);
}

TEST_CASE("divergence carries the offending step index and time") {
  BlowupSystem sys;
  Vector x = Vector::Constant(1, 10.0);  // blow-up at t = 0.1
  try {
    advance(sys, x, 0.05, 100);
    FAIL("expected TrajectoryDivergence");
  } catch (const TrajectoryDivergence& e) {
    CHECK(e.step_index() >= 1);
    CHECK(e.step_index() <= 5);
    CHECK(e.time() == doctest::Approx(0.05 * static_cast<double>(e.step_index())));
  }
}

TEST_CASE("pendulum: default apply_jacobian matches the dense Jacobian") {
  PendulumSystem sys;
  Vector x(2);
  x << 0.9, -0.3;
  Matrix v(2, 2);
  v << 0.2, -1.0, 0.7, 0.4;
  Matrix out(2, 2), jac(2, 2);
  sys.apply_jacobian(x, v, out);
  sys.jacobian(x, jac);
  CHECK((out - jac * v).norm() == 0.0);
}

TEST_CASE("pendulum: Hessian contraction converges at second order in epsilon") {
  PendulumSystem sys;
  Vector x(2), w(2), u(2);
  x << 1.1, 0.4;
  w << 0.6, -0.8;
  u << -0.5, 0.9;

  Vector hc(2);
  sys.hessian_contract(x, w, u, hc);

  auto fd_error = [&](double eps) {
    Matrix jp(2, 2), jm(2, 2);
    sys.jacobian(x + eps * u, jp);
    sys.jacobian(x - eps * u, jm);
    const Vector fd = (jp.transpose() * w - jm.transpose() * w) / (2.0 * eps);
    return (fd - hc).norm();
  };
  const double e1 = fd_error(1e-3);
  const double e2 = fd_error(5e-4);
  CHECK(e1 < 1e-6);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.05));
}
