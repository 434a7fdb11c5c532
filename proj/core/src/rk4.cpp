#include "lyapresp/rk4.hpp"

namespace lyapresp {

namespace {

struct StepScratch {
  Vector k1, k2, k3, k4, xt;
  Matrix j1, j2, j3, j4, vt;

  void resize_state(Eigen::Index n) {
    if (k1.size() != n) {
      k1.resize(n);
      k2.resize(n);
      k3.resize(n);
      k4.resize(n);
      xt.resize(n);
    }
  }
  void resize_tangent(Eigen::Index n, Eigen::Index m) {
    if (j1.rows() != n || j1.cols() != m) {
      j1.resize(n, m);
      j2.resize(n, m);
      j3.resize(n, m);
      j4.resize(n, m);
      vt.resize(n, m);
    }
  }
};

StepScratch& scratch() {
  thread_local StepScratch s;
  return s;
}

}  // namespace

void System::apply_jacobian(const Vector& x, const Matrix& v, Matrix& out) const {
  thread_local Matrix jac;
  jacobian(x, jac);
  out.noalias() = jac * v;
}

void rk4_step(const System& sys, double dt, Vector& x) {
  StepScratch& s = scratch();
  const Eigen::Index n = x.size();
  s.resize_state(n);

  sys.rhs(x, s.k1);
  s.xt = x + (0.5 * dt) * s.k1;
  sys.rhs(s.xt, s.k2);
  s.xt = x + (0.5 * dt) * s.k2;
  sys.rhs(s.xt, s.k3);
  s.xt = x + dt * s.k3;
  sys.rhs(s.xt, s.k4);

  x += (dt / 6.0) * (s.k1 + 2.0 * s.k2 + 2.0 * s.k3 + s.k4);
  if (!x.allFinite()) {
    throw TrajectoryDivergence(-1, std::nan(""));
  }
}

void rk4_joint_step(const System& sys, double dt, Vector& x, Matrix& v) {
  StepScratch& s = scratch();
  const Eigen::Index n = x.size();
  s.resize_state(n);
  s.resize_tangent(n, v.cols());

  sys.rhs(x, s.k1);
  sys.apply_jacobian(x, v, s.j1);

  s.xt = x + (0.5 * dt) * s.k1;
  s.vt = v + (0.5 * dt) * s.j1;
  sys.rhs(s.xt, s.k2);
  sys.apply_jacobian(s.xt, s.vt, s.j2);

  s.xt = x + (0.5 * dt) * s.k2;
  s.vt = v + (0.5 * dt) * s.j2;
  sys.rhs(s.xt, s.k3);
  sys.apply_jacobian(s.xt, s.vt, s.j3);

  s.xt = x + dt * s.k3;
  s.vt = v + dt * s.j3;
  sys.rhs(s.xt, s.k4);
  sys.apply_jacobian(s.xt, s.vt, s.j4);

  x += (dt / 6.0) * (s.k1 + 2.0 * s.k2 + 2.0 * s.k3 + s.k4);
  v += (dt / 6.0) * (s.j1 + 2.0 * s.j2 + 2.0 * s.j3 + s.j4);
  if (!x.allFinite() || !v.allFinite()) {
    throw TrajectoryDivergence(-1, std::nan(""));
  }
}

}  // namespace lyapresp
