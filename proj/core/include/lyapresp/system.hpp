#pragma once

#include "lyapresp/types.hpp"

namespace lyapresp {

/// Autonomous ODE dx/dt = f(x) together with the first two derivatives of f.
///
/// Implementations must be stateless with respect to evaluation (const methods
/// shareable across concurrent workers). The second derivative is exposed only
/// through its contraction with two vectors, which keeps the common sparse
/// case O(n) instead of materialising an n^3 tensor.
class System {
 public:
  virtual ~System() = default;

  virtual int dimension() const = 0;

  /// dxdt = f(x). `dxdt` is resized by the caller to dimension().
  virtual void rhs(const Vector& x, Vector& dxdt) const = 0;

  /// jac = Df(x), dense n-by-n.
  virtual void jacobian(const Vector& x, Matrix& jac) const = 0;

  /// out = Df(x) * v for an n-by-m block v. The default materialises the dense
  /// Jacobian; systems with banded structure should override with a stencil.
  virtual void apply_jacobian(const Vector& x, const Matrix& v, Matrix& out) const;

  /// out_c = sum_{a,b} w_a * d2f_a/dx_b dx_c * u_b  (a row of the second
  /// derivative contracted with w on the output slot and u on the first
  /// input slot). Linear systems return zero.
  virtual void hessian_contract(const Vector& x, const Vector& w, const Vector& u,
                                Vector& out) const = 0;
};

/// f(x) = A x. Used as the exactly-solvable reference (matrix exponential) and
/// as the null case of the response pipeline: the second derivative vanishes,
/// so every correlation sum is identically zero.
class LinearSystem final : public System {
 public:
  explicit LinearSystem(Matrix a) : a_(std::move(a)) {
    if (a_.rows() != a_.cols() || a_.rows() < 1) {
      throw std::invalid_argument("LinearSystem requires a square matrix");
    }
  }

  int dimension() const override { return static_cast<int>(a_.rows()); }
  void rhs(const Vector& x, Vector& dxdt) const override { dxdt.noalias() = a_ * x; }
  void jacobian(const Vector&, Matrix& jac) const override { jac = a_; }
  void apply_jacobian(const Vector&, const Matrix& v, Matrix& out) const override {
    out.noalias() = a_ * v;
  }
  void hessian_contract(const Vector&, const Vector&, const Vector&, Vector& out) const override {
    out.setZero(a_.rows());
  }

  const Matrix& matrix() const { return a_; }

 private:
  Matrix a_;
};

/// Decorator adding a constant forcing vector: f_p(x) = f(x) + p.
/// Derivatives are unchanged. Used by perturbation sweeps.
class AdditiveForcing final : public System {
 public:
  AdditiveForcing(const System& base, Vector forcing) : base_(base), forcing_(std::move(forcing)) {
    if (forcing_.size() != base_.dimension()) {
      throw std::invalid_argument("forcing dimension mismatch");
    }
  }

  int dimension() const override { return base_.dimension(); }
  void rhs(const Vector& x, Vector& dxdt) const override {
    base_.rhs(x, dxdt);
    dxdt += forcing_;
  }
  void jacobian(const Vector& x, Matrix& jac) const override { base_.jacobian(x, jac); }
  void apply_jacobian(const Vector& x, const Matrix& v, Matrix& out) const override {
    base_.apply_jacobian(x, v, out);
  }
  void hessian_contract(const Vector& x, const Vector& w, const Vector& u,
                        Vector& out) const override {
    base_.hessian_contract(x, w, u, out);
  }

 private:
  const System& base_;
  Vector forcing_;
};

}  // namespace lyapresp
