#pragma once

#include <optional>
#include <span>

#include <Eigen/Dense>

#include "emkrylov/discretization.hpp"
#include "emkrylov/ext_rakrylov.hpp"
#include "emkrylov/linalg.hpp"
#include "emkrylov/trajectory.hpp"

namespace emkrylov {

/// Shift-and-invert Arnoldi decomposition
///   (A - shift I)^{-1} V = V H + h_next v_next e_k^T.
struct KrylovBasis {
  Eigen::MatrixXd V;  // n x k
  Eigen::MatrixXd H;  // k x k upper Hessenberg
  double beta = 0.0;  // norm of the seed
  double h_next = 0.0;
  std::optional<Eigen::VectorXd> v_next;  // absent on happy breakdown
  double shift = 0.0;
  int order_requested = 0;

  Eigen::Index order() const noexcept { return V.cols(); }
};

/// Builds the basis from one LU of (A - shift I). Throws DegenerateInputError
/// for a zero seed.
KrylovBasis rational_krylov_basis(const SparseMatrix& A, const Eigen::VectorXd& v, int q,
                                  double shift, const ArnoldiOptions& options = {});

/// Same, reusing an existing shift-invert operator.
KrylovBasis rational_krylov_basis(const ShiftInvert& op, const Eigen::VectorXd& v, int q,
                                  const ArnoldiOptions& options = {});

/// H^{-1} + shift I. Throws NumericalError (with the condition estimate) when
/// H is numerically singular.
Eigen::MatrixXd mapped_operator(const KrylovBasis& basis);

struct Residual {
  double abs = 0.0;  // Pa
  double rel = 0.0;
};

/// beta |h_next z_k(t)| with z(t) = e^{t H_hat} e_1; zero on happy breakdown.
Residual residual_estimate(const KrylovBasis& basis, const Eigen::MatrixXd& H_hat, double t,
                           double state_norm);

/// Solution of A f = b. On a singular nucleation system the deflated solve is
/// used and ConservationError is raised unless b lies in range(A).
Eigen::VectorXd steady_offset(const LtiSystem& sys);

/// Closed-form evaluator for x(t) = e^{tA}(x0 + f) - f through a rational
/// Krylov basis of the seed x0 + f.
class EiPropagator {
 public:
  EiPropagator(const LtiSystem& sys, int q, double shift, const ArnoldiOptions& options = {});

  /// z(t) = e^{t H_hat} e_1 (empty when the seed is zero).
  Eigen::VectorXd reduced(double t) const;
  /// Full state; exactly x0 at t = 0.
  Eigen::VectorXd state(double t) const;
  /// State restricted to `rows`.
  Eigen::VectorXd rows(double t, std::span<const int> rows) const;
  /// ||x(t)|| from the reduced coordinates in O(k).
  double state_norm(const Eigen::VectorXd& z) const;
  Residual residual(double t) const;
  /// Residual from z = reduced(t) without re-evaluating the exponential.
  Residual residual_at(const Eigen::VectorXd& z) const;

  const KrylovBasis& basis() const noexcept { return basis_; }
  const Eigen::MatrixXd& mapped() const noexcept { return H_hat_; }
  const Eigen::VectorXd& offset() const noexcept { return f_; }
  const Eigen::VectorXd& x0() const noexcept { return x0_; }
  bool trivial() const noexcept { return basis_.order() == 0; }

 private:
  Eigen::VectorXd x0_;
  Eigen::VectorXd f_;
  KrylovBasis basis_;
  Eigen::MatrixXd H_hat_;
  Eigen::VectorXd Vt_f_;  // V^T f
  double f_norm2_ = 0.0;
};

struct EiSolution {
  StressTrajectory trajectory;  // residual_rel filled
  Eigen::VectorXd f;
  Eigen::MatrixXd H_hat;
  KrylovBasis basis;
};

/// Exponential integration over `grid` for a constant input.
EiSolution ei_transient(const LtiSystem& sys, std::span<const double> grid, int q,
                        double shift, std::span<const int> rows = {});

}  // namespace emkrylov
