#pragma once

#include <span>

#include <Eigen/Dense>

#include "emkrylov/discretization.hpp"
#include "emkrylov/trajectory.hpp"

namespace emkrylov {

struct ArnoldiOptions {
  // A new direction is dropped when orthogonalization leaves less than this
  // fraction of its original norm.
  double breakdown_tol = 1e-12;
  // A second Gram-Schmidt pass runs when the first leaves a component along
  // the basis larger than this fraction of the remaining norm.
  double reorth_tol = 1e-12;
};

/// Projection of an LtiSystem onto an orthonormal rational Krylov basis.
struct ReducedModel {
  Eigen::MatrixXd V;    // n x k, orthonormal columns
  Eigen::MatrixXd A_h;  // V^T A V
  Eigen::MatrixXd B_h;  // V^T B
  Eigen::VectorXd b_h;  // V^T B u
  Eigen::VectorXd x0_h; // V^T x0
  Eigen::MatrixXd H;    // Gram-Schmidt coefficients, diagnostics only
  double shift = 0.0;
  int order_requested = 0;
  int order_achieved = 0;
};

/// Extended rational Arnoldi reduction around `shift` (1/s). Seeds the basis
/// with -(A - shift I)^{-1} B u, then (A - shift I)^{-1}(v1 - x0) (or
/// (A - shift I)^{-1} v1 when shift is 0), then repeated shift-inverts.
/// shift = 0 on a singular nucleation system uses the deflated inverse.
///
/// Throws DegenerateInputError when B u is zero.
ReducedModel extended_rational_arnoldi(const LtiSystem& sys, double shift, int q,
                                       const Eigen::VectorXd& x0,
                                       const ArnoldiOptions& options = {});

/// Backward Euler on the reduced system, recovered as x = V x_hat. Each grid
/// interval is split into `substeps` equal implicit steps.
StressTrajectory reduced_transient(const ReducedModel& model, const LtiSystem& sys,
                                   std::span<const double> grid,
                                   std::span<const int> rows = {}, int substeps = 1);

/// Reduced backward Euler over a fixed interval: the affine map of `substeps`
/// implicit steps of size h / substeps, folded into one (k+1)x(k+1) matrix so
/// each interval costs O(k^2) regardless of the substep count.
class ReducedStepper {
 public:
  ReducedStepper(const ReducedModel& model, double h, int substeps);

  /// State after one full interval.
  Eigen::VectorXd advance(const Eigen::VectorXd& x) const;
  /// State after a single substep.
  Eigen::VectorXd substep(const Eigen::VectorXd& x) const;
  /// Columns x, then the state after each of the interval's substeps.
  Eigen::MatrixXd substep_path(const Eigen::VectorXd& x) const;

  double interval() const noexcept { return h_; }
  int substeps() const noexcept { return substeps_; }

 private:
  double h_;
  int substeps_;
  Eigen::MatrixXd single_;  // augmented one-substep map
  Eigen::MatrixXd folded_;  // single_^substeps
};

}  // namespace emkrylov
