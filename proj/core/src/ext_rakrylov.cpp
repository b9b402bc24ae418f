#include "emkrylov/ext_rakrylov.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "emkrylov/error.hpp"
#include "emkrylov/linalg.hpp"

namespace emkrylov {

namespace {

// Modified Gram-Schmidt of w against the first `k` columns of V, with one
// extra pass when the first leaves too much behind. Coefficients are
// accumulated into `h` (size >= k).
void orthogonalize(const Eigen::MatrixXd& V, Eigen::Index k, Eigen::VectorXd& w,
                   Eigen::Ref<Eigen::VectorXd> h, double reorth_tol) {
  for (Eigen::Index i = 0; i < k; ++i) {
    const double c = V.col(i).dot(w);
    h[i] += c;
    w -= c * V.col(i);
  }
  const double remaining = w.norm();
  double leak = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) leak = std::max(leak, std::abs(V.col(i).dot(w)));
  if (leak > reorth_tol * remaining) {
    for (Eigen::Index i = 0; i < k; ++i) {
      const double c = V.col(i).dot(w);
      h[i] += c;
      w -= c * V.col(i);
    }
  }
}

Eigen::VectorXd recover(const ReducedModel& model, const Eigen::VectorXd& xh,
                        std::span<const int> rows) {
  if (rows.empty()) return model.V * xh;
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = model.V.row(rows[i]).dot(xh);
  }
  return out;
}

}  // namespace

ReducedModel extended_rational_arnoldi(const LtiSystem& sys, double shift, int q,
                                       const Eigen::VectorXd& x0,
                                       const ArnoldiOptions& options) {
  const Eigen::Index n = sys.size();
  if (q < 2) throw ParameterError("reduction order q must be >= 2");
  if (!(shift >= 0.0) || !std::isfinite(shift)) {
    throw ParameterError("shift must be finite and nonnegative");
  }
  if (x0.size() != n) throw ParameterError("x0 length does not match the system");

  const Eigen::VectorXd b = sys.b();
  if (b.norm() == 0.0) throw DegenerateInputError("B u is zero: nothing drives the system");

  const bool deflate = shift == 0.0 && sys.singular;
  const ShiftInvert op(sys.A, shift, deflate ? &sys.control_volume : nullptr, sys.plan);

  const Eigen::Index max_order = std::min<Eigen::Index>(q, n);
  Eigen::MatrixXd V(n, max_order);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(max_order + 1, max_order);

  Eigen::VectorXd r = -op.apply(b);
  const double r_norm = r.norm();
  if (!(r_norm > 0.0)) throw DegenerateInputError("shift-inverted input vector is zero");
  V.col(0) = r / r_norm;
  Eigen::Index k = 1;

  for (Eigen::Index j = 1; j < max_order; ++j) {
    Eigen::VectorXd w;
    if (j == 1) {
      w = shift != 0.0 ? op.apply(V.col(0) - x0) : op.apply(V.col(0));
    } else {
      w = op.apply(V.col(j - 1));
    }
    const double before = w.norm();
    orthogonalize(V, k, w, H.col(j - 1).head(k), options.reorth_tol);
    const double after = w.norm();
    H(j, j - 1) = after;
    if (!(after > options.breakdown_tol * before)) break;
    V.col(j) = w / after;
    k = j + 1;
  }

  ReducedModel model;
  model.V = V.leftCols(k);
  model.H = H.topLeftCorner(k + 1, std::max<Eigen::Index>(k, 1));
  const Eigen::MatrixXd AV = sys.A * model.V;
  model.A_h = model.V.transpose() * AV;
  model.B_h = (Eigen::MatrixXd(sys.B.transpose() * model.V)).transpose();
  model.b_h = model.V.transpose() * b;
  model.x0_h = model.V.transpose() * x0;
  model.shift = shift;
  model.order_requested = q;
  model.order_achieved = static_cast<int>(k);
  return model;
}

ReducedStepper::ReducedStepper(const ReducedModel& model, double h, int substeps)
    : h_(h), substeps_(substeps) {
  if (!(h > 0.0) || substeps < 1) throw ParameterError("stepper needs h > 0 and substeps >= 1");
  const Eigen::Index k = model.A_h.rows();
  const double hs = h / substeps;
  const Eigen::MatrixXd implicit = Eigen::MatrixXd::Identity(k, k) - hs * model.A_h;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(implicit);
  single_ = Eigen::MatrixXd::Zero(k + 1, k + 1);
  single_.topLeftCorner(k, k) = lu.solve(Eigen::MatrixXd::Identity(k, k));
  single_.topRightCorner(k, 1) = lu.solve(hs * model.b_h);
  single_(k, k) = 1.0;
  if (!single_.allFinite()) throw NumericalError("reduced implicit matrix is singular");

  // Binary powering of the augmented map.
  folded_ = Eigen::MatrixXd::Identity(k + 1, k + 1);
  Eigen::MatrixXd base = single_;
  for (int e = substeps; e > 0; e >>= 1) {
    if (e & 1) folded_ = folded_ * base;
    if (e > 1) base = base * base;
  }
}

Eigen::VectorXd ReducedStepper::advance(const Eigen::VectorXd& x) const {
  const Eigen::Index k = x.size();
  return folded_.topLeftCorner(k, k) * x + folded_.topRightCorner(k, 1);
}

Eigen::VectorXd ReducedStepper::substep(const Eigen::VectorXd& x) const {
  const Eigen::Index k = x.size();
  return single_.topLeftCorner(k, k) * x + single_.topRightCorner(k, 1);
}

Eigen::MatrixXd ReducedStepper::substep_path(const Eigen::VectorXd& x) const {
  const Eigen::Index k = x.size();
  const auto M = single_.topLeftCorner(k, k);
  const auto g = single_.topRightCorner(k, 1);
  Eigen::MatrixXd X(k, substeps_ + 1);
  X.col(0) = x;
  for (int s = 1; s <= substeps_; ++s) {
    X.col(s).noalias() = M * X.col(s - 1);
    X.col(s) += g;
  }
  return X;
}

StressTrajectory reduced_transient(const ReducedModel& model, const LtiSystem& sys,
                                   std::span<const double> grid, std::span<const int> rows,
                                   int substeps) {
  validate_time_grid(grid);
  if (model.V.rows() != sys.size()) throw ParameterError("reduced model does not match the system");
  StressTrajectory traj;
  traj.solver_tag = SolverTag::ext_rakrylov;
  traj.rows.assign(rows.begin(), rows.end());
  traj.times.assign(grid.begin(), grid.end());
  traj.states.reserve(grid.size());

  Eigen::VectorXd xh = model.x0_h;
  traj.states.push_back(recover(model, xh, rows));
  std::optional<ReducedStepper> stepper;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double h = grid[k] - grid[k - 1];
    if (!stepper || std::abs(h - stepper->interval()) > 1e-12 * h) {
      stepper.emplace(model, h, substeps);
    }
    xh = stepper->advance(xh);
    if (!xh.allFinite()) throw NumericalError("reduced transient produced a non-finite state");
    traj.states.push_back(recover(model, xh, rows));
  }
  return traj;
}

}  // namespace emkrylov
