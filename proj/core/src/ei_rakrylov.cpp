#include "emkrylov/ei_rakrylov.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "emkrylov/error.hpp"

namespace emkrylov {

namespace {

void orthogonalize(const Eigen::MatrixXd& V, Eigen::Index k, Eigen::VectorXd& w,
                   Eigen::Ref<Eigen::VectorXd> h, double reorth_tol) {
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index i = 0; i < k; ++i) {
      const double c = V.col(i).dot(w);
      h[i] += c;
      w -= c * V.col(i);
    }
    double leak = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) leak = std::max(leak, std::abs(V.col(i).dot(w)));
    if (leak <= reorth_tol * w.norm()) break;
  }
}

}  // namespace

KrylovBasis rational_krylov_basis(const ShiftInvert& op, const Eigen::VectorXd& v, int q,
                                  const ArnoldiOptions& options) {
  if (q < 1) throw ParameterError("Krylov order q must be >= 1");
  const double beta = v.norm();
  if (!(beta > 0.0)) throw DegenerateInputError("Krylov seed vector is zero");
  if (!std::isfinite(beta)) throw NumericalError("Krylov seed vector is not finite");

  const Eigen::Index n = v.size();
  const Eigen::Index max_order = std::min<Eigen::Index>(q, n);
  Eigen::MatrixXd V(n, max_order);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(max_order, max_order);
  V.col(0) = v / beta;

  KrylovBasis basis;
  basis.beta = beta;
  basis.shift = op.shift();
  basis.order_requested = q;

  Eigen::Index k = 1;
  for (Eigen::Index j = 0; j < max_order; ++j) {
    Eigen::VectorXd w = op.apply(V.col(j));
    const double before = w.norm();
    orthogonalize(V, j + 1, w, H.col(j).head(j + 1), options.reorth_tol);
    const double h = w.norm();
    const bool breakdown = !(h > options.breakdown_tol * before);
    if (j + 1 == max_order || breakdown) {
      if (!breakdown) {
        basis.h_next = h;
        basis.v_next = w / h;
      }
      k = j + 1;
      break;
    }
    H(j + 1, j) = h;
    V.col(j + 1) = w / h;
  }
  basis.V = V.leftCols(k);
  basis.H = H.topLeftCorner(k, k);
  return basis;
}

KrylovBasis rational_krylov_basis(const SparseMatrix& A, const Eigen::VectorXd& v, int q,
                                  double shift, const ArnoldiOptions& options) {
  if (!(shift > 0.0) || !std::isfinite(shift)) throw ParameterError("shift must be positive");
  if (v.size() != A.rows()) throw ParameterError("seed length does not match the matrix");
  if (v.norm() == 0.0) throw DegenerateInputError("Krylov seed vector is zero");
  const ShiftInvert op(A, shift);
  return rational_krylov_basis(op, v, q, options);
}

Eigen::MatrixXd mapped_operator(const KrylovBasis& basis) {
  const Eigen::Index k = basis.order();
  if (k == 0) return {};
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(basis.H);
  const auto& s = svd.singularValues();
  const double cond = s[k - 1] > 0.0 ? s[0] / s[k - 1] : INFINITY;
  if (!(cond < 1e14)) {
    std::ostringstream msg;
    msg << "Hessenberg matrix is numerically singular (condition estimate " << cond << ")";
    throw NumericalError(msg.str());
  }
  Eigen::MatrixXd H_hat = basis.H.partialPivLu().inverse();
  H_hat.diagonal().array() += basis.shift;
  return H_hat;
}

namespace {

Residual residual_from(const KrylovBasis& basis, const Eigen::VectorXd& z, double state_norm) {
  Residual r;
  if (!basis.v_next || basis.order() == 0) return r;
  r.abs = basis.beta * std::abs(basis.h_next * z[z.size() - 1]);
  r.rel = r.abs / std::max(state_norm, 1e-30);
  return r;
}

}  // namespace

Residual residual_estimate(const KrylovBasis& basis, const Eigen::MatrixXd& H_hat, double t,
                           double state_norm) {
  if (!basis.v_next || basis.order() == 0) return {};
  return residual_from(basis, small_matrix_exp(H_hat, t).col(0), state_norm);
}

Eigen::VectorXd steady_offset(const LtiSystem& sys) {
  const Eigen::VectorXd b = sys.b();
  const double b_norm = b.norm();
  if (b_norm == 0.0) return Eigen::VectorXd::Zero(sys.size());
  Eigen::VectorXd f;
  if (sys.singular) {
    const Eigen::VectorXd& w = sys.control_volume;
    if (std::abs(w.dot(b)) > 1e-8 * w.norm() * b_norm) {
      throw ConservationError("drive input is not in the range of the blocking operator");
    }
    f = ShiftInvert(sys.A, 0.0, &w, sys.plan).apply(b);
  } else {
    f = SparseLu(sys.A, sys.plan).solve(b);
  }
  if ((sys.A * f - b).norm() > 1e-8 * b_norm || !f.allFinite()) {
    throw ConservationError("steady-state solve A f = b failed verification");
  }
  return f;
}

EiPropagator::EiPropagator(const LtiSystem& sys, int q, double shift,
                           const ArnoldiOptions& options)
    : x0_(sys.x0), f_(steady_offset(sys)) {
  if (!(shift > 0.0) || !std::isfinite(shift)) throw ParameterError("shift must be positive");
  if (q < 1) throw ParameterError("Krylov order q must be >= 1");
  const Eigen::VectorXd seed = x0_ + f_;
  f_norm2_ = f_.squaredNorm();
  if (seed.norm() == 0.0) return;
  const ShiftInvert op(sys.A, shift, nullptr, sys.plan);
  basis_ = rational_krylov_basis(op, seed, q, options);
  H_hat_ = mapped_operator(basis_);
  Vt_f_ = basis_.V.transpose() * f_;
}

Eigen::VectorXd EiPropagator::reduced(double t) const {
  if (trivial()) return {};
  return small_matrix_exp(H_hat_, t).col(0);
}

Eigen::VectorXd EiPropagator::state(double t) const {
  if (t == 0.0) return x0_;
  if (trivial()) return -f_;
  return basis_.beta * (basis_.V * reduced(t)) - f_;
}

Eigen::VectorXd EiPropagator::rows(double t, std::span<const int> rows) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  const Eigen::VectorXd z = t == 0.0 || trivial() ? Eigen::VectorXd() : reduced(t);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    double value;
    if (t == 0.0) {
      value = x0_[r];
    } else if (trivial()) {
      value = -f_[r];
    } else {
      value = basis_.beta * basis_.V.row(r).dot(z) - f_[r];
    }
    out[static_cast<Eigen::Index>(i)] = value;
  }
  return out;
}

double EiPropagator::state_norm(const Eigen::VectorXd& z) const {
  if (trivial()) return std::sqrt(f_norm2_);
  const double beta = basis_.beta;
  const double sq = beta * beta * z.squaredNorm() - 2.0 * beta * z.dot(Vt_f_) + f_norm2_;
  return std::sqrt(std::max(sq, 0.0));
}

Residual EiPropagator::residual(double t) const {
  if (t == 0.0 || trivial()) return {};
  return residual_at(reduced(t));
}

Residual EiPropagator::residual_at(const Eigen::VectorXd& z) const {
  if (trivial()) return {};
  return residual_from(basis_, z, state_norm(z));
}

EiSolution ei_transient(const LtiSystem& sys, std::span<const double> grid, int q, double shift,
                        std::span<const int> rows) {
  validate_time_grid(grid);
  const EiPropagator prop(sys, q, shift);
  EiSolution sol;
  sol.f = prop.offset();
  sol.H_hat = prop.mapped();
  sol.basis = prop.basis();
  StressTrajectory& traj = sol.trajectory;
  traj.solver_tag = SolverTag::ei_rakrylov;
  traj.rows.assign(rows.begin(), rows.end());
  traj.times.assign(grid.begin(), grid.end());
  traj.states.reserve(grid.size());
  traj.residual_rel.reserve(grid.size());
  for (const double t : grid) {
    const Eigen::VectorXd x = prop.state(t);
    if (!x.allFinite()) throw NumericalError("exponential integration produced a non-finite state");
    const Residual r = t == 0.0 || prop.trivial()
                           ? Residual{}
                           : residual_estimate(prop.basis(), prop.mapped(), t, x.norm());
    traj.residual_rel.push_back(r.rel);
    if (rows.empty()) {
      traj.states.push_back(x);
    } else {
      Eigen::VectorXd picked(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) picked[static_cast<Eigen::Index>(i)] = x[rows[i]];
      traj.states.push_back(std::move(picked));
    }
  }
  return sol;
}

}  // namespace emkrylov
