#pragma once

#include <memory>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace emkrylov {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Symbolic analysis for matrices whose off-diagonal pattern is a
/// structurally symmetric forest: a leaves-first elimination order with no
/// fill. Shared by every matrix with the same compressed pattern.
class EliminationPlan;

/// Null when the pattern is not a forest or lacks a full diagonal.
std::shared_ptr<const EliminationPlan> analyze_pattern(const SparseMatrix& matrix);

/// Sparse LU factorization. With a plan matching the matrix pattern the
/// forest elimination runs without pivoting; otherwise, or on a vanishing
/// pivot, a supernodal LU with COLAMD ordering is used. Not copyable; cheap
/// to move.
class SparseLu {
 public:
  /// Throws NumericalError if the matrix is structurally or numerically
  /// singular. Without a plan one is derived from the matrix.
  explicit SparseLu(const SparseMatrix& matrix,
                    std::shared_ptr<const EliminationPlan> plan = nullptr);
  /// Factors scale * A + shift * I without forming it when the plan matches
  /// A's pattern.
  static SparseLu scaled(const SparseMatrix& A, double scale, double shift,
                         std::shared_ptr<const EliminationPlan> plan = nullptr);
  ~SparseLu();
  SparseLu(SparseLu&&) noexcept;
  SparseLu& operator=(SparseLu&&) noexcept;

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  Eigen::Index size() const;
  /// True when the forest elimination is in use.
  bool forest() const;

 private:
  SparseLu();
  void factor_general(const SparseMatrix& matrix);

  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Applies (A - shift*I)^{-1}. When A is singular with the constant vector
/// as nullspace and `left_null` is given (the weights w with w^T A = 0),
/// shift = 0 is served by a deflated solve: the right-hand side is projected
/// onto range(A), one row is pinned, and the result is normalised to
/// w^T x = 0.
class ShiftInvert {
 public:
  ShiftInvert(const SparseMatrix& A, double shift,
              const Eigen::VectorXd* left_null = nullptr,
              std::shared_ptr<const EliminationPlan> plan = nullptr);

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  double shift() const noexcept { return shift_; }
  bool deflated() const noexcept { return deflated_; }

 private:
  double shift_;
  bool deflated_ = false;
  Eigen::VectorXd weights_;
  double weight_sum_ = 0.0;
  SparseLu lu_;
};

/// scale * A + shift * I, keeping the pattern of A.
SparseMatrix scaled_plus_identity(const SparseMatrix& A, double scale, double shift);

/// Project `v` onto {x : w^T x = 0} along the constant vector.
Eigen::VectorXd project_out_constant(const Eigen::VectorXd& v,
                                     const Eigen::VectorXd& weights);

/// e^{tM} for a small dense matrix by scaling and squaring with a diagonal
/// Pade approximant of degree 3..13 chosen from ||tM||_1.
Eigen::MatrixXd small_matrix_exp(const Eigen::MatrixXd& M, double t = 1.0);

}  // namespace emkrylov
