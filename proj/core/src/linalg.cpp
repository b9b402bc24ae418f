#include "emkrylov/linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/SparseLU>

#include "emkrylov/error.hpp"

namespace emkrylov {

class EliminationPlan {
 public:
  Eigen::Index n = 0;
  std::vector<int> outer;  // pattern the plan was built for
  std::vector<int> inner;
  // Elimination position j holds unknown perm[j]; its parent sits at
  // up[j] > j (or -1 for a root).
  std::vector<int> perm;
  std::vector<int> up;
  // Offsets into the value array: diagonal of perm[j], and the couplings
  // (parent, perm[j]) and (perm[j], parent).
  std::vector<int> diag;
  std::vector<int> lower;
  std::vector<int> upper;

  bool matches(const SparseMatrix& M) const {
    if (M.rows() != n || M.cols() != n || !M.isCompressed()) return false;
    if (M.nonZeros() != static_cast<Eigen::Index>(inner.size())) return false;
    return std::equal(outer.begin(), outer.end(), M.outerIndexPtr()) &&
           std::equal(inner.begin(), inner.end(), M.innerIndexPtr());
  }
};

namespace {

// Offset of entry (row, col) in a compressed column-major matrix, or -1.
int entry_offset(const int* outer, const int* inner, int row, int col) {
  const int* first = inner + outer[col];
  const int* last = inner + outer[col + 1];
  const int* it = std::lower_bound(first, last, row);
  return it != last && *it == row ? static_cast<int>(it - inner) : -1;
}

}  // namespace

std::shared_ptr<const EliminationPlan> analyze_pattern(const SparseMatrix& matrix) {
  if (matrix.rows() != matrix.cols()) return nullptr;
  SparseMatrix compressed;
  const SparseMatrix* M = &matrix;
  if (!matrix.isCompressed()) {
    compressed = matrix;
    compressed.makeCompressed();
    M = &compressed;
  }
  const auto n = static_cast<int>(M->rows());
  const int* outer = M->outerIndexPtr();
  const int* inner = M->innerIndexPtr();

  auto plan = std::make_shared<EliminationPlan>();
  plan->n = n;
  plan->outer.assign(outer, outer + n + 1);
  plan->inner.assign(inner, inner + outer[n]);

  // The column pattern doubles as the adjacency list, so it must be
  // structurally symmetric with every diagonal entry present.
  std::vector<int> diag_offset(static_cast<std::size_t>(n), -1);
  std::size_t off_diagonal = 0;
  for (int c = 0; c < n; ++c) {
    for (int k = outer[c]; k < outer[c + 1]; ++k) {
      const int r = inner[k];
      if (r == c) {
        diag_offset[static_cast<std::size_t>(c)] = k;
        continue;
      }
      ++off_diagonal;
      if (entry_offset(outer, inner, c, r) < 0) return nullptr;
    }
  }
  for (const int d : diag_offset) {
    if (d < 0) return nullptr;
  }

  // BFS from every unvisited vertex; a forest has n - components edges.
  std::vector<int> bfs;
  bfs.reserve(static_cast<std::size_t>(n));
  std::vector<int> parent(static_cast<std::size_t>(n), -2);
  std::size_t components = 0;
  for (int root = 0; root < n; ++root) {
    if (parent[static_cast<std::size_t>(root)] != -2) continue;
    ++components;
    parent[static_cast<std::size_t>(root)] = -1;
    std::size_t head = bfs.size();
    bfs.push_back(root);
    while (head < bfs.size()) {
      const int v = bfs[head++];
      for (int k = outer[v]; k < outer[v + 1]; ++k) {
        const int w = inner[k];
        if (w == v || parent[static_cast<std::size_t>(w)] != -2) continue;
        parent[static_cast<std::size_t>(w)] = v;
        bfs.push_back(w);
      }
    }
  }
  if (off_diagonal / 2 + components != static_cast<std::size_t>(n)) return nullptr;

  plan->perm.assign(bfs.rbegin(), bfs.rend());
  std::vector<int> position(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) position[static_cast<std::size_t>(plan->perm[static_cast<std::size_t>(j)])] = j;
  plan->up.assign(static_cast<std::size_t>(n), -1);
  plan->diag.resize(static_cast<std::size_t>(n));
  plan->lower.assign(static_cast<std::size_t>(n), -1);
  plan->upper.assign(static_cast<std::size_t>(n), -1);
  for (int j = 0; j < n; ++j) {
    const auto js = static_cast<std::size_t>(j);
    const int i = plan->perm[js];
    plan->diag[js] = diag_offset[static_cast<std::size_t>(i)];
    const int p = parent[static_cast<std::size_t>(i)];
    if (p < 0) continue;
    plan->up[js] = position[static_cast<std::size_t>(p)];
    plan->lower[js] = entry_offset(outer, inner, p, i);
    plan->upper[js] = entry_offset(outer, inner, i, p);
  }
  return plan;
}

namespace {

// Numeric zero-fill factorization along an EliminationPlan.
class ForestLu {
 public:
  // Factors scale * M + shift * I from M's values. False when a pivot
  // collapses; the object is then unusable.
  bool factor(const SparseMatrix& M, std::shared_ptr<const EliminationPlan> plan,
              double scale = 1.0, double shift = 0.0) {
    plan_ = std::move(plan);
    const EliminationPlan& P = *plan_;
    const double* v = M.valuePtr();
    const auto n = static_cast<std::size_t>(P.n);
    std::vector<double> d(n);
    double norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      d[j] = scale * v[P.diag[j]] + shift;
      norm = std::max(norm, std::abs(d[j]));
    }
    lower_.assign(n, 0.0);
    upper_.assign(n, 0.0);
    inv_diag_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      if (!(std::abs(d[j]) > 1e-14 * norm)) return false;
      inv_diag_[j] = 1.0 / d[j];
      const int p = P.up[j];
      if (p < 0) continue;
      lower_[j] = scale * v[P.lower[j]] * inv_diag_[j];
      upper_[j] = scale * v[P.upper[j]];
      d[static_cast<std::size_t>(p)] -= lower_[j] * upper_[j];
    }
    return true;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    const EliminationPlan& P = *plan_;
    const auto n = static_cast<std::size_t>(P.n);
    Eigen::VectorXd y(P.n);
    for (std::size_t j = 0; j < n; ++j) y[static_cast<Eigen::Index>(j)] = rhs[P.perm[j]];
    double* yp = y.data();
    for (std::size_t j = 0; j < n; ++j) {
      const int p = P.up[j];
      if (p >= 0) yp[p] -= lower_[j] * yp[j];
    }
    for (std::size_t j = n; j-- > 0;) {
      const int p = P.up[j];
      const double coupled = p >= 0 ? upper_[j] * yp[p] : 0.0;
      yp[j] = (yp[j] - coupled) * inv_diag_[j];
    }
    Eigen::VectorXd x(P.n);
    for (std::size_t j = 0; j < n; ++j) x[P.perm[j]] = yp[j];
    return x;
  }

  Eigen::Index size() const { return plan_->n; }

 private:
  std::shared_ptr<const EliminationPlan> plan_;
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<double> inv_diag_;
};

}  // namespace

struct SparseLu::Impl {
  std::optional<ForestLu> forest;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
};

SparseLu::SparseLu() : impl_(std::make_unique<Impl>()) {}

void SparseLu::factor_general(const SparseMatrix& matrix) {
  impl_->lu.analyzePattern(matrix);
  impl_->lu.factorize(matrix);
  if (impl_->lu.info() != Eigen::Success) {
    throw NumericalError("sparse LU failed: " + impl_->lu.lastErrorMessage());
  }
}

SparseLu::SparseLu(const SparseMatrix& matrix, std::shared_ptr<const EliminationPlan> plan)
    : SparseLu() {
  if (matrix.rows() != matrix.cols()) {
    throw NumericalError("LU factorization needs a square matrix");
  }
  if (!plan || !plan->matches(matrix)) plan = analyze_pattern(matrix);
  if (plan && plan->matches(matrix)) {
    ForestLu forest;
    if (forest.factor(matrix, std::move(plan))) {
      impl_->forest = std::move(forest);
      return;
    }
  }
  factor_general(matrix);
}

SparseLu SparseLu::scaled(const SparseMatrix& A, double scale, double shift,
                          std::shared_ptr<const EliminationPlan> plan) {
  if (A.rows() != A.cols()) throw NumericalError("LU factorization needs a square matrix");
  SparseLu lu;
  if (plan && plan->matches(A)) {
    ForestLu forest;
    if (forest.factor(A, std::move(plan), scale, shift)) {
      lu.impl_->forest = std::move(forest);
      return lu;
    }
  }
  return SparseLu(scaled_plus_identity(A, scale, shift));
}

SparseLu::~SparseLu() = default;
SparseLu::SparseLu(SparseLu&&) noexcept = default;
SparseLu& SparseLu::operator=(SparseLu&&) noexcept = default;

Eigen::VectorXd SparseLu::solve(const Eigen::VectorXd& rhs) const {
  if (impl_->forest) return impl_->forest->solve(rhs);
  Eigen::VectorXd x = impl_->lu.solve(rhs);
  return x;
}

bool SparseLu::forest() const { return impl_->forest.has_value(); }

Eigen::Index SparseLu::size() const {
  return impl_->forest ? impl_->forest->size() : impl_->lu.rows();
}

SparseMatrix scaled_plus_identity(const SparseMatrix& A, double scale, double shift) {
  SparseMatrix M = A;
  M.makeCompressed();
  double* values = M.valuePtr();
  for (Eigen::Index k = 0; k < M.nonZeros(); ++k) values[k] *= scale;
  const Eigen::Index n = std::min(M.rows(), M.cols());
  std::vector<bool> has_diagonal(static_cast<std::size_t>(n), false);
  for (Eigen::Index col = 0; col < n; ++col) {
    for (SparseMatrix::InnerIterator it(M, col); it; ++it) {
      if (it.row() == col) {
        it.valueRef() += shift;
        has_diagonal[static_cast<std::size_t>(col)] = true;
      }
    }
  }
  bool inserted = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!has_diagonal[static_cast<std::size_t>(i)]) {
      M.coeffRef(i, i) = shift;
      inserted = true;
    }
  }
  if (inserted) M.makeCompressed();
  return M;
}

Eigen::VectorXd project_out_constant(const Eigen::VectorXd& v,
                                     const Eigen::VectorXd& weights) {
  return v.array() - weights.dot(v) / weights.sum();
}

namespace {

// A with row `pin` replaced by the unit row: the grounded operator. The
// pattern is kept so the forest elimination still applies.
SparseMatrix pinned(const SparseMatrix& A, Eigen::Index pin) {
  SparseMatrix M = A;
  M.makeCompressed();
  for (Eigen::Index col = 0; col < M.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(M, col); it; ++it) {
      if (it.row() == pin) it.valueRef() = col == pin ? 1.0 : 0.0;
    }
  }
  if (M.coeff(pin, pin) != 1.0) M.coeffRef(pin, pin) = 1.0;
  M.makeCompressed();
  return M;
}

}  // namespace

ShiftInvert::ShiftInvert(const SparseMatrix& A, double shift,
                         const Eigen::VectorXd* left_null,
                         std::shared_ptr<const EliminationPlan> plan)
    : shift_(shift),
      deflated_(shift == 0.0 && left_null != nullptr),
      lu_(deflated_ ? SparseLu(pinned(A, 0), std::move(plan))
                    : SparseLu::scaled(A, 1.0, -shift, std::move(plan))) {
  if (deflated_) {
    weights_ = *left_null;
    weight_sum_ = weights_.sum();
  }
}

Eigen::VectorXd ShiftInvert::apply(const Eigen::VectorXd& v) const {
  if (!deflated_) return lu_.solve(v);
  Eigen::VectorXd rhs = project_out_constant(v, weights_);
  rhs[0] = 0.0;
  Eigen::VectorXd x = lu_.solve(rhs);
  x.array() -= weights_.dot(x) / weight_sum_;
  return x;
}

namespace {

constexpr std::array<double, 4> kPade3 = {120.0, 60.0, 12.0, 1.0};
constexpr std::array<double, 6> kPade5 = {30240.0, 15120.0, 3360.0,
                                          420.0,   30.0,    1.0};
constexpr std::array<double, 8> kPade7 = {17297280.0, 8648640.0, 1995840.0,
                                          277200.0,   25200.0,   1512.0,
                                          56.0,       1.0};
constexpr std::array<double, 10> kPade9 = {
    17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
    2162160.0,     110880.0,     3960.0,       90.0,        1.0};
constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0,  129060195264000.0,   10559470521600.0,
    670442572800.0,      33522128640.0,       1323241920.0,
    40840800.0,          960960.0,            16380.0,
    182.0,               1.0};

// Largest ||A||_1 for which the degree-m approximant is accurate to unit
// roundoff without scaling.
constexpr double kTheta3 = 1.495585217958292e-2;
constexpr double kTheta5 = 2.539398330063230e-1;
constexpr double kTheta7 = 9.504178996162932e-1;
constexpr double kTheta9 = 2.097847961257068e0;
constexpr double kTheta13 = 5.371920351148152e0;

template <std::size_t N>
Eigen::MatrixXd pade_low(const Eigen::MatrixXd& A, const std::array<double, N>& b) {
  const Eigen::Index n = A.rows();
  const Eigen::MatrixXd A2 = A * A;
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd u = b[1] * power;
  Eigen::MatrixXd v = b[0] * power;
  for (std::size_t k = 2; k < N; k += 2) {
    power = power * A2;
    v += b[k] * power;
    u += b[k + 1] * power;
  }
  const Eigen::MatrixXd U = A * u;
  return (v - U).partialPivLu().solve(v + U);
}

Eigen::MatrixXd pade13(const Eigen::MatrixXd& A) {
  const auto& b = kPade13;
  const Eigen::Index n = A.rows();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd A2 = A * A;
  const Eigen::MatrixXd A4 = A2 * A2;
  const Eigen::MatrixXd A6 = A4 * A2;
  const Eigen::MatrixXd U =
      A * (A6 * (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 +
           b[3] * A2 + b[1] * I);
  const Eigen::MatrixXd V = A6 * (b[12] * A6 + b[10] * A4 + b[8] * A2) +
                            b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;
  return (V - U).partialPivLu().solve(V + U);
}

}  // namespace

Eigen::MatrixXd small_matrix_exp(const Eigen::MatrixXd& M, double t) {
  if (M.rows() != M.cols()) throw NumericalError("matrix exponential needs a square matrix");
  if (!std::isfinite(t) || !M.allFinite()) {
    throw NumericalError("matrix exponential of non-finite input");
  }
  const Eigen::MatrixXd A = t * M;
  if (A.size() == 0) return A;
  const double norm = A.cwiseAbs().colwise().sum().maxCoeff();
  if (norm <= kTheta3) return pade_low(A, kPade3);
  if (norm <= kTheta5) return pade_low(A, kPade5);
  if (norm <= kTheta7) return pade_low(A, kPade7);
  if (norm <= kTheta9) return pade_low(A, kPade9);

  const int squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm / kTheta13))));
  Eigen::MatrixXd X = pade13(std::ldexp(1.0, -squarings) * A);
  for (int i = 0; i < squarings; ++i) X = X * X;
  if (!X.allFinite()) throw NumericalError("matrix exponential overflowed");
  return X;
}

}  // namespace emkrylov
