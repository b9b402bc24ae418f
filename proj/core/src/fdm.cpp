#include "emkrylov/fdm.hpp"

#include <cmath>
#include <optional>

#include "emkrylov/error.hpp"
#include "emkrylov/linalg.hpp"

namespace emkrylov {

BackwardEulerStats backward_euler_observed(const LtiSystem& sys, std::span<const double> grid,
                                           const StepObserver& observer, int substeps) {
  validate_time_grid(grid);
  if (substeps < 1) throw ParameterError("substeps must be >= 1");
  BackwardEulerStats stats;
  Eigen::VectorXd x = sys.x0;
  if (!observer(0, grid[0], x)) return stats;

  const Eigen::VectorXd b = sys.b();
  std::optional<SparseLu> lu;
  double factored_h = 0.0;
  std::size_t index = 0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double h = (grid[k] - grid[k - 1]) / substeps;
    if (!lu || std::abs(h - factored_h) > 1e-12 * factored_h) {
      try {
        lu.emplace(SparseLu::scaled(sys.A, -h, 1.0, sys.plan));
      } catch (const NumericalError& e) {
        throw NumericalError(std::string("backward Euler: I - hA is singular (") +
                             e.what() + ")");
      }
      factored_h = h;
      ++stats.factorizations;
    }
    const Eigen::VectorXd hb = h * b;
    for (int s = 1; s <= substeps; ++s) {
      x = lu->solve(x + hb);
      ++stats.steps;
      if (!x.allFinite()) throw NumericalError("backward Euler produced a non-finite state");
      const double t = s == substeps ? grid[k] : grid[k - 1] + h * s;
      if (!observer(++index, t, x)) return stats;
    }
  }
  return stats;
}

StressTrajectory backward_euler(const LtiSystem& sys, std::span<const double> grid,
                                std::span<const int> rows, int substeps) {
  StressTrajectory traj;
  traj.solver_tag = SolverTag::fdm;
  traj.rows.assign(rows.begin(), rows.end());
  traj.times.reserve(grid.size());
  traj.states.reserve(grid.size());
  const auto stride = static_cast<std::size_t>(substeps);
  backward_euler_observed(sys, grid, [&](std::size_t k, double t, const Eigen::VectorXd& x) {
    if (k % stride != 0) return true;
    traj.times.push_back(t);
    if (rows.empty()) {
      traj.states.push_back(x);
    } else {
      Eigen::VectorXd picked(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) picked[static_cast<Eigen::Index>(i)] = x[rows[i]];
      traj.states.push_back(std::move(picked));
    }
    return true;
  }, substeps);
  return traj;
}

}  // namespace emkrylov
