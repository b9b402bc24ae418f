#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include <Eigen/Dense>

#include "emkrylov/discretization.hpp"
#include "emkrylov/trajectory.hpp"

namespace emkrylov {

/// Called with (step index, time, state) for every computed state including
/// t = 0. Returning false stops the integration after that point.
using StepObserver =
    std::function<bool(std::size_t, double, const Eigen::VectorXd&)>;

struct BackwardEulerStats {
  std::size_t steps = 0;
  std::size_t factorizations = 0;
};

/// Implicit Euler  (I - hA) x_{k+1} = x_k + h b  over `grid`, starting from
/// sys.x0. Each grid interval is split into `substeps` equal steps; the
/// observer sees every substep, numbered consecutively. The LU factorization
/// is reused while the step size stays within 1e-12 relative of the one it
/// was built for.
BackwardEulerStats backward_euler_observed(const LtiSystem& sys, std::span<const double> grid,
                                           const StepObserver& observer, int substeps = 1);

/// Convenience overload storing the state (or only `rows`, when given) at
/// every grid point.
StressTrajectory backward_euler(const LtiSystem& sys, std::span<const double> grid,
                                std::span<const int> rows = {}, int substeps = 1);

}  // namespace emkrylov
