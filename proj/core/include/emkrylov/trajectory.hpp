#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace emkrylov {

enum class SolverTag { fdm, ext_rakrylov, ei_rakrylov };

std::string_view to_string(SolverTag tag);

/// Stress states sampled on a time grid. `rows` lists the grid indices held
/// in each state; empty means every unknown of the system.
struct StressTrajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  std::vector<double> residual_rel;  // empty unless the solver estimates it
  std::vector<int> rows;
  SolverTag solver_tag = SolverTag::fdm;

  std::size_t size() const noexcept { return times.size(); }
  bool full() const noexcept { return rows.empty(); }
  /// Grid index held at position `i` of each state.
  int row_index(Eigen::Index i) const {
    return rows.empty() ? static_cast<int>(i) : rows[static_cast<std::size_t>(i)];
  }
};

/// Throws ParameterError unless the grid starts at 0 and strictly increases.
void validate_time_grid(std::span<const double> grid);

/// `steps` equal steps from 0 to `horizon` (steps + 1 points).
std::vector<double> uniform_grid(double horizon, std::size_t steps);

/// 0 followed by `steps` geometrically growing steps ending at `horizon`,
/// the first of length `first_step`.
std::vector<double> geometric_grid(double first_step, double horizon, std::size_t steps);

/// max_k ||a_k - b_k|| / ||b_k|| over paired states (0/0 counts as 0).
double max_relative_l2(const StressTrajectory& a, const StressTrajectory& b);

}  // namespace emkrylov
