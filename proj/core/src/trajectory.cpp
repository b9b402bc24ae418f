#include "emkrylov/trajectory.hpp"

#include <algorithm>
#include <cmath>

#include "emkrylov/error.hpp"

namespace emkrylov {

std::string_view to_string(SolverTag tag) {
  switch (tag) {
    case SolverTag::fdm: return "fdm";
    case SolverTag::ext_rakrylov: return "ext-rakrylov";
    case SolverTag::ei_rakrylov: return "ei-rakrylov";
  }
  return "fdm";
}

void validate_time_grid(std::span<const double> grid) {
  if (grid.empty()) throw ParameterError("time grid is empty");
  if (grid.front() != 0.0) throw ParameterError("time grid must start at 0");
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (!std::isfinite(grid[k]) || !(grid[k] > grid[k - 1])) {
      throw ParameterError("time grid must be strictly increasing");
    }
  }
}

std::vector<double> uniform_grid(double horizon, std::size_t steps) {
  if (steps == 0 || !(horizon > 0.0) || !std::isfinite(horizon)) {
    throw ParameterError("uniform grid needs steps >= 1 and a positive horizon");
  }
  std::vector<double> grid(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    grid[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
  }
  return grid;
}

std::vector<double> geometric_grid(double first_step, double horizon, std::size_t steps) {
  if (steps == 0 || !(first_step > 0.0) || !(horizon > first_step)) {
    throw ParameterError("geometric grid needs 0 < first_step < horizon");
  }
  if (steps == 1) return {0.0, horizon};
  // Solve first_step * (r^steps - 1) / (r - 1) = horizon for r by bisection.
  auto total = [&](double r) {
    return r == 1.0 ? first_step * static_cast<double>(steps)
                    : first_step * (std::pow(r, static_cast<double>(steps)) - 1.0) / (r - 1.0);
  };
  double lo = 1.0;
  double hi = 2.0;
  if (total(1.0) > horizon) {
    throw ParameterError("geometric grid: first step too large for the horizon");
  }
  while (total(hi) < horizon) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (total(mid) < horizon ? lo : hi) = mid;
  }
  const double ratio = 0.5 * (lo + hi);
  std::vector<double> grid(steps + 1, 0.0);
  double h = first_step;
  for (std::size_t k = 1; k <= steps; ++k) {
    grid[k] = grid[k - 1] + h;
    h *= ratio;
  }
  grid.back() = horizon;
  return grid;
}

double max_relative_l2(const StressTrajectory& a, const StressTrajectory& b) {
  if (a.size() != b.size()) throw ParameterError("trajectories differ in length");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = (a.states[k] - b.states[k]).norm();
    const double ref = b.states[k].norm();
    if (diff == 0.0) continue;
    worst = std::max(worst, ref > 0.0 ? diff / ref : INFINITY);
  }
  return worst;
}

}  // namespace emkrylov
