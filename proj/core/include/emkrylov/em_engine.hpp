#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "emkrylov/discretization.hpp"
#include "emkrylov/trajectory.hpp"
#include "emkrylov/tree.hpp"

namespace emkrylov {

enum class Solver { fdm, ext, ei };

std::string_view to_string(Solver solver);
std::optional<Solver> solver_from_string(std::string_view text);

/// Shift-time bases L^2 / (pi^2 kappa) for both phases and their scale
/// factors.
struct ShiftTimes {
  double tau_nuc = 0.0;   // from L_avg, s
  double tau_post = 0.0;  // from L_max, s
  double eta_nuc = 1.0;
  double eta_post = 1.0;

  double shift_time_nuc() const { return eta_nuc * tau_nuc; }
  double shift_time_post() const { return eta_post * tau_post; }
};

/// tau with the tree-mean diffusivity.
ShiftTimes estimate_shift_times(const InterconnectTree& tree);

struct Nucleation {
  double time = 0.0;
  int index = -1;  // grid index (position in the state vector for row subsets)
};

/// First time the largest entry of a state reaches `sigma_crit`, refined by
/// linear interpolation on the crossing entry. Ties go to the lowest index.
std::optional<Nucleation> detect_nucleation(const StressTrajectory& traj, double sigma_crit);

/// -sum_i vol_i sigma_i / B over the whole tree, m^3.
double void_volume(const Eigen::VectorXd& state, const LtiSystem& sys,
                   const InterconnectTree& tree);

/// Same integral split per segment; tree nodes contribute half a cell to each
/// incident segment.
std::vector<double> void_volume_by_segment(const Eigen::VectorXd& state, const LtiSystem& sys,
                                           const InterconnectTree& tree);

/// rho_Ta / (h_Ta (2H + W)) - rho_Cu / (H W). Positive for a sane barrier.
double resistance_bracket(const Segment& segment, const MaterialParams& mat);

/// Critical void size: the configured V_crit or W^2 H of the segment.
double critical_void_volume(const Segment& segment, const MaterialParams& mat);

/// Zero up to V_crit, then (V_v - V_crit) / (W H) times the bracket.
double resistance_change(double void_volume, const Segment& segment, const MaterialParams& mat);

/// Output grid of one phase.
struct GridConfig {
  std::size_t steps = 100;
  double horizon_factor = 20.0;  // horizon in units of the phase's tau
  std::optional<double> horizon;  // absolute horizon, overrides the factor
  bool geometric = false;         // geometric steps starting at horizon / steps^2
  // Implicit substeps per output step for fdm and ext.
  int substeps = 1;
};

struct SimulationConfig {
  Solver solver = Solver::fdm;
  int q = 6;
  double eta_nuc = 1.0;
  double eta_post = 1.0;
  GridConfig nucleation;
  GridConfig post_void;
  int points_per_segment = 11;
  std::optional<double> critical_stress;  // overrides the tree's sigma_crit
  bool fastem = false;     // ext with shift 0
  bool full_grid = false;  // record every grid point instead of tree nodes
  bool run_post_void = true;
};

struct SimulationResult {
  std::optional<double> t_nuc;
  std::optional<int> nucleation_node;  // grid index; tree node id when < n_tree_nodes
  int voided_segment = -1;
  double critical_void_volume = 0.0;
  StressTrajectory trajectory_nuc;
  StressTrajectory trajectory_post;   // absolute times
  std::vector<double> void_volume;    // per post-void sample
  // Per post-void sample, Ohm, from the largest void volume reached so far.
  std::vector<double> delta_r;
  SimulationConfig config;
  ShiftTimes shifts;
  int order_nuc = 0;   // achieved Krylov order
  int order_post = 0;
  double seconds_nuc = 0.0;
  double seconds_post = 0.0;
  std::vector<std::string> warnings;

  std::optional<double> final_delta_r() const {
    if (delta_r.empty()) return std::nullopt;
    return delta_r.back();
  }
};

/// Nucleation phase until detection or horizon, then the post-void phase
/// seeded with the stress at t_nuc.
SimulationResult simulate_two_phase(const InterconnectTree& tree, const SimulationConfig& config);

}  // namespace emkrylov
