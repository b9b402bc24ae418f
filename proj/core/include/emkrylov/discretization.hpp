#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "emkrylov/tree.hpp"

namespace emkrylov {

using SparseMatrix = Eigen::SparseMatrix<double>;

class EliminationPlan;

/// Stress diffusivity D_a B Omega / (k_B T), m^2/s.
double diffusivity(const Segment& segment, const MaterialParams& mat);

/// Electromigration driving force e rho J Z* / Omega, Pa/m.
double drive_force(const Segment& segment, const MaterialParams& mat);

enum class Phase { nucleation, post_void };

/// Location of one unknown of the discretized tree.
struct GridPoint {
  int segment = -1;    // owning segment; for tree nodes, the lowest incident id
  double arc = 0.0;    // distance from that segment's node_a, m
  int tree_node = -1;  // tree node id when the point is a node anchor
};

/// Semi-discrete Korhonen system  dx/dt = A x + B u  (C = I).
///
/// Unknowns 0..n_tree_nodes-1 are the tree nodes in id order; the interior
/// points of each segment follow, ordered from node_a to node_b.
struct LtiSystem {
  SparseMatrix A;          // n x n, 1/s
  SparseMatrix B;          // n x m, one column per segment
  Eigen::VectorXd u;       // m, per-segment drive force G (Pa/m)
  Eigen::VectorXd x0;      // n, initial stress (Pa)
  std::vector<GridPoint> node_map;
  std::vector<double> dx;  // grid spacing per segment, m
  // Physical volume represented by each unknown (m^3). It is the left
  // nullvector of the nucleation-phase A.
  Eigen::VectorXd control_volume;
  std::vector<double> kappa;  // per-segment diffusivity
  std::vector<double> area;   // per-segment cross-section W*H
  // grid indices along each segment, node_a first, node_b last
  std::vector<std::vector<int>> segment_points;
  std::size_t n_tree_nodes = 0;
  Phase phase = Phase::nucleation;
  // True while A has the constant vector as its nullspace (all blocking BCs).
  bool singular = true;
  int void_index = -1;
  // Symbolic LU analysis of A's pattern, shared across phases; may be null.
  std::shared_ptr<const EliminationPlan> plan;

  Eigen::Index size() const { return A.rows(); }
  Eigen::VectorXd b() const { return B * u; }
};

/// Builds the nucleation-phase system with `points_per_segment` uniformly
/// spaced grid points per segment (end points shared with the tree nodes).
LtiSystem assemble_nucleation(const InterconnectTree& tree,
                              int points_per_segment = 11);

/// Post-void system: the row of `void_index` gets the Robin condition
/// d(sigma)/dx = sigma / delta and loses its drive-force input.
LtiSystem assemble_postvoid(const LtiSystem& base, int void_index,
                            const MaterialParams& mat,
                            const Eigen::VectorXd& stress_at_tnuc);

/// Segment that owns a void at grid point `index`: the incident segment with
/// the largest |G|, lowest id on ties.
int voided_segment(const LtiSystem& sys, int index);

/// Segments touching grid point `index` (one for interior points).
std::vector<int> segments_at(const LtiSystem& sys, const InterconnectTree& tree,
                             int index);

/// `row col value` triplets, 1-based, one per line, for debugging.
void write_triplets(std::ostream& out, const SparseMatrix& matrix);

}  // namespace emkrylov
