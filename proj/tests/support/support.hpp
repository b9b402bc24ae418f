#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emkrylov/discretization.hpp"
#include "emkrylov/trajectory.hpp"
#include "emkrylov/tree.hpp"

namespace emkrylov::testing {

/// One straight segment with fixed geometry and current density.
InterconnectTree single_segment(double length, double width, double height, double current,
                                const MaterialParams& mat = {});

/// `segments` collinear pieces carrying current in one direction.
InterconnectTree straight_wire(std::size_t segments, std::uint64_t seed);

/// Random tree with 1..max_segments segments.
InterconnectTree random_tree(std::uint64_t seed, std::size_t max_segments = 12);

/// Small diffusion system with n <= max_n unknowns: the nucleation system of a
/// random tree for even seeds, a post-void system with a random void for odd
/// seeds.
LtiSystem random_diffusion_system(std::uint64_t seed, Eigen::Index max_n = 50);

/// x(t) for dx/dt = A x + b in closed form from a dense eigendecomposition.
/// Needs A self-adjoint in the control-volume inner product, as every
/// assembled system is.
Eigen::VectorXd dense_exponential_state(const LtiSystem& sys, double t);

/// Stress of a blocked segment with zero initial stress, from the cosine
/// series of the Korhonen equation: sum over odd n of
/// 4 G L / (n pi)^2 cos(n pi x / L) (1 - exp(-kappa (n pi / L)^2 t)).
double blocked_segment_stress(double G, double L, double kappa, double x, double t,
                              int terms = 4001);

/// Slowest diffusion time of a tree: L_avg^2 / (pi^2 kappa_mean).
double slow_time(const InterconnectTree& tree);

/// Outcome of one randomized invariant suite.
struct PropertyReport {
  std::string name;
  int instances = 0;
  int failures = 0;
  double worst = 0.0;  // largest observed violation measure
  double bound = 0.0;
  std::string note;

  bool passed() const { return instances > 0 && failures == 0; }
};

PropertyReport check_arnoldi_relation(int instances, std::uint64_t seed = 1);
PropertyReport check_orthonormality(int instances, std::uint64_t seed = 2);
PropertyReport check_fdm_conservation(int instances, std::uint64_t seed = 3);
PropertyReport check_delta_r_monotone(int instances, std::uint64_t seed = 4);
PropertyReport check_tuner_trace(int instances, std::uint64_t seed = 5);
PropertyReport check_detection_monotone(int instances, std::uint64_t seed = 6);

std::string describe(const PropertyReport& report);

/// Fresh empty directory under the system temp path.
std::string scratch_dir(const std::string& tag);

}  // namespace emkrylov::testing
