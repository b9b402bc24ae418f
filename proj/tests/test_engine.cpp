#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>

#include "emkrylov/em_engine.hpp"
#include "emkrylov/error.hpp"
#include "support.hpp"

namespace emkrylov {
namespace {

StressTrajectory hand_trajectory() {
  StressTrajectory t;
  t.times = {0.0, 1.0, 2.0, 3.0};
  t.rows = {4, 7};
  t.states = {Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(5.0, 4.0),
              Eigen::Vector2d(9.0, 9.0)};
  return t;
}

TEST(Detection, InterpolatesOnTheCrossingEntry) {
  const StressTrajectory t = hand_trajectory();
  const auto n = detect_nucleation(t, 3.0);
  ASSERT_TRUE(n);
  // Entry 0 is the maximum at t = 2 and crosses 3 halfway from 1 to 5.
  EXPECT_EQ(n->index, 4);
  EXPECT_DOUBLE_EQ(n->time, 1.5);
  EXPECT_EQ(detect_nucleation(t, 2.0)->index, 7);
  EXPECT_DOUBLE_EQ(detect_nucleation(t, 2.0)->time, 1.0);
  EXPECT_EQ(detect_nucleation(t, 9.0)->index, 4);  // tie goes to the lower index
  EXPECT_FALSE(detect_nucleation(t, 9.5));
  EXPECT_DOUBLE_EQ(detect_nucleation(t, -1.0)->time, 0.0);
}

TEST(Resistance, ZeroBelowCriticalThenLinear) {
  const Segment seg{0, 0, 1, 1e-5, 4e-7, 2e-7, 1e10};
  const MaterialParams mat;
  const double vc = critical_void_volume(seg, mat);
  EXPECT_DOUBLE_EQ(vc, 4e-7 * 4e-7 * 2e-7);
  const double bracket = resistance_bracket(seg, mat);
  EXPECT_DOUBLE_EQ(bracket, mat.resistivity_ta / (mat.barrier_thickness * (2 * 2e-7 + 4e-7)) -
                                mat.resistivity_cu / (2e-7 * 4e-7));
  EXPECT_GT(bracket, 0.0);
  EXPECT_EQ(resistance_change(0.5 * vc, seg, mat), 0.0);
  EXPECT_EQ(resistance_change(-vc, seg, mat), 0.0);
  EXPECT_DOUBLE_EQ(resistance_change(3 * vc, seg, mat), 2 * vc / (4e-7 * 2e-7) * bracket);
  MaterialParams fixed = mat;
  fixed.critical_void_volume = 1e-20;
  EXPECT_DOUBLE_EQ(critical_void_volume(seg, fixed), 1e-20);
}

TEST(VoidVolume, IntegratesTensileDeficit) {
  const InterconnectTree tree = generate_synthetic_tree(4, 2);
  const LtiSystem sys = assemble_nucleation(tree, 6);
  const Eigen::VectorXd sigma = Eigen::VectorXd::Constant(sys.size(), 2e8);
  const double B = tree.materials().bulk_modulus;
  EXPECT_NEAR(void_volume(sigma, sys, tree), -sys.control_volume.sum() * 2e8 / B,
              1e-12 * sys.control_volume.sum() * 2e8 / B);
  const auto parts = void_volume_by_segment(sigma, sys, tree);
  EXPECT_EQ(parts.size(), 4u);
  EXPECT_NEAR(std::accumulate(parts.begin(), parts.end(), 0.0), void_volume(sigma, sys, tree),
              1e-12 * std::abs(void_volume(sigma, sys, tree)));
  for (std::size_t s = 0; s < parts.size(); ++s) {
    const Segment& seg = tree.segments()[s];
    EXPECT_NEAR(parts[s], -seg.length * seg.width * seg.height * 2e8 / B,
                1e-9 * std::abs(parts[s]));
  }
}

TEST(ShiftTimes, FromMeanAndDiameter) {
  const InterconnectTree tree = testing::single_segment(4e-5, 5e-7, 2e-7, 1e10);
  const ShiftTimes st = estimate_shift_times(tree);
  const double kappa = diffusivity(tree.segments()[0], tree.materials());
  EXPECT_DOUBLE_EQ(st.tau_nuc, 16e-10 / (std::numbers::pi * std::numbers::pi * kappa));
  EXPECT_DOUBLE_EQ(st.tau_post, st.tau_nuc);
  EXPECT_EQ(solver_from_string("ext-rakrylov"), Solver::ext);
  EXPECT_FALSE(solver_from_string("rk4"));
}

TEST(TwoPhase, NoDriveNoNucleation) {
  const InterconnectTree tree = testing::single_segment(4e-5, 5e-7, 2e-7, 0.0);
  for (const Solver s : {Solver::fdm, Solver::ext, Solver::ei}) {
    SimulationConfig cfg;
    cfg.solver = s;
    const SimulationResult r = simulate_two_phase(tree, cfg);
    EXPECT_FALSE(r.t_nuc) << to_string(s);
    EXPECT_TRUE(r.delta_r.empty());
    EXPECT_FALSE(r.warnings.empty());
    EXPECT_EQ(r.trajectory_nuc.size(), cfg.nucleation.steps + 1);
  }
}

TEST(TwoPhase, SolversAgreeOnASmallTree) {
  const InterconnectTree tree = generate_synthetic_tree(5, 1);
  SimulationConfig cfg;
  cfg.critical_stress = 3e8;
  cfg.nucleation.substeps = 200;
  cfg.post_void.substeps = 200;
  cfg.q = static_cast<int>(assemble_nucleation(tree, cfg.points_per_segment).size());
  const SimulationResult fdm = simulate_two_phase(tree, cfg);
  ASSERT_TRUE(fdm.t_nuc);
  ASSERT_FALSE(fdm.delta_r.empty());
  // At full order ext repeats the implicit steps exactly; ei integrates
  // exactly and differs only by the first-order time error of the baseline.
  const std::pair<Solver, double> cases[] = {{Solver::ext, 1e-6}, {Solver::ei, 1e-3}};
  for (const auto& [s, tol] : cases) {
    SimulationConfig c = cfg;
    c.solver = s;
    const SimulationResult r = simulate_two_phase(tree, c);
    ASSERT_TRUE(r.t_nuc) << to_string(s);
    EXPECT_EQ(r.nucleation_node, fdm.nucleation_node);
    EXPECT_NEAR(*r.t_nuc, *fdm.t_nuc, tol * *fdm.t_nuc) << to_string(s);
    EXPECT_NEAR(r.delta_r.back(), fdm.delta_r.back(), tol * fdm.delta_r.back()) << to_string(s);
  }
}

TEST(TwoPhase, PostVoidRelaxesTheVoidAndReportsResistance) {
  const InterconnectTree tree = generate_synthetic_tree(5, 1);
  SimulationConfig cfg;
  cfg.critical_stress = 3e8;
  cfg.post_void.horizon_factor = 50.0;
  const SimulationResult r = simulate_two_phase(tree, cfg);
  ASSERT_TRUE(r.t_nuc);
  const int v = *r.nucleation_node;
  const auto& post = r.trajectory_post;
  ASSERT_GT(post.size(), 2u);
  EXPECT_DOUBLE_EQ(post.times.front(), *r.t_nuc);
  EXPECT_NEAR(post.states.front()[v], 3e8, 1e-6 * 3e8);
  EXPECT_LT(std::abs(post.states.back()[v]), 1e-3 * 3e8);
  EXPECT_EQ(r.void_volume.size(), post.size());
  EXPECT_EQ(r.delta_r.size(), post.size());
  EXPECT_GT(r.delta_r.back(), 0.0);
  EXPECT_GT(r.critical_void_volume, 0.0);
  EXPECT_GE(r.voided_segment, 0);
}

TEST(TwoPhase, FullGridAndFastem) {
  const InterconnectTree tree = generate_synthetic_tree(3, 2);
  SimulationConfig cfg;
  cfg.full_grid = true;
  cfg.critical_stress = 1.5e8;
  const SimulationResult r = simulate_two_phase(tree, cfg);
  ASSERT_TRUE(r.t_nuc);
  EXPECT_EQ(r.trajectory_nuc.states.front().size(), assemble_nucleation(tree, 11).size());
  SimulationConfig fe;
  fe.solver = Solver::ext;
  fe.fastem = true;
  fe.q = 12;
  fe.critical_stress = 1.5e8;
  const SimulationResult f = simulate_two_phase(tree, fe);
  ASSERT_TRUE(f.t_nuc);
  EXPECT_NEAR(*f.t_nuc, *r.t_nuc, 0.05 * *r.t_nuc);
  SimulationConfig bad = fe;
  bad.solver = Solver::ei;
  EXPECT_THROW(simulate_two_phase(tree, bad), ParameterError);
}

}  // namespace
}  // namespace emkrylov
