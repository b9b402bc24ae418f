// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "emkrylov/ei_rakrylov.hpp"
#include "emkrylov/em_engine.hpp"
#include "emkrylov/ext_rakrylov.hpp"
#include "emkrylov/fdm.hpp"
#include "emkrylov/tuner.hpp"
#include "support.hpp"

namespace {

using namespace emkrylov;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, int digits = 3) {
  std::ostringstream o;
  o.precision(digits);
  o << v;
  return o.str();
}

// Fine-grid FDM run used as the accuracy reference.
constexpr int kRefSubstepsNuc = 10000;
constexpr int kRefSubstepsPost = 1000;
constexpr std::size_t kSteps = 100;

SimulationConfig base_config(Solver solver, std::size_t steps = kSteps) {
  SimulationConfig cfg;
  cfg.solver = solver;
  cfg.nucleation.steps = steps;
  cfg.post_void.steps = steps;
  return cfg;
}

SimulationConfig reference_config() {
  SimulationConfig cfg = base_config(Solver::fdm);
  cfg.nucleation.substeps = kRefSubstepsNuc;
  cfg.post_void.substeps = kRefSubstepsPost;
  return cfg;
}

// ext integrates its reduced model on the reference's substeps.
SimulationConfig krylov_config(Solver solver) {
  SimulationConfig cfg = base_config(solver);
  if (solver == Solver::ext) {
    cfg.nucleation.substeps = kRefSubstepsNuc;
    cfg.post_void.substeps = kRefSubstepsPost;
  }
  return cfg;
}

std::size_t worker_count() { return cli::resolve_threads(0, std::getenv("EMKRYLOV_THREADS")); }

// The 500-segment benchmark: the first generator seed whose reference run
// nucleates and grows a supercritical void.
struct Benchmark {
  InterconnectTree tree;
  std::uint64_t seed;
  Reference ref;
};

const Benchmark& benchmark_tree() {
  static const Benchmark bench = [] {
    for (std::uint64_t seed = 1;; ++seed) {
      InterconnectTree tree = generate_synthetic_tree(500, seed);
      const SimulationResult r = simulate_two_phase(tree, reference_config());
      if (r.t_nuc && r.final_delta_r().value_or(0.0) > 0.0) {
        return Benchmark{std::move(tree), seed, reference_from(r)};
      }
    }
  }();
  return bench;
}

struct Tuned {
  TunerResult result;
  Evaluation best;
  double seconds = 0.0;
};

Tuned tune(const InterconnectTree& tree, Solver solver, const Reference& ref) {
  TunerConfig cfg;
  cfg.threads = worker_count();
  const auto t0 = Clock::now();
  Tuned t;
  t.result = coordinate_descent(cfg, tree, krylov_config(solver), ref);
  t.seconds = since(t0);
  for (const Evaluation& ev : t.result.log) {
    if (ev.candidate == t.result.best) t.best = ev;
  }
  return t;
}

const Tuned& benchmark_tuning(Solver solver) {
  static const Tuned ext = tune(benchmark_tree().tree, Solver::ext, benchmark_tree().ref);
  static const Tuned ei = tune(benchmark_tree().tree, Solver::ei, benchmark_tree().ref);
  return solver == Solver::ext ? ext : ei;
}

std::string describe(const char* name, const Tuned& t) {
  const Candidate& c = t.result.best;
  return std::string(name) + " (" + std::to_string(c.q) + ", " + num(c.eta_nuc) + ", " +
         num(c.eta_post) + "): eps_nuc " + num(t.best.pe_nuc) + "%, eps_post " +
         num(t.best.pe_post) + "%, J " + num(t.result.j) + " after " +
         std::to_string(t.result.iterations) + " iterations";
}

Verdict full_order_equivalence() {
  const auto t0 = Clock::now();
  const InterconnectTree tree = testing::single_segment(5e-5, 5e-7, 2e-7, 1e10);
  const LtiSystem sys = assemble_nucleation(tree, 20);
  const double tau = testing::slow_time(tree);
  const auto grid = uniform_grid(20 * tau, 100);
  // As many substeps as fit the time budget; backward Euler is first order
  // in time, so this bounds how close it gets to the exact exponential.
  const int substeps = 20000;
  const StressTrajectory fdm = backward_euler(sys, grid, {}, substeps);
  const ReducedModel m = extended_rational_arnoldi(sys, 1.0 / tau, 20, sys.x0);
  const double e_ext = max_relative_l2(reduced_transient(m, sys, grid, {}, substeps), fdm);
  const double e_ei = max_relative_l2(ei_transient(sys, grid, 20, 1.0 / tau).trajectory, fdm);
  const double secs = since(t0);
  return {e_ext <= 1e-6 && e_ei <= 1e-6 && secs < 1.0,
          "n " + std::to_string(sys.size()) + ", ext " + num(e_ext) + ", ei " + num(e_ei) +
              " vs fdm with " + std::to_string(substeps) +
              " substeps per step (bound 1e-6), " + num(secs) + " s (bound 1 s)"};
}

Verdict dense_exponential_oracle() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  Eigen::Index largest = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const LtiSystem sys = testing::random_diffusion_system(seed, 50);
    largest = std::max(largest, sys.size());
    const double horizon = 50.0 / std::abs(Eigen::MatrixXd(sys.A).diagonal().mean());
    const auto grid = uniform_grid(horizon, 20);
    const EiSolution sol = ei_transient(sys, grid, static_cast<int>(sys.size()), 10.0 / horizon);
    for (std::size_t k = 1; k < grid.size(); ++k) {
      const Eigen::VectorXd ref = testing::dense_exponential_state(sys, grid[k]);
      worst = std::max(worst, (sol.trajectory.states[k] - ref).norm() / ref.norm());
    }
  }
  const double secs = since(t0);
  return {worst <= 1e-8 && secs < 10.0,
          "20 systems up to n " + std::to_string(largest) + ", worst relative error " +
              num(worst) + " (bound 1e-8), " + num(secs) + " s"};
}

Verdict analytic_steady_state() {
  const double L = 5e-5;
  const InterconnectTree tree = testing::single_segment(L, 5e-7, 2e-7, 2e10);
  const Segment& seg = tree.segments()[0];
  const double G = drive_force(seg, tree.materials());
  const double kappa = diffusivity(seg, tree.materials());
  const double tau = testing::slow_time(tree);

  const LtiSystem sys = assemble_nucleation(tree, 11);
  const StressTrajectory steady = backward_euler(sys, uniform_grid(60 * tau, 60));
  const Eigen::VectorXd& end = steady.states.back();
  const double e_a = std::abs(end[0] - G * L / 2) / (G * L / 2);
  const double e_b = std::abs(end[1] + G * L / 2) / (G * L / 2);

  // Spatial order on the transient: fine time steps, series solution.
  const double t = 0.02 * L * L / kappa;
  std::vector<double> errors;
  for (const int points : {11, 21, 41, 81}) {
    const LtiSystem s = assemble_nucleation(tree, points);
    const StressTrajectory x = backward_euler(s, std::vector<double>{0.0, t}, {}, 100000);
    double err = 0.0;
    for (int k = 0; k < points; ++k) {
      const int idx = s.segment_points[0][static_cast<std::size_t>(k)];
      const double exact = testing::blocked_segment_stress(G, L, kappa, L * k / (points - 1), t);
      err = std::max(err, std::abs(x.states.back()[idx] - exact));
    }
    errors.push_back(err);
  }
  double order = INFINITY;
  std::string orders;
  for (std::size_t i = 1; i < errors.size(); ++i) {
    const double p = std::log2(errors[i - 1] / errors[i]);
    order = std::min(order, p);
    orders += (i > 1 ? ", " : "") + num(p);
  }
  return {std::max(e_a, e_b) <= 0.01 && order >= 1.8,
          "endpoints +-GL/2 within " + num(100 * std::max(e_a, e_b)) +
              "% (bound 1%), observed orders " + orders + " (bound 1.8)"};
}

Verdict tuned_accuracy() {
  const auto t0 = Clock::now();
  const Benchmark& b = benchmark_tree();
  const Tuned& ext = benchmark_tuning(Solver::ext);
  const Tuned& ei = benchmark_tuning(Solver::ei);
  auto ok = [](const Tuned& t) { return t.best.pe_nuc <= 0.1 && t.best.pe_post <= 0.1; };
  const double secs = since(t0);
  return {ok(ext) && ok(ei) && secs < 300.0,
          "seed " + std::to_string(b.seed) + ", reference t_nuc " + num(b.ref.t_nuc, 8) +
              " s, dR " + num(b.ref.delta_r, 8) + " Ohm; " + describe("ext", ext) + "; " +
              describe("ei", ei) + " (bound 0.1% each), " + num(secs) + " s"};
}

Verdict fastem_contrast() {
  const InterconnectTree wire = testing::straight_wire(100, 1);
  const Reference ref = reference_from(simulate_two_phase(wire, reference_config()));
  SimulationConfig fe = krylov_config(Solver::ext);
  fe.fastem = true;
  fe.q = 50;
  const SimulationResult f = simulate_two_phase(wire, fe);
  const double e_fast = f.t_nuc ? percentage_error(ref.t_nuc, *f.t_nuc) : INFINITY;
  const Tuned tuned = tune(wire, Solver::ext, ref);
  const double e_tuned = tuned.best.pe_nuc;
  return {e_fast > e_tuned && e_tuned <= 1.0 && tuned.result.best.q <= 6,
          "fastem q 50 eps_nuc " + num(e_fast) + "%, " + describe("tuned ext", tuned)};
}

Verdict speedup_scaling() {
  const InterconnectTree& tree = benchmark_tree().tree;
  auto seconds = [&](Solver solver, std::size_t steps) {
    double best = INFINITY;
    for (int rep = 0; rep < 5; ++rep) {
      const SimulationResult r = simulate_two_phase(tree, base_config(solver, steps));
      best = std::min(best, r.seconds_nuc + r.seconds_post);
    }
    return best;
  };
  bool pass = true;
  std::string detail = std::to_string(tree.segment_count()) + " segments, identical grids;";
  for (const Solver s : {Solver::ext, Solver::ei}) {
    std::vector<double> speedup;
    for (const std::size_t steps : {50, 100, 500}) {
      speedup.push_back(seconds(Solver::fdm, steps) / seconds(s, steps));
    }
    const double growth = speedup[2] / speedup[0];
    pass = pass && growth >= 3.0 && speedup[1] >= 10.0;
    detail += std::string(" ") + std::string(to_string(s)) + " speedup " + num(speedup[0]) +
              "x / " + num(speedup[1]) + "x / " + num(speedup[2]) + "x at 50/100/500 steps, growth " +
              num(growth) + "x (bounds: growth 3x, 10x at 100 steps);";
  }
  return {pass, detail};
}

Verdict invariant_suites() {
  const auto t0 = Clock::now();
  const std::vector<testing::PropertyReport> reports{
      testing::check_arnoldi_relation(100),   testing::check_orthonormality(100),
      testing::check_fdm_conservation(100),   testing::check_delta_r_monotone(100),
      testing::check_tuner_trace(100),        testing::check_detection_monotone(100)};
  bool pass = true;
  std::string detail;
  for (const auto& r : reports) {
    pass = pass && r.passed();
    detail += "\n    " + testing::describe(r);
  }
  const double secs = since(t0);
  return {pass && secs < 120.0, num(secs) + " s (bound 120 s)" + detail};
}

Verdict tuner_efficacy() {
  const Tuned& ext = benchmark_tuning(Solver::ext);
  const Tuned& ei = benchmark_tuning(Solver::ei);
  auto ok = [](const Tuned& t) { return t.result.j <= 0.1 && t.result.iterations <= 20; };
  return {ok(ext) && ok(ei), "start (4, 1, 1); " + describe("ext", ext) + ", " +
                                 std::to_string(ext.result.evaluations) + " evaluations in " +
                                 num(ext.seconds) + " s; " + describe("ei", ei) + ", " +
                                 std::to_string(ei.result.evaluations) + " evaluations in " +
                                 num(ei.seconds) + " s (bound J 0.1)"};
}

Verdict post_void_physics() {
  const InterconnectTree tree = generate_synthetic_tree(5, 1);
  bool pass = true;
  std::string detail;
  for (const Solver s : {Solver::fdm, Solver::ext, Solver::ei}) {
    SimulationConfig cfg = s == Solver::fdm ? reference_config() : krylov_config(s);
    cfg.q = 10;
    cfg.critical_stress = 3e8;
    cfg.post_void.horizon_factor = 50.0;
    const SimulationResult r = simulate_two_phase(tree, cfg);
    if (!r.t_nuc) {
      pass = false;
      detail += std::string(" ") + std::string(to_string(s)) + ": no nucleation;";
      continue;
    }
    const int v = *r.nucleation_node;
    const auto& states = r.trajectory_post.states;
    // The sink holds the void at a slightly negative steady value, so the
    // signed stress must fall without rebounding.
    bool monotone = true;
    for (std::size_t k = 1; k < states.size(); ++k) {
      monotone = monotone && states[k][v] <= states[k - 1][v] + 1e-12 * 3e8;
    }
    const double final_void = std::abs(states.back()[v]) / 3e8;
    double top_other = -INFINITY;
    for (Eigen::Index i = 0; i < states.back().size(); ++i) {
      if (i != v) top_other = std::max(top_other, states.back()[i]);
    }
    const bool ok = monotone && final_void <= 1e-3 && top_other < 0.0;
    pass = pass && ok;
    detail += std::string(" ") + std::string(to_string(s)) + ": void node " +
              std::to_string(v) + (monotone ? " decays monotonically" : " not monotone") +
              " to " + num(final_void) + " sigma_crit, largest other terminal stress " +
              num(top_other) + " Pa;";
  }
  return {pass, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"full-order equivalence", full_order_equivalence},
      {"dense-exponential oracle", dense_exponential_oracle},
      {"analytic steady state", analytic_steady_state},
      {"sub-0.1% accuracy on 500 segments", tuned_accuracy},
      {"fastem contrast on a 100-segment wire", fastem_contrast},
      {"speedup scaling", speedup_scaling},
      {"invariant suites", invariant_suites},
      {"tuner efficacy", tuner_efficacy},
      {"post-void physics", post_void_physics},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("criterion %zu %s: %s [%.2f s] %s\n", i + 1, v.pass ? "PASS" : "FAIL",
                criteria[i].first, since(t0), v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
