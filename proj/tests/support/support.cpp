#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include "emkrylov/ei_rakrylov.hpp"
#include "emkrylov/em_engine.hpp"
#include "emkrylov/ext_rakrylov.hpp"
#include "emkrylov/fdm.hpp"
#include "emkrylov/linalg.hpp"
#include "emkrylov/random.hpp"
#include "emkrylov/tuner.hpp"

namespace emkrylov::testing {

namespace fs = std::filesystem;

InterconnectTree single_segment(double length, double width, double height, double current,
                                const MaterialParams& mat) {
  std::vector<TreeNode> nodes{{0, {0.0, 0.0}, NodeKind::terminal},
                              {1, {length, 0.0}, NodeKind::terminal}};
  std::vector<Segment> segs{{0, 0, 1, length, width, height, current}};
  return InterconnectTree(std::move(nodes), std::move(segs), mat);
}

InterconnectTree straight_wire(std::size_t segments, std::uint64_t seed) {
  GeneratorRanges ranges;
  ranges.random_sign = false;
  return generate_synthetic_tree(segments, seed, ranges, Topology::chain);
}

InterconnectTree random_tree(std::uint64_t seed, std::size_t max_segments) {
  PortableRng rng(seed * 7919 + 17);
  const std::size_t n = 1 + rng.below(max_segments);
  return generate_synthetic_tree(n, seed);
}

double slow_time(const InterconnectTree& tree) { return estimate_shift_times(tree).tau_nuc; }

LtiSystem random_diffusion_system(std::uint64_t seed, Eigen::Index max_n) {
  PortableRng rng(seed * 104729 + 3);
  for (;;) {
    const InterconnectTree tree = random_tree(rng.next_u64(), 4);
    const int points = 3 + static_cast<int>(rng.below(9));
    LtiSystem sys = assemble_nucleation(tree, points);
    if (sys.size() > max_n) continue;
    if (seed % 2 == 0) return sys;
    // Post-void: start from the nucleation state a slow time in, with the
    // void at a random tree node.
    const Eigen::VectorXd stress = dense_exponential_state(sys, slow_time(tree));
    const int node = static_cast<int>(rng.below(sys.n_tree_nodes));
    return assemble_postvoid(sys, node, tree.materials(), stress);
  }
}

Eigen::VectorXd dense_exponential_state(const LtiSystem& sys, double t) {
  // With w the control volumes, S = W^{1/2} A W^{-1/2} is symmetric, so the
  // exponential follows from one dense eigendecomposition, mode by mode:
  // c(t) = e^{lambda t} c(0) + (e^{lambda t} - 1) / lambda * beta.
  const Eigen::ArrayXd d = sys.control_volume.array().sqrt();
  Eigen::MatrixXd S = d.matrix().asDiagonal() * Eigen::MatrixXd(sys.A) *
                      d.inverse().matrix().asDiagonal();
  const double asym = (S - S.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * S.cwiseAbs().maxCoeff()) {
    throw std::runtime_error("operator is not symmetric under the volume weighting");
  }
  S = 0.5 * (S + S.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  const Eigen::MatrixXd& Q = eig.eigenvectors();
  const Eigen::VectorXd c0 = Q.transpose() * (d * sys.x0.array()).matrix();
  const Eigen::VectorXd beta = Q.transpose() * (d * sys.b().array()).matrix();
  Eigen::VectorXd c(c0.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double lt = eig.eigenvalues()[i] * t;
    const double phi = lt == 0.0 ? t : std::expm1(lt) / eig.eigenvalues()[i];
    c[i] = std::exp(lt) * c0[i] + phi * beta[i];
  }
  return ((Q * c).array() / d).matrix();
}

double blocked_segment_stress(double G, double L, double kappa, double x, double t, int terms) {
  double sum = G * (L / 2.0 - x);
  for (int n = 1; n <= terms; n += 2) {
    const double k = n * std::numbers::pi / L;
    const double decay = std::exp(-kappa * k * k * t);
    if (decay == 0.0) break;
    sum -= 4.0 * G * L / ((n * std::numbers::pi) * (n * std::numbers::pi)) * std::cos(k * x) *
           decay;
  }
  return sum;
}

namespace {

void tally(PropertyReport& r, double measure) {
  ++r.instances;
  r.worst = std::max(r.worst, measure);
  if (!(measure <= r.bound)) ++r.failures;
}

double log_uniform(PortableRng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

Eigen::VectorXd random_vector(PortableRng& rng, Eigen::Index n, double scale) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

PropertyReport check_arnoldi_relation(int instances, std::uint64_t seed) {
  PropertyReport r{"arnoldi relation", 0, 0, 0.0, 1e-8, {}};
  PortableRng rng(seed);
  for (int i = 0; i < instances; ++i) {
    const InterconnectTree tree = random_tree(rng.next_u64());
    const LtiSystem sys = assemble_nucleation(tree, 3 + static_cast<int>(rng.below(9)));
    const double shift = 1.0 / (log_uniform(rng, 0.1, 20.0) * slow_time(tree));
    const int q = 2 + static_cast<int>(rng.below(11));
    const Eigen::VectorXd v = random_vector(rng, sys.size(), 1.0);
    const ShiftInvert op(sys.A, shift);
    const KrylovBasis basis = rational_krylov_basis(op, v, q);
    const Eigen::Index k = basis.order();
    Eigen::MatrixXd MV(sys.size(), k);
    for (Eigen::Index j = 0; j < k; ++j) MV.col(j) = op.apply(basis.V.col(j));
    Eigen::MatrixXd R = MV - basis.V * basis.H;
    if (basis.v_next) R.col(k - 1) -= basis.h_next * *basis.v_next;
    tally(r, R.norm() / MV.norm());
  }
  return r;
}

PropertyReport check_orthonormality(int instances, std::uint64_t seed) {
  PropertyReport r{"basis orthonormality", 0, 0, 0.0, 1e-10, {}};
  PortableRng rng(seed);
  for (int i = 0; i < instances; ++i) {
    const InterconnectTree tree = random_tree(rng.next_u64());
    LtiSystem sys = assemble_nucleation(tree, 3 + static_cast<int>(rng.below(9)));
    if (i % 2 == 1) {
      sys = assemble_postvoid(sys, static_cast<int>(rng.below(sys.n_tree_nodes)),
                              tree.materials(), random_vector(rng, sys.size(), 1e8));
    }
    const double shift = 1.0 / (log_uniform(rng, 0.1, 20.0) * slow_time(tree));
    const int q = 2 + static_cast<int>(rng.below(11));
    const Eigen::MatrixXd V = i % 4 < 2
                                  ? extended_rational_arnoldi(sys, shift, q, sys.x0).V
                                  : EiPropagator(sys, q, shift).basis().V;
    const Eigen::Index k = V.cols();
    tally(r, (V.transpose() * V - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff());
  }
  r.note = "ext and ei bases, nucleation and post-void systems";
  return r;
}

PropertyReport check_fdm_conservation(int instances, std::uint64_t seed) {
  PropertyReport r{"fdm conservation", 0, 0, 0.0, 1e-8, {}};
  PortableRng rng(seed);
  for (int i = 0; i < instances; ++i) {
    const InterconnectTree tree = random_tree(rng.next_u64());
    const LtiSystem sys = assemble_nucleation(tree, 3 + static_cast<int>(rng.below(9)));
    const auto grid = uniform_grid(log_uniform(rng, 0.5, 20.0) * slow_time(tree),
                                   10 + rng.below(41));
    const StressTrajectory traj = backward_euler(sys, grid, {}, 1 + static_cast<int>(rng.below(3)));
    const Eigen::VectorXd& w = sys.control_volume;
    const double initial = w.dot(sys.x0);
    double worst = 0.0;
    for (const Eigen::VectorXd& x : traj.states) {
      const double scale = w.cwiseAbs().dot(x.cwiseAbs());
      if (scale > 0.0) worst = std::max(worst, std::abs(w.dot(x) - initial) / scale);
    }
    tally(r, worst);
  }
  return r;
}

PropertyReport check_delta_r_monotone(int instances, std::uint64_t seed) {
  // Measure: number of decreasing or negative samples per instance.
  PropertyReport r{"delta-R monotone nonnegative", 0, 0, 0.0, 0.0, {}};
  PortableRng rng(seed);
  int growing = 0;
  int nucleated = 0;
  for (int i = 0; i < instances; ++i) {
    const InterconnectTree tree = random_tree(rng.next_u64());
    SimulationConfig cfg;
    cfg.solver = static_cast<Solver>(i % 3);
    cfg.q = 6;
    cfg.points_per_segment = 5 + static_cast<int>(rng.below(7));
    cfg.nucleation.steps = 40;
    cfg.post_void.steps = 40;
    // Threshold a random fraction of the way to the steady peak, so that
    // nucleation happens.
    const LtiSystem sys = assemble_nucleation(tree, cfg.points_per_segment);
    const Eigen::VectorXd steady = -steady_offset(sys);
    const double peak = steady.head(static_cast<Eigen::Index>(sys.n_tree_nodes)).maxCoeff();
    cfg.critical_stress = rng.uniform(0.2, 0.9) * peak;
    const SimulationResult res = simulate_two_phase(tree, cfg);
    if (res.t_nuc) ++nucleated;
    double bad = 0.0;
    double prev = 0.0;
    for (const double d : res.delta_r) {
      if (!(d >= 0.0) || d < prev) bad += 1.0;
      prev = d;
    }
    if (!res.delta_r.empty() && res.delta_r.back() > 0.0) ++growing;
    tally(r, bad);
  }
  r.note = std::to_string(nucleated) + " nucleated, " + std::to_string(growing) +
           " with a supercritical void; fdm, ext and ei in turn";
  return r;
}

PropertyReport check_tuner_trace(int instances, std::uint64_t seed) {
  // Measure: largest increase between consecutive iteration-end J values,
  // plus any bound or consistency violation counted as infinity.
  PropertyReport r{"tuner J trace nonincreasing", 0, 0, 0.0, 0.0, {}};
  PortableRng rng(seed);
  for (int i = 0; i < instances; ++i) {
    const double eta_n = log_uniform(rng, 0.1, 20.0);
    const double eta_p = log_uniform(rng, 0.1, 20.0);
    const double wiggle = rng.uniform(0.0, 2.0);
    const double dead = rng.uniform(5.0, 40.0);  // eta_nuc above this never nucleates
    std::vector<double> by_order{rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0, 3),
                                 rng.uniform(0, 3)};
    TunerConfig cfg;
    cfg.start = Candidate{4, 1.0, 1.0};
    cfg.max_iterations = 1 + static_cast<int>(rng.below(20));
    const Evaluator eval = [&](const Candidate& c) {
      Evaluation ev;
      ev.candidate = c;
      if (c.eta_nuc > dead) {
        ev.j = cfg.penalty;
        return ev;
      }
      ev.nucleated = true;
      ev.pe_nuc = std::pow(std::log(c.eta_nuc / eta_n), 2) + by_order[c.q - 3] +
                  wiggle * (1.0 + std::sin(7.0 * c.eta_nuc + c.q));
      ev.pe_post = std::pow(std::log(c.eta_post / eta_p), 2) +
                   wiggle * (1.0 + std::cos(5.0 * c.eta_post));
      ev.j = ev.pe_nuc + ev.pe_post;
      return ev;
    };
    const TunerResult res = coordinate_descent(cfg, eval);
    double worst = 0.0;
    for (std::size_t k = 1; k < res.trace.size(); ++k) {
      worst = std::max(worst, res.trace[k] - res.trace[k - 1]);
    }
    bool consistent = !res.trace.empty() && res.j == res.trace.back();
    for (const double t : res.trace) consistent = consistent && res.j <= t;
    for (const Evaluation& ev : res.log) {
      const Candidate& c = ev.candidate;
      consistent = consistent && c.eta_nuc >= cfg.eta_min && c.eta_nuc <= cfg.eta_max &&
                   c.eta_post >= cfg.eta_min && c.eta_post <= cfg.eta_max;
    }
    if (!consistent) worst = INFINITY;
    tally(r, worst);
  }
  r.note = "synthetic multimodal objectives with a no-nucleation region";
  return r;
}

PropertyReport check_detection_monotone(int instances, std::uint64_t seed) {
  // Measure: number of threshold pairs whose detection times are out of order.
  PropertyReport r{"detect_nucleation monotone in sigma_crit", 0, 0, 0.0, 0.0, {}};
  PortableRng rng(seed);
  for (int i = 0; i < instances; ++i) {
    const InterconnectTree tree = random_tree(rng.next_u64());
    const LtiSystem sys = assemble_nucleation(tree, 3 + static_cast<int>(rng.below(9)));
    std::vector<int> rows(sys.n_tree_nodes);
    for (std::size_t k = 0; k < rows.size(); ++k) rows[k] = static_cast<int>(k);
    const auto grid = uniform_grid(5.0 * slow_time(tree), 20 + rng.below(30));
    const StressTrajectory traj = backward_euler(sys, grid, rows);
    double top = 0.0;
    for (const Eigen::VectorXd& x : traj.states) top = std::max(top, x.maxCoeff());
    std::vector<double> levels;
    for (int k = 0; k < 12; ++k) levels.push_back(rng.uniform(-0.1, 1.2) * top);
    std::sort(levels.begin(), levels.end());
    double bad = 0.0;
    for (std::size_t k = 1; k < levels.size(); ++k) {
      const auto lo = detect_nucleation(traj, levels[k - 1]);
      const auto hi = detect_nucleation(traj, levels[k]);
      if (hi && (!lo || lo->time > hi->time)) bad += 1.0;
    }
    tally(r, bad);
  }
  return r;
}

std::string describe(const PropertyReport& report) {
  std::ostringstream out;
  out << report.name << ": " << report.instances << " instances, " << report.failures
      << " failing, worst " << report.worst << " (bound " << report.bound << ")";
  if (!report.note.empty()) out << "; " << report.note;
  return out.str();
}

std::string scratch_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const fs::path dir = fs::temp_directory_path() /
                       ("emkrylov-" + tag + "-" + std::to_string(::getpid()) + "-" +
                        std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace emkrylov::testing
