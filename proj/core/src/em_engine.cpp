#include "emkrylov/em_engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include "emkrylov/ei_rakrylov.hpp"
#include "emkrylov/error.hpp"
#include "emkrylov/ext_rakrylov.hpp"
#include "emkrylov/fdm.hpp"

namespace emkrylov {

std::string_view to_string(Solver solver) {
  switch (solver) {
    case Solver::fdm: return "fdm";
    case Solver::ext: return "ext";
    case Solver::ei: return "ei";
  }
  return "fdm";
}

std::optional<Solver> solver_from_string(std::string_view text) {
  if (text == "fdm") return Solver::fdm;
  if (text == "ext" || text == "ext-rakrylov") return Solver::ext;
  if (text == "ei" || text == "ei-rakrylov") return Solver::ei;
  return std::nullopt;
}

ShiftTimes estimate_shift_times(const InterconnectTree& tree) {
  const TreeStats stats = tree_stats(tree);
  double kappa_sum = 0.0;
  for (const Segment& s : tree.segments()) kappa_sum += diffusivity(s, tree.materials());
  const double kappa = kappa_sum / static_cast<double>(tree.segment_count());
  const double pi2 = std::numbers::pi * std::numbers::pi;
  ShiftTimes st;
  st.tau_nuc = stats.l_avg * stats.l_avg / (pi2 * kappa);
  st.tau_post = stats.l_max * stats.l_max / (pi2 * kappa);
  return st;
}

namespace {

Eigen::Index first_argmax(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

// Fraction of the step [prev, cur] at which entry `i` reaches `level`.
double crossing_fraction(double prev, double cur, double level) {
  if (cur <= prev) return 1.0;
  return std::clamp((level - prev) / (cur - prev), 0.0, 1.0);
}

}  // namespace

std::optional<Nucleation> detect_nucleation(const StressTrajectory& traj, double sigma_crit) {
  if (traj.size() == 0) throw ParameterError("empty trajectory");
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const Eigen::VectorXd& x = traj.states[k];
    if (x.size() == 0) continue;
    const Eigen::Index i = first_argmax(x);
    if (!(x[i] >= sigma_crit)) continue;
    Nucleation nuc;
    nuc.index = traj.row_index(i);
    if (k == 0) {
      nuc.time = traj.times[0];
    } else {
      const double theta = crossing_fraction(traj.states[k - 1][i], x[i], sigma_crit);
      nuc.time = traj.times[k - 1] + theta * (traj.times[k] - traj.times[k - 1]);
    }
    return nuc;
  }
  return std::nullopt;
}

double void_volume(const Eigen::VectorXd& state, const LtiSystem& sys,
                   const InterconnectTree& tree) {
  if (state.size() != sys.size()) throw ParameterError("state length does not match the system");
  return -sys.control_volume.dot(state) / tree.materials().bulk_modulus;
}

std::vector<double> void_volume_by_segment(const Eigen::VectorXd& state, const LtiSystem& sys,
                                           const InterconnectTree& tree) {
  if (state.size() != sys.size()) throw ParameterError("state length does not match the system");
  const double bulk = tree.materials().bulk_modulus;
  std::vector<double> out(sys.segment_points.size(), 0.0);
  for (std::size_t e = 0; e < sys.segment_points.size(); ++e) {
    const auto& pts = sys.segment_points[e];
    const double cell = sys.area[e] * sys.dx[e];
    double sum = 0.5 * cell * (state[pts.front()] + state[pts.back()]);
    for (std::size_t j = 1; j + 1 < pts.size(); ++j) sum += cell * state[pts[j]];
    out[e] = -sum / bulk;
  }
  return out;
}

double resistance_bracket(const Segment& segment, const MaterialParams& mat) {
  const double W = segment.width;
  const double H = segment.height;
  return mat.resistivity_ta / (mat.barrier_thickness * (2.0 * H + W)) -
         mat.resistivity_cu / (H * W);
}

double critical_void_volume(const Segment& segment, const MaterialParams& mat) {
  return mat.critical_void_volume.value_or(segment.width * segment.width * segment.height);
}

double resistance_change(double void_volume, const Segment& segment, const MaterialParams& mat) {
  const double excess = void_volume - critical_void_volume(segment, mat);
  if (!(excess > 0.0)) return 0.0;
  return excess / (segment.width * segment.height) * resistance_bracket(segment, mat);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct PhaseSpec {
  const LtiSystem* sys = nullptr;
  std::vector<double> grid;
  int substeps = 1;
  bool detect = false;
  double sigma_crit = 0.0;
  bool full = false;  // record every unknown, else the tree-node rows
  double shift = 0.0;
  int q = 0;
};

struct PhaseOutput {
  StressTrajectory traj;
  std::vector<double> volume_moment;  // control_volume . x per sample
  std::optional<Nucleation> nuc;
  Eigen::VectorXd state_at_nuc;
  int order = 0;
};

Eigen::VectorXd pick(const Eigen::VectorXd& x, const PhaseSpec& spec) {
  if (spec.full) return x;
  return x.head(static_cast<Eigen::Index>(spec.sys->n_tree_nodes));
}

void start_output(PhaseOutput& out, const PhaseSpec& spec, SolverTag tag) {
  out.traj.solver_tag = tag;
  if (!spec.full) {
    out.traj.rows.resize(spec.sys->n_tree_nodes);
    std::iota(out.traj.rows.begin(), out.traj.rows.end(), 0);
  }
  out.traj.times.reserve(spec.grid.size() + 1);
  out.traj.states.reserve(spec.grid.size() + 1);
}

// Records the crossing found between two node-row samples and the full state
// at the crossing.
void record_crossing(PhaseOutput& out, const PhaseSpec& spec, double t_prev, double t_cur,
                     const Eigen::VectorXd& nodes_prev, const Eigen::VectorXd& nodes_cur,
                     const Eigen::VectorXd& full_prev, const Eigen::VectorXd& full_cur) {
  const Eigen::Index i = first_argmax(nodes_cur);
  const double theta = crossing_fraction(nodes_prev[i], nodes_cur[i], spec.sigma_crit);
  out.nuc = Nucleation{t_prev + theta * (t_cur - t_prev), static_cast<int>(i)};
  out.state_at_nuc = full_prev + theta * (full_cur - full_prev);
}

void finish_with_crossing(PhaseOutput& out, const PhaseSpec& spec) {
  if (!out.nuc) return;
  if (out.traj.times.empty() || out.nuc->time > out.traj.times.back()) {
    out.traj.times.push_back(out.nuc->time);
    out.traj.states.push_back(pick(out.state_at_nuc, spec));
    out.volume_moment.push_back(spec.sys->control_volume.dot(out.state_at_nuc));
  }
}

PhaseOutput run_fdm(const PhaseSpec& spec) {
  PhaseOutput out;
  start_output(out, spec, SolverTag::fdm);
  const LtiSystem& sys = *spec.sys;
  const auto n_nodes = static_cast<Eigen::Index>(sys.n_tree_nodes);
  const auto stride = static_cast<std::size_t>(spec.substeps);

  Eigen::VectorXd prev;
  double t_prev = 0.0;
  backward_euler_observed(sys, spec.grid, [&](std::size_t k, double t, const Eigen::VectorXd& x) {
    if (spec.detect) {
      const Eigen::VectorXd nodes = x.head(n_nodes);
      if (nodes.maxCoeff() >= spec.sigma_crit) {
        if (k == 0) {
          out.nuc = Nucleation{t, static_cast<int>(first_argmax(nodes))};
          out.state_at_nuc = x;
          out.traj.times.push_back(t);
          out.traj.states.push_back(pick(x, spec));
          out.volume_moment.push_back(sys.control_volume.dot(x));
        } else {
          record_crossing(out, spec, t_prev, t, prev.head(n_nodes), nodes, prev, x);
        }
        return false;
      }
      prev = x;
      t_prev = t;
    }
    if (k % stride == 0) {
      out.traj.times.push_back(t);
      out.traj.states.push_back(pick(x, spec));
      out.volume_moment.push_back(sys.control_volume.dot(x));
    }
    return true;
  }, spec.substeps);
  finish_with_crossing(out, spec);
  out.order = static_cast<int>(sys.size());
  return out;
}

PhaseOutput run_ext(const PhaseSpec& spec) {
  PhaseOutput out;
  start_output(out, spec, SolverTag::ext_rakrylov);
  const LtiSystem& sys = *spec.sys;
  const auto n_nodes = static_cast<Eigen::Index>(sys.n_tree_nodes);

  if (sys.b().norm() == 0.0 && sys.x0.norm() == 0.0) {
    // Nothing drives the system and nothing relaxes: the zero state persists.
    for (const double t : spec.grid) {
      out.traj.times.push_back(t);
      out.traj.states.push_back(pick(sys.x0, spec));
      out.volume_moment.push_back(0.0);
    }
    return out;
  }

  const ReducedModel model = extended_rational_arnoldi(sys, spec.shift, spec.q, sys.x0);
  out.order = model.order_achieved;
  const Eigen::MatrixXd V_nodes = model.V.topRows(n_nodes);
  const Eigen::RowVectorXd moment = sys.control_volume.transpose() * model.V;
  const Eigen::VectorXd row_norms = V_nodes.rowwise().norm();

  auto record = [&](double t, const Eigen::VectorXd& xh, const Eigen::VectorXd& nodes) {
    out.traj.times.push_back(t);
    out.traj.states.push_back(spec.full ? Eigen::VectorXd(model.V * xh) : nodes);
    out.volume_moment.push_back(moment.dot(xh));
  };

  Eigen::VectorXd xh = model.x0_h;
  Eigen::VectorXd nodes = V_nodes * xh;
  if (spec.detect && nodes.maxCoeff() >= spec.sigma_crit) {
    out.nuc = Nucleation{0.0, static_cast<int>(first_argmax(nodes))};
    out.state_at_nuc = model.V * xh;
    record(0.0, xh, nodes);
    return out;
  }
  record(0.0, xh, nodes);

  std::optional<ReducedStepper> stepper;
  for (std::size_t k = 1; k < spec.grid.size(); ++k) {
    const double h = spec.grid[k] - spec.grid[k - 1];
    if (!stepper || std::abs(h - stepper->interval()) > 1e-12 * h) {
      stepper.emplace(model, h, spec.substeps);
    }
    Eigen::VectorXd next = stepper->advance(xh);
    Eigen::VectorXd next_nodes = V_nodes * next;
    if (!next.allFinite()) throw NumericalError("reduced transient produced a non-finite state");
    if (spec.detect && next_nodes.maxCoeff() >= spec.sigma_crit) {
      // Reduced states at every substep are cheap, node stresses are not.
      // Within a block of substeps a node can reach the threshold only if
      // its value at the block end plus |V_i| times the block's largest
      // reduced excursion from that end does; blocks without such nodes are
      // skipped and the others scan only those nodes.
      const int S = spec.substeps;
      Eigen::MatrixXd X = stepper->substep_path(xh);
      X.col(S) = next;
      const int block = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(S))));
      const double slack = 1e-12 * std::abs(spec.sigma_crit);
      const double hs = h / S;
      for (int b0 = 0; b0 < S && !out.nuc; b0 += block) {
        const int b1 = std::min(S, b0 + block);
        const Eigen::VectorXd end_nodes = V_nodes * X.col(b1);
        const double excursion =
            (X.middleCols(b0, b1 - b0 + 1).colwise() - X.col(b1)).colwise().norm().maxCoeff();
        std::vector<Eigen::Index> live;
        for (Eigen::Index i = 0; i < n_nodes; ++i) {
          if (end_nodes[i] + row_norms[i] * excursion + slack >= spec.sigma_crit) live.push_back(i);
        }
        if (live.empty()) continue;
        const Eigen::MatrixXd V_live = V_nodes(live, Eigen::all);
        Eigen::VectorXd prev_live = V_live * X.col(b0);
        for (int s = b0 + 1; s <= b1; ++s) {
          Eigen::VectorXd cur_live = V_live * X.col(s);
          const Eigen::Index c = first_argmax(cur_live);
          if (cur_live[c] >= spec.sigma_crit) {
            const double t0 = spec.grid[k - 1] + hs * (s - 1);
            const double t1 = s == S ? spec.grid[k] : t0 + hs;
            const double theta = crossing_fraction(prev_live[c], cur_live[c], spec.sigma_crit);
            out.nuc = Nucleation{t0 + theta * (t1 - t0),
                                 static_cast<int>(live[static_cast<std::size_t>(c)])};
            out.state_at_nuc = model.V * (X.col(s - 1) + theta * (X.col(s) - X.col(s - 1)));
            break;
          }
          prev_live = std::move(cur_live);
        }
      }
      if (!out.nuc) throw NumericalError("substep scan missed the threshold crossing");
      break;
    }
    xh = std::move(next);
    nodes = std::move(next_nodes);
    record(spec.grid[k], xh, nodes);
  }
  finish_with_crossing(out, spec);
  return out;
}

PhaseOutput run_ei(const PhaseSpec& spec) {
  PhaseOutput out;
  start_output(out, spec, SolverTag::ei_rakrylov);
  const LtiSystem& sys = *spec.sys;
  const auto n_nodes = static_cast<Eigen::Index>(sys.n_tree_nodes);

  const EiPropagator prop(sys, spec.q, spec.shift);
  out.order = static_cast<int>(prop.basis().order());
  const KrylovBasis& basis = prop.basis();
  const Eigen::MatrixXd V_nodes = basis.beta * basis.V.topRows(n_nodes);
  const Eigen::VectorXd f_nodes = prop.offset().head(n_nodes);
  const Eigen::RowVectorXd moment =
      basis.beta * (sys.control_volume.transpose() * basis.V);
  const double f_moment = sys.control_volume.dot(prop.offset());

  // Node stresses from the reduced coordinates (t > 0).
  auto nodes_at = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    if (prop.trivial()) return -f_nodes;
    return V_nodes * z - f_nodes;
  };
  auto record = [&](double t, const Eigen::VectorXd& z, const Eigen::VectorXd& nodes) {
    out.traj.times.push_back(t);
    if (t == 0.0) {
      out.traj.states.push_back(pick(sys.x0, spec));
      out.volume_moment.push_back(sys.control_volume.dot(sys.x0));
      out.traj.residual_rel.push_back(0.0);
      return;
    }
    out.traj.states.push_back(spec.full ? prop.state(t) : nodes);
    out.volume_moment.push_back(prop.trivial() ? -f_moment : moment.dot(z) - f_moment);
    out.traj.residual_rel.push_back(prop.trivial() ? 0.0 : prop.residual_at(z).rel);
  };

  const Eigen::VectorXd x0_nodes = sys.x0.head(n_nodes);
  if (spec.detect && x0_nodes.maxCoeff() >= spec.sigma_crit) {
    out.nuc = Nucleation{0.0, static_cast<int>(first_argmax(x0_nodes))};
    out.state_at_nuc = sys.x0;
    record(0.0, {}, x0_nodes);
    return out;
  }
  record(0.0, {}, x0_nodes);

  auto gap = [&](double t) {
    return nodes_at(prop.reduced(t)).maxCoeff() - spec.sigma_crit;
  };

  for (std::size_t k = 1; k < spec.grid.size(); ++k) {
    const double t = spec.grid[k];
    const Eigen::VectorXd z = prop.reduced(t);
    const Eigen::VectorXd nodes = nodes_at(z);
    if (!nodes.allFinite()) throw NumericalError("exponential integration produced a non-finite state");
    if (spec.detect && nodes.maxCoeff() >= spec.sigma_crit) {
      // The closed form can be evaluated anywhere: bisect the crossing.
      double lo = spec.grid[k - 1];
      double hi = t;
      for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (gap(mid) >= 0.0 ? hi : lo) = mid;
      }
      const Eigen::VectorXd at = nodes_at(prop.reduced(hi));
      out.nuc = Nucleation{hi, static_cast<int>(first_argmax(at))};
      out.state_at_nuc = prop.state(hi);
      break;
    }
    record(t, z, nodes);
  }
  finish_with_crossing(out, spec);
  if (out.nuc && out.traj.residual_rel.size() < out.traj.size()) {
    out.traj.residual_rel.push_back(prop.residual(out.nuc->time).rel);
  }
  return out;
}

PhaseOutput run_phase(Solver solver, const PhaseSpec& spec) {
  switch (solver) {
    case Solver::fdm: return run_fdm(spec);
    case Solver::ext: return run_ext(spec);
    case Solver::ei: return run_ei(spec);
  }
  return run_fdm(spec);
}

std::vector<double> phase_grid(const GridConfig& cfg, double tau) {
  if (cfg.steps < 1) throw ParameterError("a phase needs at least one time step");
  if (cfg.substeps < 1) throw ParameterError("substeps must be >= 1");
  const double horizon = cfg.horizon.value_or(cfg.horizon_factor * tau);
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw ParameterError("phase horizon must be positive and finite");
  }
  if (cfg.geometric && cfg.steps > 1) {
    const double steps = static_cast<double>(cfg.steps);
    return geometric_grid(horizon / (steps * steps), horizon, cfg.steps);
  }
  return uniform_grid(horizon, cfg.steps);
}

}  // namespace

SimulationResult simulate_two_phase(const InterconnectTree& tree, const SimulationConfig& config) {
  if (config.q < 2 && config.solver == Solver::ext) throw ParameterError("ext needs q >= 2");
  if (config.q < 1) throw ParameterError("q must be >= 1");
  if (!(config.eta_nuc > 0.0) || !(config.eta_post > 0.0)) {
    throw ParameterError("shift factors must be positive");
  }
  const MaterialParams& mat = tree.materials();
  SimulationResult result;
  result.config = config;
  result.warnings = tree.warnings();
  result.shifts = estimate_shift_times(tree);
  result.shifts.eta_nuc = config.eta_nuc;
  result.shifts.eta_post = config.eta_post;
  const double sigma_crit = config.critical_stress.value_or(mat.critical_stress);
  if (config.fastem && config.solver != Solver::ext) {
    throw ParameterError("the zero-shift mode applies to the ext solver only");
  }
  const bool fastem = config.fastem;

  const LtiSystem sys_nuc = assemble_nucleation(tree, config.points_per_segment);

  PhaseSpec nuc;
  nuc.sys = &sys_nuc;
  nuc.grid = phase_grid(config.nucleation, result.shifts.tau_nuc);
  nuc.substeps = config.nucleation.substeps;
  nuc.detect = true;
  nuc.sigma_crit = sigma_crit;
  nuc.full = config.full_grid;
  nuc.shift = fastem ? 0.0 : 1.0 / result.shifts.shift_time_nuc();
  nuc.q = config.q;

  auto start = Clock::now();
  PhaseOutput first = run_phase(config.solver, nuc);
  result.seconds_nuc = seconds_since(start);
  result.trajectory_nuc = std::move(first.traj);
  result.order_nuc = first.order;

  if (!first.nuc) {
    result.warnings.push_back("no nucleation within the nucleation horizon");
    return result;
  }
  result.t_nuc = first.nuc->time;
  result.nucleation_node = first.nuc->index;
  const int void_index = first.nuc->index;
  result.voided_segment = voided_segment(sys_nuc, void_index);
  const Segment& seg = tree.segments()[static_cast<std::size_t>(result.voided_segment)];
  result.critical_void_volume = critical_void_volume(seg, mat);
  if (!(resistance_bracket(seg, mat) > 0.0)) {
    result.warnings.push_back("barrier resistance bracket is not positive for segment " +
                              std::to_string(seg.id));
  }
  if (!config.run_post_void) return result;

  const LtiSystem sys_post = assemble_postvoid(sys_nuc, void_index, mat, first.state_at_nuc);
  PhaseSpec post;
  post.sys = &sys_post;
  post.grid = phase_grid(config.post_void, result.shifts.tau_post);
  post.substeps = config.post_void.substeps;
  post.full = config.full_grid;
  post.shift = fastem ? 0.0 : 1.0 / result.shifts.shift_time_post();
  post.q = config.q;

  start = Clock::now();
  PhaseOutput second = run_phase(config.solver, post);
  result.seconds_post = seconds_since(start);
  result.order_post = second.order;
  result.trajectory_post = std::move(second.traj);
  for (double& t : result.trajectory_post.times) t += *result.t_nuc;
  result.void_volume.reserve(second.volume_moment.size());
  result.delta_r.reserve(second.volume_moment.size());
  // Voids do not heal: the resistance follows the largest void volume so far.
  double grown = -INFINITY;
  for (const double m : second.volume_moment) {
    const double vv = -m / mat.bulk_modulus;
    grown = std::max(grown, vv);
    result.void_volume.push_back(vv);
    result.delta_r.push_back(resistance_change(grown, seg, mat));
  }
  return result;
}

}  // namespace emkrylov
