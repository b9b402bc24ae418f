#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emkrylov/em_engine.hpp"
#include "emkrylov/error.hpp"
#include "emkrylov/tree.hpp"
#include "emkrylov/tuner.hpp"

namespace emkrylov::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

// Bad flag combination detected after parsing; maps to the usage exit code.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  return format_double(v);
}

// Six significant digits for the human-readable tables.
std::string brief(double v) {
  std::ostringstream o;
  o << std::setprecision(6) << v;
  return o.str();
}

Json number_or_null(std::optional<double> v) {
  return v ? Json(*v) : Json(nullptr);
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  return f;
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream f = open_output(path);
  f << j.dump(2) << '\n';
  if (!f) throw Error("write failed for '" + path.string() + "'");
}

fs::path prepare_dir(const std::string& dir) {
  const fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

// Options shared by the simulation subcommands.
struct SimOptions {
  std::string solver = "fdm";
  int q = 6;
  double eta_nuc = 1.0;
  double eta_post = 1.0;
  std::size_t steps = 100;
  std::size_t steps_nuc = 0;   // 0: use `steps`
  std::size_t steps_post = 0;
  double horizon_nuc = 0.0;    // 0: horizon factor times tau
  double horizon_post = 0.0;
  double horizon_factor = 20.0;
  bool geometric = false;
  int substeps_nuc = 1;
  int substeps_post = 1;
  int points = 11;
  double sigma_crit = 0.0;     // 0: tree value
  bool full_grid = false;
  bool fastem = false;
  int fastem_order = 50;
};

void add_grid_options(CLI::App& cmd, SimOptions& o) {
  cmd.add_option("--steps", o.steps, "Output steps per phase")->check(CLI::Range(2, 1000000));
  cmd.add_option("--steps-nuc", o.steps_nuc, "Nucleation-phase steps (overrides --steps)")
      ->check(CLI::Range(2, 1000000));
  cmd.add_option("--steps-post", o.steps_post, "Post-void steps (overrides --steps)")
      ->check(CLI::Range(2, 1000000));
  cmd.add_option("--horizon-nuc", o.horizon_nuc, "Nucleation horizon in seconds")
      ->check(CLI::PositiveNumber);
  cmd.add_option("--horizon-post", o.horizon_post, "Post-void horizon in seconds")
      ->check(CLI::PositiveNumber);
  cmd.add_option("--horizon-factor", o.horizon_factor, "Default horizon in units of tau")
      ->check(CLI::PositiveNumber);
  cmd.add_flag("--geometric", o.geometric, "Geometric instead of uniform steps");
  cmd.add_option("--points-per-segment", o.points, "Grid points per segment")
      ->check(CLI::Range(2, 100000));
  cmd.add_option("--sigma-crit", o.sigma_crit, "Critical stress override, Pa")
      ->check(CLI::PositiveNumber);
}

void add_solver_options(CLI::App& cmd, SimOptions& o) {
  cmd.add_option("--q", o.q, "Krylov order")->check(CLI::PositiveNumber);
  cmd.add_option("--eta-nuc", o.eta_nuc, "Nucleation shift factor")->check(CLI::PositiveNumber);
  cmd.add_option("--eta-post", o.eta_post, "Post-void shift factor")->check(CLI::PositiveNumber);
  cmd.add_flag("--fastem-mode", o.fastem, "ext with zero shift (extended Krylov baseline)");
  cmd.add_option("--fastem-order", o.fastem_order, "Order used by --fastem-mode")
      ->check(CLI::PositiveNumber);
}

Solver parse_solver(const std::string& name) {
  const auto s = solver_from_string(name);
  if (!s) throw UsageError("unknown solver '" + name + "' (expected fdm, ext or ei)");
  return *s;
}

GridConfig grid_config(const SimOptions& o, std::size_t steps, double horizon, int substeps) {
  GridConfig g;
  g.steps = steps > 0 ? steps : o.steps;
  g.horizon_factor = o.horizon_factor;
  if (horizon > 0.0) g.horizon = horizon;
  g.geometric = o.geometric;
  g.substeps = substeps;
  return g;
}

SimulationConfig make_config(const SimOptions& o, Solver solver) {
  SimulationConfig c;
  c.solver = solver;
  c.q = o.q;
  c.eta_nuc = o.eta_nuc;
  c.eta_post = o.eta_post;
  c.nucleation = grid_config(o, o.steps_nuc, o.horizon_nuc, o.substeps_nuc);
  c.post_void = grid_config(o, o.steps_post, o.horizon_post, o.substeps_post);
  c.points_per_segment = o.points;
  if (o.sigma_crit > 0.0) c.critical_stress = o.sigma_crit;
  c.full_grid = o.full_grid;
  if (o.fastem) {
    if (solver != Solver::ext) throw UsageError("--fastem-mode applies to the ext solver only");
    c.fastem = true;
    c.q = o.fastem_order;
  }
  return c;
}

std::string column_name(int row, std::size_t n_tree_nodes) {
  if (static_cast<std::size_t>(row) < n_tree_nodes) {
    return "node_" + std::to_string(row) + "_stress_pa";
  }
  return "point_" + std::to_string(row) + "_stress_pa";
}

void write_trajectory_csv(const fs::path& path, const StressTrajectory& traj,
                          std::size_t n_tree_nodes) {
  std::ofstream f = open_output(path);
  f << "#schema=emkrylov-trajectory-v1\n";
  f << "time_s";
  const Eigen::Index width = traj.states.empty() ? 0 : traj.states.front().size();
  for (Eigen::Index i = 0; i < width; ++i) f << ',' << column_name(traj.row_index(i), n_tree_nodes);
  const bool residual = !traj.residual_rel.empty();
  if (residual) f << ",residual_rel";
  f << '\n';
  for (std::size_t k = 0; k < traj.size(); ++k) {
    f << fmt(traj.times[k]);
    for (Eigen::Index i = 0; i < width; ++i) f << ',' << fmt(traj.states[k][i]);
    if (residual) f << ',' << fmt(traj.residual_rel[k]);
    f << '\n';
  }
  if (!f) throw Error("write failed for '" + path.string() + "'");
}

void write_resistance_csv(const fs::path& path, const SimulationResult& r) {
  std::ofstream f = open_output(path);
  f << "#schema=emkrylov-resistance-v1\n";
  f << "time_s,void_volume_m3,delta_r_ohm\n";
  for (std::size_t k = 0; k < r.delta_r.size(); ++k) {
    f << fmt(r.trajectory_post.times[k]) << ',' << fmt(r.void_volume[k]) << ','
      << fmt(r.delta_r[k]) << '\n';
  }
  if (!f) throw Error("write failed for '" + path.string() + "'");
}

Json summary_json(const SimulationResult& r, std::size_t n_tree_nodes) {
  Json j;
  j["schema"] = "emkrylov-summary-v1";
  j["solver"] = std::string(to_string(r.config.solver));
  j["fastem"] = r.config.fastem;
  j["q"] = r.config.q;
  j["eta_nuc"] = r.config.eta_nuc;
  j["eta_post"] = r.config.eta_post;
  j["tau_nuc_s"] = r.shifts.tau_nuc;
  j["tau_post_s"] = r.shifts.tau_post;
  j["nucleated"] = r.t_nuc.has_value();
  j["t_nuc_s"] = number_or_null(r.t_nuc);
  if (r.nucleation_node && static_cast<std::size_t>(*r.nucleation_node) < n_tree_nodes) {
    j["nucleation_node"] = *r.nucleation_node;
  } else {
    j["nucleation_node"] = nullptr;
  }
  j["nucleation_grid_index"] = r.nucleation_node ? Json(*r.nucleation_node) : Json(nullptr);
  j["voided_segment"] = r.voided_segment >= 0 ? Json(r.voided_segment) : Json(nullptr);
  j["critical_void_volume_m3"] = r.critical_void_volume;
  j["void_volume_final_m3"] = r.void_volume.empty() ? 0.0 : r.void_volume.back();
  j["delta_r_final_ohm"] = r.final_delta_r().value_or(0.0);
  j["order_nuc"] = r.order_nuc;
  j["order_post"] = r.order_post;
  j["warnings"] = r.warnings;
  return j;
}

Json timings_json(const SimulationResult& r) {
  Json j;
  j["seconds_nuc"] = r.seconds_nuc;
  j["seconds_post"] = r.seconds_post;
  j["seconds_total"] = r.seconds_nuc + r.seconds_post;
  return j;
}

// ---- generate ----

struct GenerateOptions {
  std::size_t segments = 1;
  std::uint64_t seed = 1;
  std::string topology = "random";
  GeneratorRanges ranges;
  bool fixed_sign = false;
  std::vector<std::string> params;
  std::string output;
};

void setup_generate(CLI::App& app, GenerateOptions& o) {
  auto* cmd = app.add_subcommand("generate", "Generate a synthetic interconnect tree");
  cmd->add_option("--segments", o.segments, "Number of segments")->required()
      ->check(CLI::Range(std::size_t{1}, std::size_t{10000000}));
  cmd->add_option("--seed", o.seed, "Generator seed");
  cmd->add_option("--topology", o.topology, "random or chain")
      ->check(CLI::IsMember({"random", "chain"}));
  cmd->add_option("--length-min", o.ranges.length.min, "Minimum segment length, m");
  cmd->add_option("--length-max", o.ranges.length.max, "Maximum segment length, m");
  cmd->add_option("--width-min", o.ranges.width.min, "Minimum width, m");
  cmd->add_option("--width-max", o.ranges.width.max, "Maximum width, m");
  cmd->add_option("--height-min", o.ranges.height.min, "Minimum height, m");
  cmd->add_option("--height-max", o.ranges.height.max, "Maximum height, m");
  cmd->add_option("--current-min", o.ranges.current_density.min, "Current density lower bound, A/m^2");
  cmd->add_option("--current-max", o.ranges.current_density.max, "Current density upper bound, A/m^2");
  cmd->add_flag("--fixed-sign", o.fixed_sign,
                "Sample current density directly from the range instead of a signed magnitude");
  cmd->add_option("--param", o.params, "Material parameter override name=value (repeatable)");
  cmd->add_option("-o,--output", o.output, "Tree file to write")->required();
}

MaterialParams parse_params(const std::vector<std::string>& items) {
  MaterialParams mat;
  for (const std::string& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("--param expects name=value, got '" + item + "'");
    const std::string name = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    double value = 0.0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || end != text.data() + text.size()) {
      throw UsageError("--param " + name + ": '" + text + "' is not a number");
    }
    if (!mat.set(name, value)) throw UsageError("unknown material parameter '" + name + "'");
  }
  mat.validate();
  return mat;
}

int run_generate(const GenerateOptions& o, std::ostream& out) {
  GeneratorRanges ranges = o.ranges;
  ranges.random_sign = !o.fixed_sign;
  const Topology topology = o.topology == "chain" ? Topology::chain : Topology::random;
  const InterconnectTree tree =
      generate_synthetic_tree(o.segments, o.seed, ranges, topology, parse_params(o.params));
  write_tree_file(tree, o.output);
  out << "wrote " << o.output << " (" << tree.segment_count() << " segments, "
      << tree.node_count() << " nodes)\n";
  return kExitOk;
}

// ---- analyze ----

struct AnalyzeOptions {
  std::string tree;
  SimOptions sim;
  std::string out_dir = ".";
};

void setup_analyze(CLI::App& app, AnalyzeOptions& o) {
  auto* cmd = app.add_subcommand("analyze", "Run one two-phase simulation");
  cmd->add_option("tree", o.tree, "Tree file")->required();
  cmd->add_option("--solver", o.sim.solver, "fdm, ext or ei");
  add_solver_options(*cmd, o.sim);
  add_grid_options(*cmd, o.sim);
  cmd->add_option("--substeps-nuc", o.sim.substeps_nuc, "Implicit substeps per nucleation step")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--substeps-post", o.sim.substeps_post, "Implicit substeps per post-void step")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--full-grid", o.sim.full_grid, "Record every grid point, not only tree nodes");
  cmd->add_option("-o,--out-dir", o.out_dir, "Output directory");
}

int run_analyze(const AnalyzeOptions& o, std::ostream& out) {
  const InterconnectTree tree = read_tree_file(o.tree);
  const SimulationConfig cfg = make_config(o.sim, parse_solver(o.sim.solver));
  const SimulationResult r = simulate_two_phase(tree, cfg);
  const fs::path dir = prepare_dir(o.out_dir);
  const std::size_t n_nodes = tree.node_count();
  write_trajectory_csv(dir / "trajectory_nuc.csv", r.trajectory_nuc, n_nodes);
  if (r.t_nuc && cfg.run_post_void) {
    write_trajectory_csv(dir / "trajectory_post.csv", r.trajectory_post, n_nodes);
    write_resistance_csv(dir / "resistance.csv", r);
  }
  write_json(dir / "summary.json", summary_json(r, n_nodes));
  write_json(dir / "timings.json", timings_json(r));
  if (r.t_nuc) {
    out << "t_nuc " << fmt(*r.t_nuc) << " s at grid index " << *r.nucleation_node
        << ", final delta R " << fmt(r.final_delta_r().value_or(0.0)) << " Ohm\n";
  } else {
    out << "no nucleation within the horizon, delta R 0 Ohm\n";
  }
  return kExitOk;
}

// ---- compare ----

struct CompareOptions {
  std::string tree;
  SimOptions sim;
  std::vector<std::string> solvers{"fdm", "ext", "ei"};
  int ref_substeps_nuc = 10000;
  int ref_substeps_post = 1000;
  int repeat = 3;
  std::string out_dir = ".";
};

void setup_compare(CLI::App& app, CompareOptions& o) {
  auto* cmd = app.add_subcommand("compare", "Accuracy and speedup of solvers against FDM");
  cmd->add_option("tree", o.tree, "Tree file")->required();
  cmd->add_option("--solvers", o.solvers, "Comma-separated solver list")->delimiter(',');
  add_solver_options(*cmd, o.sim);
  add_grid_options(*cmd, o.sim);
  cmd->add_option("--ref-substeps-nuc", o.ref_substeps_nuc,
                  "Substeps per output step of the fine nucleation reference")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--ref-substeps-post", o.ref_substeps_post,
                  "Substeps per output step of the fine post-void reference")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--repeat", o.repeat, "Timed repetitions; the fastest is kept")
      ->check(CLI::PositiveNumber);
  cmd->add_option("-o,--out-dir", o.out_dir, "Output directory");
}

struct Timed {
  SimulationResult result;
  double nuc = std::numeric_limits<double>::infinity();
  double post = std::numeric_limits<double>::infinity();
};

Timed run_timed(const InterconnectTree& tree, const SimulationConfig& cfg, int repeat) {
  Timed t;
  for (int i = 0; i < repeat; ++i) {
    SimulationResult r = simulate_two_phase(tree, cfg);
    t.nuc = std::min(t.nuc, r.seconds_nuc);
    t.post = std::min(t.post, r.seconds_post);
    if (i == 0) t.result = std::move(r);
  }
  return t;
}

double pe_or_nan(double ref, std::optional<double> value) {
  return value ? percentage_error(ref, *value) : std::nan("");
}

int run_compare(const CompareOptions& o, std::ostream& out) {
  const InterconnectTree tree = read_tree_file(o.tree);
  if (o.solvers.empty()) throw UsageError("--solvers is empty");
  std::vector<Solver> solvers;
  for (const std::string& s : o.solvers) solvers.push_back(parse_solver(s));

  SimOptions ref_opts = o.sim;
  ref_opts.substeps_nuc = o.ref_substeps_nuc;
  ref_opts.substeps_post = o.ref_substeps_post;
  ref_opts.fastem = false;
  const Reference ref = reference_from(simulate_two_phase(tree, make_config(ref_opts, Solver::fdm)));

  // The FDM baseline steps once per output interval on the same grid.
  SimOptions base_opts = o.sim;
  base_opts.fastem = false;
  const Timed baseline = run_timed(tree, make_config(base_opts, Solver::fdm), o.repeat);

  std::ostringstream table;
  std::ostringstream speed;
  table << "#schema=emkrylov-compare-v1\n"
        << "solver,q,eta_nuc,eta_post,t_nuc_s,nucleation_grid_index,delta_r_ohm,"
           "eps_nuc_pct,eps_post_pct,eps_total_pct\n";
  table << "reference," << o.ref_substeps_nuc << ",," << "," << fmt(ref.t_nuc) << ",,"
        << fmt(ref.delta_r) << ",0,0,0\n";
  speed << "#schema=emkrylov-speedup-v1\n"
        << "solver,seconds_nuc,seconds_post,seconds_total,speedup_nuc,speedup_post,"
           "speedup_total\n";
  out << std::left << std::setw(12) << "solver" << std::setw(14) << "eps_nuc_%"
      << std::setw(14) << "eps_post_%" << std::setw(14) << "total_%" << "speedup\n";

  const double base_total = baseline.nuc + baseline.post;
  for (const Solver solver : solvers) {
    Timed run;
    SimOptions opts = o.sim;
    if (solver == Solver::fdm) {
      run = baseline;
    } else {
      if (solver == Solver::ext) {
        // ext integrates its reduced model on the reference's fine steps.
        opts.substeps_nuc = o.ref_substeps_nuc;
        opts.substeps_post = o.ref_substeps_post;
      } else {
        opts.fastem = false;
      }
      run = run_timed(tree, make_config(opts, solver), o.repeat);
    }
    const SimulationResult& r = run.result;
    const double e_nuc = pe_or_nan(ref.t_nuc, r.t_nuc);
    const double e_post = pe_or_nan(ref.delta_r, r.final_delta_r());
    const double e_total = e_nuc + e_post;
    const std::string name = std::string(to_string(solver)) + (r.config.fastem ? "-fastem" : "");
    table << name << ',' << r.config.q << ','
          << fmt(r.config.eta_nuc) << ',' << fmt(r.config.eta_post) << ','
          << (r.t_nuc ? fmt(*r.t_nuc) : "") << ','
          << (r.nucleation_node ? std::to_string(*r.nucleation_node) : "") << ','
          << fmt(r.final_delta_r().value_or(0.0)) << ',' << fmt(e_nuc) << ','
          << fmt(e_post) << ',' << fmt(e_total) << '\n';
    const double total = run.nuc + run.post;
    const double s_total = base_total / total;
    speed << name << ',' << fmt(run.nuc) << ',' << fmt(run.post) << ',' << fmt(total) << ','
          << fmt(baseline.nuc / run.nuc) << ',' << fmt(baseline.post / run.post) << ','
          << fmt(s_total) << '\n';
    out << std::left << std::setw(12) << name << std::setw(14) << brief(e_nuc)
        << std::setw(14) << brief(e_post) << std::setw(14) << brief(e_total)
        << brief(s_total) << "x\n";
  }

  const fs::path dir = prepare_dir(o.out_dir);
  {
    std::ofstream f = open_output(dir / "compare.csv");
    f << table.str();
  }
  {
    std::ofstream f = open_output(dir / "speedup.csv");
    f << speed.str();
  }
  return kExitOk;
}

// ---- tune ----

struct TuneOptions {
  std::string tree;
  SimOptions sim;
  std::vector<int> orders{3, 4, 5, 6};
  double eta_min = 0.1;
  double eta_max = 20.0;
  int max_iterations = 20;
  double stop_tol = 1e-3;
  int start_q = 4;
  double start_eta_nuc = 1.0;
  double start_eta_post = 1.0;
  std::size_t threads = 0;
  int ref_substeps_nuc = 10000;
  int ref_substeps_post = 1000;
  std::string output = "tune.json";
};

void setup_tune(CLI::App& app, TuneOptions& o) {
  auto* cmd = app.add_subcommand("tune", "Coordinate descent over order and shift factors");
  cmd->add_option("tree", o.tree, "Tree file")->required();
  cmd->add_option("--solver", o.sim.solver, "ext or ei")->check(CLI::IsMember({"ext", "ei"}));
  add_grid_options(*cmd, o.sim);
  cmd->add_option("--orders", o.orders, "Candidate orders")->delimiter(',');
  cmd->add_option("--eta-min", o.eta_min, "Lower shift-factor bound")->check(CLI::PositiveNumber);
  cmd->add_option("--eta-max", o.eta_max, "Upper shift-factor bound")->check(CLI::PositiveNumber);
  cmd->add_option("--max-iterations", o.max_iterations, "Iteration cap")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--stop-tol", o.stop_tol, "Stop when an iteration gains less, percent");
  cmd->add_option("--start-q", o.start_q, "Initial order")->check(CLI::PositiveNumber);
  cmd->add_option("--start-eta-nuc", o.start_eta_nuc, "Initial nucleation shift factor");
  cmd->add_option("--start-eta-post", o.start_eta_post, "Initial post-void shift factor");
  cmd->add_option("--threads", o.threads, "Concurrent evaluations (0: hardware)");
  cmd->add_option("--ref-substeps-nuc", o.ref_substeps_nuc,
                  "Substeps per output step of the fine nucleation reference")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--ref-substeps-post", o.ref_substeps_post,
                  "Substeps per output step of the fine post-void reference")
      ->check(CLI::PositiveNumber);
  cmd->add_option("-o,--output", o.output, "Result JSON");
}

Json candidate_json(const Candidate& c) {
  Json j;
  j["q"] = c.q;
  j["eta_nuc"] = c.eta_nuc;
  j["eta_post"] = c.eta_post;
  return j;
}

int run_tune(const TuneOptions& o, std::ostream& out) {
  const InterconnectTree tree = read_tree_file(o.tree);
  const Solver solver = parse_solver(o.sim.solver);

  SimOptions ref_opts = o.sim;
  ref_opts.substeps_nuc = o.ref_substeps_nuc;
  ref_opts.substeps_post = o.ref_substeps_post;
  const Reference ref = reference_from(simulate_two_phase(tree, make_config(ref_opts, Solver::fdm)));

  SimOptions base_opts = o.sim;
  if (solver == Solver::ext) {
    base_opts.substeps_nuc = o.ref_substeps_nuc;
    base_opts.substeps_post = o.ref_substeps_post;
  }
  const SimulationConfig base = make_config(base_opts, solver);

  TunerConfig tc;
  tc.orders = o.orders;
  tc.eta_min = o.eta_min;
  tc.eta_max = o.eta_max;
  tc.max_iterations = o.max_iterations;
  tc.stop_tol = o.stop_tol;
  tc.start = Candidate{o.start_q, o.start_eta_nuc, o.start_eta_post};
  tc.threads = resolve_threads(o.threads, std::getenv("EMKRYLOV_THREADS"));
  const TunerResult res = coordinate_descent(tc, tree, base, ref);

  Json j;
  j["schema"] = "emkrylov-tune-v1";
  j["solver"] = std::string(to_string(solver));
  j["reference"] = {{"t_nuc_s", ref.t_nuc},
                    {"delta_r_ohm", ref.delta_r},
                    {"substeps_nuc", o.ref_substeps_nuc},
                    {"substeps_post", o.ref_substeps_post}};
  j["config"] = {{"orders", tc.orders},       {"eta_min", tc.eta_min},
                 {"eta_max", tc.eta_max},     {"steps", tc.steps},
                 {"max_iterations", tc.max_iterations}, {"stop_tol", tc.stop_tol},
                 {"epsilon", tc.epsilon},     {"penalty", tc.penalty},
                 {"start", candidate_json(tc.start)}};
  j["best"] = candidate_json(res.best);
  j["j"] = res.j;
  for (const Evaluation& ev : res.log) {
    if (ev.candidate == res.best) {
      j["pe_nuc"] = ev.pe_nuc;
      j["pe_post"] = ev.pe_post;
      break;
    }
  }
  j["iterations"] = res.iterations;
  j["evaluations"] = res.evaluations;
  j["cache_hits"] = res.cache_hits;
  j["trace"] = res.trace;
  Json log = Json::array();
  for (const Evaluation& ev : res.log) {
    Json e = candidate_json(ev.candidate);
    e["j"] = ev.j;
    e["pe_nuc"] = ev.pe_nuc;
    e["pe_post"] = ev.pe_post;
    e["nucleated"] = ev.nucleated;
    log.push_back(std::move(e));
  }
  j["log"] = std::move(log);

  const fs::path path(o.output);
  if (path.has_parent_path()) prepare_dir(path.parent_path().string());
  write_json(path, j);
  out << "best q=" << res.best.q << " eta_nuc=" << fmt(res.best.eta_nuc)
      << " eta_post=" << fmt(res.best.eta_post) << " J=" << fmt(res.j) << " after "
      << res.iterations << " iterations, " << res.evaluations << " evaluations\n";
  return kExitOk;
}

}  // namespace

std::size_t resolve_threads(std::size_t requested, const char* env_cap) {
  std::size_t n = requested > 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (env_cap != nullptr) {
    std::size_t cap = 0;
    const std::string_view text(env_cap);
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), cap);
    if (ec == std::errc() && end == text.data() + text.size() && cap > 0) n = std::min(n, cap);
  }
  return std::max<std::size_t>(n, 1);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Electromigration stress analysis with rational Krylov solvers", "emkrylov"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "emkrylov 0.1.0");

  GenerateOptions gen;
  AnalyzeOptions analyze;
  CompareOptions compare;
  TuneOptions tune;
  setup_generate(app, gen);
  setup_analyze(app, analyze);
  setup_compare(app, compare);
  setup_tune(app, tune);

  std::vector<std::string> storage = args;
  if (storage.empty()) storage.emplace_back("emkrylov");
  std::vector<char*> argv;
  argv.reserve(storage.size());
  for (std::string& s : storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand("generate")) return run_generate(gen, out);
    if (app.got_subcommand("analyze")) return run_analyze(analyze, out);
    if (app.got_subcommand("compare")) return run_compare(compare, out);
    if (app.got_subcommand("tune")) return run_tune(tune, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace emkrylov::cli
