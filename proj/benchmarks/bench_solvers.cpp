#include <benchmark/benchmark.h>

#include <map>

#include "emkrylov/ei_rakrylov.hpp"
#include "emkrylov/em_engine.hpp"
#include "emkrylov/ext_rakrylov.hpp"
#include "emkrylov/fdm.hpp"
#include "emkrylov/linalg.hpp"

namespace {

using namespace emkrylov;

const InterconnectTree& tree(std::size_t segments) {
  static std::map<std::size_t, InterconnectTree> cache;
  auto it = cache.find(segments);
  if (it == cache.end()) it = cache.emplace(segments, generate_synthetic_tree(segments, 2)).first;
  return it->second;
}

const LtiSystem& system(std::size_t segments) {
  static std::map<std::size_t, LtiSystem> cache;
  auto it = cache.find(segments);
  if (it == cache.end()) it = cache.emplace(segments, assemble_nucleation(tree(segments))).first;
  return it->second;
}

double shift(std::size_t segments) {
  return 1.0 / estimate_shift_times(tree(segments)).tau_nuc;
}

void BM_Assemble(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(assemble_nucleation(tree(n)));
}
BENCHMARK(BM_Assemble)->Arg(50)->Arg(500)->Unit(benchmark::kMicrosecond);

void BM_ForestFactor(benchmark::State& state) {
  const LtiSystem& sys = system(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(SparseLu::scaled(sys.A, -1.0, 1.0, sys.plan));
}
BENCHMARK(BM_ForestFactor)->Arg(50)->Arg(500)->Arg(2000)->Unit(benchmark::kMicrosecond);

void BM_GeneralFactor(benchmark::State& state) {
  // Same matrix with one extra coupling, which defeats the forest path.
  const LtiSystem& sys = system(static_cast<std::size_t>(state.range(0)));
  SparseMatrix M = scaled_plus_identity(sys.A, -1.0, 1.0);
  const Eigen::Index last = M.rows() - 1;
  M.coeffRef(0, last) = -1e-3;
  M.coeffRef(last, 0) = -1e-3;
  M.makeCompressed();
  for (auto _ : state) benchmark::DoNotOptimize(SparseLu(M));
}
BENCHMARK(BM_GeneralFactor)->Arg(50)->Arg(500)->Unit(benchmark::kMicrosecond);

void BM_ForestSolve(benchmark::State& state) {
  const LtiSystem& sys = system(static_cast<std::size_t>(state.range(0)));
  const SparseLu lu = SparseLu::scaled(sys.A, -1.0, 1.0, sys.plan);
  const Eigen::VectorXd b = Eigen::VectorXd::Ones(sys.size());
  for (auto _ : state) benchmark::DoNotOptimize(lu.solve(b));
}
BENCHMARK(BM_ForestSolve)->Arg(50)->Arg(500)->Arg(2000)->Unit(benchmark::kMicrosecond);

void BM_ExtArnoldi(benchmark::State& state) {
  const std::size_t segs = 500;
  const LtiSystem& sys = system(segs);
  const int q = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(extended_rational_arnoldi(sys, shift(segs), q, sys.x0));
  }
}
BENCHMARK(BM_ExtArnoldi)->Arg(4)->Arg(6)->Arg(12)->Unit(benchmark::kMicrosecond);

void BM_EiPropagator(benchmark::State& state) {
  const std::size_t segs = 500;
  const LtiSystem& sys = system(segs);
  const int q = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(EiPropagator(sys, q, shift(segs)));
}
BENCHMARK(BM_EiPropagator)->Arg(4)->Arg(6)->Arg(12)->Unit(benchmark::kMicrosecond);

// Transient over `steps` output steps with tree-node rows recorded.
void transient(benchmark::State& state, Solver solver) {
  const std::size_t segs = 500;
  const LtiSystem& sys = system(segs);
  const auto grid = uniform_grid(20.0 / shift(segs), static_cast<std::size_t>(state.range(0)));
  std::vector<int> rows(sys.n_tree_nodes);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
  for (auto _ : state) {
    switch (solver) {
      case Solver::fdm:
        benchmark::DoNotOptimize(backward_euler(sys, grid, rows));
        break;
      case Solver::ext: {
        const ReducedModel m = extended_rational_arnoldi(sys, shift(segs), 6, sys.x0);
        benchmark::DoNotOptimize(reduced_transient(m, sys, grid, rows));
        break;
      }
      case Solver::ei:
        benchmark::DoNotOptimize(ei_transient(sys, grid, 6, shift(segs), rows));
        break;
    }
  }
}
void BM_TransientFdm(benchmark::State& s) { transient(s, Solver::fdm); }
void BM_TransientExt(benchmark::State& s) { transient(s, Solver::ext); }
void BM_TransientEi(benchmark::State& s) { transient(s, Solver::ei); }
BENCHMARK(BM_TransientFdm)->Arg(50)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TransientExt)->Arg(50)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TransientEi)->Arg(50)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

// Full two-phase simulation as the CLI runs it.
void two_phase(benchmark::State& state, Solver solver) {
  SimulationConfig cfg;
  cfg.solver = solver;
  cfg.nucleation.steps = static_cast<std::size_t>(state.range(0));
  cfg.post_void.steps = cfg.nucleation.steps;
  for (auto _ : state) benchmark::DoNotOptimize(simulate_two_phase(tree(500), cfg));
}
void BM_TwoPhaseFdm(benchmark::State& s) { two_phase(s, Solver::fdm); }
void BM_TwoPhaseExt(benchmark::State& s) { two_phase(s, Solver::ext); }
void BM_TwoPhaseEi(benchmark::State& s) { two_phase(s, Solver::ei); }
BENCHMARK(BM_TwoPhaseFdm)->Arg(50)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TwoPhaseExt)->Arg(50)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TwoPhaseEi)->Arg(50)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
