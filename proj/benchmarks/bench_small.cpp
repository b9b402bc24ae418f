#include <benchmark/benchmark.h>

#include "emkrylov/linalg.hpp"
#include "emkrylov/random.hpp"

namespace {

using namespace emkrylov;

Eigen::MatrixXd random_stable(Eigen::Index k, std::uint64_t seed) {
  PortableRng rng(seed);
  Eigen::MatrixXd M(k, k);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = rng.uniform(-1, 1);
  return M - static_cast<double>(k) * Eigen::MatrixXd::Identity(k, k);
}

// Dense exponential of the projected matrix, evaluated once per output step.
void BM_SmallMatrixExp(benchmark::State& state) {
  const Eigen::MatrixXd M = random_stable(state.range(0), 1);
  const double t = static_cast<double>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(small_matrix_exp(M, t));
}
BENCHMARK(BM_SmallMatrixExp)
    ->ArgsProduct({{4, 6, 12, 20}, {1, 100}})
    ->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
