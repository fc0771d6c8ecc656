#include <benchmark/benchmark.h>

#include <random>

#include "gpsr/baseline.hpp"
#include "gpsr/gps.hpp"
#include "gpsr/model_selection.hpp"

namespace {

using namespace gpsr;

struct Data {
  PointSet points;
  std::vector<StiefelBasis> bases;
};

Data make_data(Index n, Index k, Index l, std::uint64_t seed = 1) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  Data d;
  for (Index i = 0; i < l; ++i) {
    d.points.push_back(Vector::Constant(1, u(rng)));
    d.bases.push_back(sample_uniform(n, k, rng));
  }
  return d;
}

KernelSpec se(double beta) { return KernelSpec::squared_exponential(Vector::Constant(1, beta)); }

void BM_Fit(benchmark::State& state) {
  const Data d = make_data(state.range(0), 10, 10);
  for (auto _ : state) benchmark::DoNotOptimize(fit(d.points, d.bases, se(0.6)));
}
BENCHMARK(BM_Fit)->Arg(400)->Arg(1600)->Arg(6400)->Unit(benchmark::kMillisecond);

// Factored output: the per-target cost should not depend on n.
void BM_Predict(benchmark::State& state) {
  const Data d = make_data(state.range(0), 10, 10);
  const GpsModel m = fit(d.points, d.bases, se(0.6));
  Rng rng(2);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  for (auto _ : state) benchmark::DoNotOptimize(predict(m, Vector::Constant(1, u(rng))));
}
BENCHMARK(BM_Predict)->Arg(400)->Arg(1600)->Arg(6400)->Unit(benchmark::kMicrosecond);

void BM_PredictMean(benchmark::State& state) {
  const Data d = make_data(state.range(0), 10, 10);
  const GpsModel m = fit(d.points, d.bases, se(0.6));
  Rng rng(2);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  for (auto _ : state) benchmark::DoNotOptimize(predict(m, Vector::Constant(1, u(rng))).mean());
}
BENCHMARK(BM_PredictMean)->Arg(400)->Arg(1600)->Arg(6400)->Unit(benchmark::kMicrosecond);

void BM_LoocvError(benchmark::State& state) {
  const Data d = make_data(100, 5, state.range(0));
  const GpsModel m = fit(d.points, d.bases, se(0.6));
  const Vector beta = Vector::Constant(1, 0.6);
  for (auto _ : state) benchmark::DoNotOptimize(loocv_error(m, beta));
}
BENCHMARK(BM_LoocvError)->Arg(6)->Arg(12)->Arg(24)->Unit(benchmark::kMillisecond);

void BM_LoocvGradient(benchmark::State& state) {
  const Data d = make_data(100, 5, state.range(0));
  const GpsModel m = fit(d.points, d.bases, se(0.6));
  const Vector beta = Vector::Constant(1, 0.6);
  for (auto _ : state) benchmark::DoNotOptimize(loocv_gradient(m, beta));
}
BENCHMARK(BM_LoocvGradient)->Arg(6)->Arg(12)->Unit(benchmark::kMillisecond);

void BM_SubspaceInterpolate(benchmark::State& state) {
  Data d = make_data(state.range(0), 10, 10);
  // Keep neighbors away from the cut locus: perturb one common subspace.
  Rng rng(3);
  const Matrix center = sample_uniform(state.range(0), 10, rng).matrix();
  for (auto& b : d.bases) b = project_pi(center + 0.1 * standard_normal(center.rows(), 10, rng));
  const InterpConfig cfg{3, InterpScheme::Lagrange1D, std::nullopt};
  std::uniform_real_distribution<double> u(0.0, 4.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(subspace_interpolate(Vector::Constant(1, u(rng)), d.points, d.bases, cfg));
  }
}
BENCHMARK(BM_SubspaceInterpolate)->Arg(400)->Arg(1600)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
