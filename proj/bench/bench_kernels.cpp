// Serial reference vs OpenMP kernels. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "kprefine/detect.hpp"
#include "kprefine/gmm.hpp"
#include "kprefine/kde.hpp"
#include "kprefine/reference.hpp"
#include "kprefine/warp.hpp"

namespace {

using namespace kprefine;

ImageBuffer random_image(int w, int h) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageBuffer img(w, h);
  for (double& v : img.pixels()) v = u(rng);
  return img;
}

std::vector<Point2> random_points(std::size_t n, double extent, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, extent);
  std::vector<Point2> pts(n);
  for (auto& p : pts) p = {u(rng), u(rng)};
  return pts;
}

const AffineTransform kShear = AffineTransform::shear_x(0.6);

void BM_WarpSerial(benchmark::State& state) {
  const auto img = random_image(512, 512);
  for (auto _ : state) benchmark::DoNotOptimize(reference::warp_image_serial(img, kShear));
}
void BM_WarpParallel(benchmark::State& state) {
  const auto img = random_image(512, 512);
  for (auto _ : state) benchmark::DoNotOptimize(warp_image(img, kShear));
}

void BM_ResponseSerial(benchmark::State& state) {
  const auto img = random_image(512, 512);
  const DetectorConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(reference::compute_response_serial(img, cfg));
}
void BM_ResponseParallel(benchmark::State& state) {
  const auto img = random_image(512, 512);
  const DetectorConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(compute_response(img, cfg));
}

void BM_KdeDense(benchmark::State& state) {
  const auto pts = random_points(20000, 256.0, 2);
  const KdeConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(reference::evaluate_grid_dense(pts, cfg, {256, 256}));
}
void BM_KdeParallel(benchmark::State& state) {
  const auto pts = random_points(20000, 256.0, 2);
  const KdeConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_grid(pts, cfg, {256, 256}));
}

std::vector<MixtureComponent> random_components(std::size_t k) {
  std::vector<MixtureComponent> comps;
  for (Point2 p : random_points(k, 256.0, 3)) comps.push_back({p, 0.6, 1.0 / static_cast<double>(k)});
  return comps;
}

void BM_EStepDense(benchmark::State& state) {
  const auto pts = random_points(20000, 256.0, 4);
  const auto comps = random_components(1000);
  for (auto _ : state) benchmark::DoNotOptimize(reference::e_step_dense(pts, comps, Weighting::W1));
}
void BM_EStepSparse(benchmark::State& state) {
  const auto pts = random_points(20000, 256.0, 4);
  const auto comps = random_components(1000);
  for (auto _ : state) benchmark::DoNotOptimize(e_step(pts, comps, Weighting::W1));
}

}  // namespace

BENCHMARK(BM_WarpSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WarpParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ResponseSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ResponseParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KdeDense)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KdeParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EStepDense)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EStepSparse)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
