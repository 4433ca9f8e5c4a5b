#include <benchmark/benchmark.h>

#include "rdpv/random.hpp"
#include "rdpv/sim.hpp"
#include "rdpv/tracking.hpp"

namespace {

using namespace rdpv;

void BM_ChtLocalize(benchmark::State& state) {
  sim::SimParams p;
  p.frame_height = static_cast<int>(state.range(0));
  p.frame_width = static_cast<int>(state.range(0));
  p.n_immune = 8;
  p.n_frames = 1;
  p.immune_radius = 3.0;
  p.tumor_radius = 6.0;
  p.seed = 5;
  const auto video = sim::make_video(p);
  track::ChtParams cht;
  cht.r_min = 1.8;
  cht.r_max = 8.0;
  for (auto _ : state) {
    auto det = track::cht_localize(video.frames.frames[0], cht);
    benchmark::DoNotOptimize(det.data());
  }
}
BENCHMARK(BM_ChtLocalize)->Arg(64)->Arg(288)->Unit(benchmark::kMillisecond);

void BM_SolveAssignment(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  RandomStream rng(11);
  track::CostMatrix cost(n, n);
  for (double& v : cost.cost) v = rng.uniform(0.0, 100.0);
  for (auto _ : state) {
    auto a = track::solve_assignment(cost);
    benchmark::DoNotOptimize(a.pairs.data());
  }
}
BENCHMARK(BM_SolveAssignment)->Arg(8)->Arg(32)->Arg(128);

}  // namespace

int main(int argc, char** argv) {
  ::benchmark::Initialize(&argc, argv);
  if (::benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  ::benchmark::RunSpecifiedBenchmarks();
  ::benchmark::Shutdown();
  return 0;
}
