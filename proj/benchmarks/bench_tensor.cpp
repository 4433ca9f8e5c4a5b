#include <benchmark/benchmark.h>

#include "rdpv/degradation.hpp"
#include "rdpv/network.hpp"
#include "rdpv/random.hpp"
#include "rdpv/solver.hpp"
#include "rdpv/tensor.hpp"

namespace {

using namespace rdpv;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  RandomStream rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void BM_Conv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int hw = static_cast<int>(state.range(1));
  const auto xv = random_values(static_cast<std::size_t>(c) * hw * hw, 1);
  const auto kv = random_values(static_cast<std::size_t>(c) * c * 9, 2);
  for (auto _ : state) {
    tensor::Tape tape;
    auto y = tape.conv2d(tape.leaf({c, hw, hw}, xv),
                         tape.leaf({c, c, 3, 3}, kv), 1, 1);
    benchmark::DoNotOptimize(y.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c) * c *
                          hw * hw * 9);
}
BENCHMARK(BM_Conv2d)->Args({16, 32})->Args({16, 64})->Args({128, 36});

void BM_LanczosUpsample(benchmark::State& state) {
  const int hw = static_cast<int>(state.range(0));
  const auto xv = random_values(static_cast<std::size_t>(16) * hw * hw, 3);
  for (auto _ : state) {
    tensor::Tape tape;
    auto y = tape.lanczos_resample(tape.leaf({16, hw, hw}, xv), {2, 1}, 3);
    benchmark::DoNotOptimize(y.values().data());
  }
}
BENCHMARK(BM_LanczosUpsample)->Arg(32)->Arg(64);

void BM_SolverIteration(benchmark::State& state) {
  // one full forward+backward+adam step at the desk-profile scale
  net::NetworkConfig nc;
  nc.encoder_units = 3;
  nc.decoder_units = 3;
  nc.encoder_channels = 12;
  nc.skip_channels = 4;
  nc.decoder_channels = 16;
  auto w = net::build_network(nc, 7);
  const auto z = net::make_seed_image(64, 64, 9);
  Image y(16, 16, 0.5);
  degrade::DegradationSpec spec;
  spec.magnification = 4;
  solver::SolverConfig cfg;
  cfg.method = solver::Method::kRdpvTvi;
  cfg.lambda = 3e-4;
  auto adam = solver::AdamState::for_weights(w);

  for (auto _ : state) {
    tensor::Tape tape;
    auto g = solver::frame_objective(tape, w, z, y, spec, cfg, true);
    tape.backward(g.objective);
    std::vector<std::span<const double>> grads;
    for (auto& p : g.params) grads.push_back(p.grad());
    solver::adam_step(w, grads, adam, cfg.adam);
    benchmark::DoNotOptimize(w.params.front().values.data());
  }
}
BENCHMARK(BM_SolverIteration)->Unit(benchmark::kMillisecond);

void BM_Downsample(benchmark::State& state) {
  Image img(288, 288, 0.5);
  RandomStream rng(4);
  for (double& v : img.pixels()) v = rng.uniform();
  for (auto _ : state) {
    Image lr = degrade::downsample(img, 4);
    benchmark::DoNotOptimize(lr.data());
  }
}
BENCHMARK(BM_Downsample);

}  // namespace
