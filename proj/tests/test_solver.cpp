#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rdpv/degradation.hpp"
#include "rdpv/metrics.hpp"
#include "rdpv/network.hpp"
#include "rdpv/random.hpp"
#include "rdpv/solver.hpp"
#include "test_util.hpp"

using namespace rdpv;
using rdpv::testutil::central_diff;
using rdpv::testutil::rel_err;

namespace {

net::NetworkConfig toy_net() {
  net::NetworkConfig c;
  c.encoder_units = 2;
  c.decoder_units = 2;
  c.encoder_channels = 8;
  c.skip_channels = 2;
  c.decoder_channels = 10;
  return c;
}

solver::SolverConfig toy_solver(solver::Method m, double lambda = 0.0) {
  solver::SolverConfig cfg;
  cfg.method = m;
  cfg.lambda = lambda;
  cfg.max_iters_first = 40;
  cfg.early_stop_start_first = 20;
  cfg.max_iters_rest = 20;
  cfg.early_stop_start_rest = 10;
  cfg.patience = 5;
  return cfg;
}

Image cellish_image(int n, int seed) {
  RandomStream rng(seed);
  Image img(n, n, 0.5);
  for (int c = 0; c < 3; ++c) {
    const double cx = rng.uniform(4.0, n - 4.0);
    const double cy = rng.uniform(4.0, n - 4.0);
    const double r = rng.uniform(2.0, 4.0);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double d = std::hypot(x - cx, y - cy);
        if (d < r) img.at(y, x) = 0.25;
        else if (d < r + 1.0) img.at(y, x) = 0.85;
      }
    }
  }
  return img;
}

}  // namespace

TEST_CASE("tv_penalty matches the hand-evaluated cases") {
  tensor::Tape tape;
  auto u = tape.leaf({1, 2, 2}, {0.0, 1.0, 0.0, 1.0});
  CHECK(solver::tv_penalty(tape, u, 1, 0.0).scalar() == doctest::Approx(2.0));
  CHECK(solver::tv_penalty(tape, u, 2, 0.0).scalar() == doctest::Approx(2.0));
  // the default smoothing puts a floor of 2*sqrt(eps) per pixel under |.|
  auto c = tape.leaf({1, 4, 4}, std::vector<double>(16, 0.3));
  CHECK(solver::tv_penalty(tape, c, 1).scalar() ==
        doctest::Approx(16 * 2 * 1e-4).epsilon(1e-9));
  CHECK(solver::tv_penalty(tape, c, 1, 0.0).scalar() == 0.0);
}

TEST_CASE("frame_objective is zero for an exact fit with lambda=0") {
  const auto w = net::build_network(toy_net(), 3);
  const auto z = net::make_seed_image(16, 16, 5);
  degrade::DegradationSpec spec;
  spec.magnification = 2;
  const Image out = net::forward(w, z);
  const Image y = degrade::downsample(out, 2);

  tensor::Tape tape;
  auto g = solver::frame_objective(tape, w, z, y,
                                   spec, toy_solver(solver::Method::kRdpv), false);
  CHECK(g.objective.scalar() == doctest::Approx(0.0).epsilon(1e-18));
}

TEST_CASE("frame_objective of a constant network output is the pure data term") {
  // zeroed weights: every conv output is 0, sigmoid(0) = 0.5 everywhere
  auto w = net::build_network(toy_net(), 3);
  for (auto& p : w.params) {
    std::fill(p.values.begin(), p.values.end(), 0.0);
  }
  const auto z = net::make_seed_image(16, 16, 5);
  degrade::DegradationSpec spec;
  spec.magnification = 2;
  Image y(8, 8, 0.3);

  tensor::Tape tape;
  auto cfg = toy_solver(solver::Method::kRdpvTvi, 0.01);
  cfg.tv_eps = 0.0;  // exact TV: a constant output contributes nothing
  auto g = solver::frame_objective(tape, w, z, y, spec, cfg, false);
  // data term: 64 pixels x (0.5 - 0.3)^2
  CHECK(g.objective.scalar() == doctest::Approx(64 * 0.04).epsilon(1e-9));
}

TEST_CASE("frame_objective rejects mismatched observation shapes") {
  const auto w = net::build_network(toy_net(), 3);
  const auto z = net::make_seed_image(16, 16, 5);
  degrade::DegradationSpec spec;
  spec.magnification = 2;
  Image y(5, 5, 0.3);
  tensor::Tape tape;
  CHECK_THROWS_AS(solver::frame_objective(tape, w, z, y, spec,
                                          toy_solver(solver::Method::kRdpv), false),
                  std::invalid_argument);
}

TEST_CASE("frame_objective gradients match finite differences for all methods") {
  const auto w = net::build_network(toy_net(), 11);
  const auto z = net::make_seed_image(16, 16, 7);
  degrade::DegradationSpec spec;
  spec.magnification = 2;
  const Image y = cellish_image(8, 2);

  RandomStream rng(42);
  for (const auto method : {solver::Method::kDpv, solver::Method::kRdpv,
                            solver::Method::kRdpvTva, solver::Method::kRdpvTvi}) {
    const double lambda = solver::method_has_tv(method) ? 0.01 : 0.0;
    const auto cfg = toy_solver(method, lambda);

    tensor::Tape tape;
    auto g = solver::frame_objective(tape, w, z, y, spec, cfg, true);
    tape.backward(g.objective);

    int checked = 0;
    for (int probe = 0; probe < 30 && checked < 5; ++probe) {
      const std::size_t t = rng.uniform_index(w.params.size());
      const std::size_t i = rng.uniform_index(w.params[t].values.size());
      auto f = [&](const std::vector<double>& x) {
        net::NetworkWeights wm = w;
        wm.params[t].values = x;
        tensor::Tape ft;
        return solver::frame_objective(ft, wm, z, y, spec, cfg, false)
            .objective.scalar();
      };
      const double fd = central_diff(f, w.params[t].values, i, 1e-5);
      if (std::abs(fd) < 1e-6) continue;
      REQUIRE(g.params[t].has_grad());
      const double analytic = g.params[t].grad()[i];
      CHECK_MESSAGE(rel_err(analytic, fd) < 1e-4,
                    solver::method_name(method) << " param " << t << " coord " << i);
      ++checked;
    }
    CHECK(checked > 0);
  }
}

TEST_CASE("adam: zero gradient from a fresh state leaves weights unchanged") {
  net::NetworkWeights w;
  w.params.push_back({"w", {2}, {1.0, -2.0}});
  auto state = solver::AdamState::for_weights(w);
  std::vector<double> zero(2, 0.0);
  for (int i = 0; i < 5; ++i) {
    solver::adam_step(w, {std::span<const double>(zero)}, state, {});
  }
  CHECK(w.params[0].values[0] == 1.0);
  CHECK(w.params[0].values[1] == -2.0);

  // nonzero moments decay by the configured factors on a zero gradient
  state.m[0] = {0.5, 0.5};
  state.v[0] = {0.25, 0.25};
  solver::adam_step(w, {std::span<const double>(zero)}, state, {});
  CHECK(state.m[0][0] == doctest::Approx(0.45));
  CHECK(state.v[0][0] == doctest::Approx(0.25 * 0.999));
}

TEST_CASE("adam drives a scalar quadratic toward the minimum") {
  // direct simulation from w=1 with step 0.1: the iterate walks down at
  // roughly the step size, overshoots zero near step 11, and settles into a
  // shrinking oscillation around the minimum
  net::NetworkWeights w;
  w.params.push_back({"w", {1}, {1.0}});
  auto state = solver::AdamState::for_weights(w);
  solver::AdamParams hyper;
  hyper.step = 0.1;
  std::vector<double> history;
  for (int i = 0; i < 50; ++i) {
    const double grad = 2.0 * w.params[0].values[0];  // d/dw of w^2
    std::vector<double> g{grad};
    solver::adam_step(w, {std::span<const double>(g)}, state, hyper);
    history.push_back(std::abs(w.params[0].values[0]));
  }
  for (int i = 1; i < 8; ++i) CHECK(history[i] < history[i - 1]);
  for (double h : history) CHECK(h < 1.0);
  double tail = 0.0;
  for (int i = 40; i < 50; ++i) tail = std::max(tail, history[i]);
  CHECK(tail < 0.2);
}

TEST_CASE("adam is deterministic") {
  auto run = []() {
    net::NetworkWeights w;
    w.params.push_back({"w", {2}, {0.3, -0.7}});
    auto state = solver::AdamState::for_weights(w);
    for (int i = 0; i < 20; ++i) {
      std::vector<double> g{w.params[0].values[0], std::sin(i * 0.1)};
      solver::adam_step(w, {std::span<const double>(g)}, state, {});
    }
    return w.params[0].values;
  };
  CHECK(run() == run());
}

TEST_CASE("adam aborts on a non-finite gradient") {
  net::NetworkWeights w;
  w.params.push_back({"w", {1}, {1.0}});
  auto state = solver::AdamState::for_weights(w);
  std::vector<double> g{std::nan("")};
  CHECK_THROWS_AS(solver::adam_step(w, {std::span<const double>(g)}, state, {}),
                  solver::SolverAbort);
}

TEST_CASE("early_stop_check criterion") {
  // strictly constant window fires
  std::vector<double> flat(50, 1.0);
  CHECK(solver::early_stop_check(flat, 50, 1e-4));
  // geometric decrease never fires
  std::vector<double> geo;
  double v = 1.0;
  for (int i = 0; i < 50; ++i) {
    geo.push_back(v);
    v *= 0.9;
  }
  CHECK_FALSE(solver::early_stop_check(geo, 50, 1e-4));
  // tiny total relative decrease fires
  std::vector<double> tiny;
  for (int i = 0; i < 50; ++i) tiny.push_back(1.0 - 1e-6 * i / 49.0);
  CHECK(solver::early_stop_check(tiny, 50, 1e-4));
  // window shorter than patience: false
  std::vector<double> shorty(10, 1.0);
  CHECK_FALSE(solver::early_stop_check(shorty, 50, 1e-4));
}

TEST_CASE("solve_frame with a budget of 1 records exactly one iteration") {
  const auto w = net::build_network(toy_net(), 3);
  const auto z = net::make_seed_image(16, 16, 5);
  degrade::DegradationSpec spec;
  spec.magnification = 2;
  const Image y = cellish_image(8, 3);
  solver::FrameBudget budget;
  budget.max_iters = 1;
  budget.early_stop = false;
  const auto r = solver::solve_frame(y, w, z, toy_solver(solver::Method::kDpv),
                                     spec, budget);
  CHECK(r.trace.objective.size() == 1);
  CHECK(r.trace.stop_iteration == 1);
  CHECK(r.trace.stop_reason == solver::StopReason::kMaxIters);
}

TEST_CASE("solve_frame beats bicubic on a noise-free toy frame") {
  const Image hr = cellish_image(32, 4);
  const Image y = degrade::downsample(hr, 2);
  degrade::DegradationSpec spec;
  spec.magnification = 2;

  solver::SolverConfig cfg = toy_solver(solver::Method::kRdpv);
  cfg.max_iters_first = 500;
  cfg.early_stop_start_first = 500;  // no early stop: fixed 500 iterations
  cfg.patience = 50;

  const auto w = net::build_network(toy_net(), 9);
  const auto z = net::make_seed_image(32, 32, 10);
  solver::FrameBudget budget;
  budget.max_iters = 500;
  budget.early_stop = false;
  const auto r = solver::solve_frame(y, w, z, cfg, spec, budget);

  const Image bic = degrade::bicubic_upsample(y, 2);
  const double psnr_sr = metrics::psnr(r.sr, hr);
  const double psnr_bic = metrics::psnr(bic, hr);
  MESSAGE("psnr sr=" << psnr_sr << " bicubic=" << psnr_bic);
  CHECK(psnr_sr > psnr_bic);
}

TEST_CASE("early stopping engages on corrupted frames for most seeds") {
  degrade::DegradationSpec spec;
  spec.magnification = 2;

  // default first-frame budgets: max 1000, early stop from 500, patience 50
  solver::SolverConfig cfg = toy_solver(solver::Method::kRdpv);
  cfg.max_iters_first = 1000;
  cfg.early_stop_start_first = 500;
  cfg.patience = 50;

  int stopped_early = 0;
  for (int seed = 0; seed < 10; ++seed) {
    const Image hr = cellish_image(32, 100 + seed);
    Image y = degrade::downsample(hr, 2);
    y = degrade::add_awgn(y, 0.001, 200 + seed);
    const auto w = net::build_network(toy_net(), 300 + seed);
    const auto z = net::make_seed_image(32, 32, 400 + seed);
    solver::FrameBudget budget;
    budget.max_iters = cfg.max_iters_first;
    budget.early_stop_start = cfg.early_stop_start_first;
    budget.early_stop = true;
    const auto r = solver::solve_frame(y, w, z, cfg, spec, budget);
    if (r.trace.stop_reason == solver::StopReason::kPatienceFlat &&
        r.trace.stop_iteration < cfg.max_iters_first) {
      ++stopped_early;
    }
  }
  MESSAGE("early stopped on " << stopped_early << "/10 seeds");
  CHECK(stopped_early >= 7);
}

TEST_CASE("run_video on one frame equals solve_frame") {
  degrade::DegradationSpec spec;
  spec.magnification = 2;
  FrameSequence lr;
  lr.frames.push_back(cellish_image(8, 5));
  const auto cfg = toy_solver(solver::Method::kRdpv);

  const auto video = solver::run_video(lr, toy_net(), cfg, spec, 1234);
  REQUIRE(video.sr.size() == 1);

  const auto z = net::make_seed_image(16, 16, derive_seed(1234, "video-z"));
  const auto w = net::build_network(toy_net(), derive_seed(1234, "init", 0));
  solver::FrameBudget budget;
  budget.max_iters = cfg.max_iters_first;
  budget.early_stop_start = cfg.early_stop_start_first;
  budget.early_stop = true;
  const auto frame = solver::solve_frame(lr.frames[0], w, z, cfg, spec, budget);
  CHECK(video.sr.frames[0].pixels() == frame.sr.pixels());
  CHECK(video.traces[0].objective == frame.trace.objective);
}

TEST_CASE("RDPV warm start reduces the iteration count on later frames") {
  degrade::DegradationSpec spec;
  spec.magnification = 2;
  // near-static five-frame toy video
  FrameSequence lr;
  const Image hr = cellish_image(32, 6);
  for (int f = 0; f < 5; ++f) {
    lr.frames.push_back(degrade::downsample(hr, 2));
  }
  solver::SolverConfig cfg = toy_solver(solver::Method::kRdpv);
  cfg.max_iters_first = 300;
  cfg.early_stop_start_first = 100;
  cfg.max_iters_rest = 150;
  cfg.early_stop_start_rest = 30;
  cfg.patience = 30;

  const auto video = solver::run_video(lr, toy_net(), cfg, spec, 99);
  double mean_rest = 0.0;
  for (std::size_t f = 1; f < video.traces.size(); ++f) {
    mean_rest += video.traces[f].stop_iteration;
  }
  mean_rest /= 4.0;
  MESSAGE("frame1=" << video.traces[0].stop_iteration << " rest mean=" << mean_rest);
  CHECK(mean_rest < video.traces[0].stop_iteration);
}

TEST_CASE("TV variants with lambda=0 reproduce RDPV bit-for-bit") {
  degrade::DegradationSpec spec;
  spec.magnification = 2;
  FrameSequence lr;
  for (int f = 0; f < 2; ++f) lr.frames.push_back(cellish_image(8, 7 + f));

  const auto base = solver::run_video(lr, toy_net(),
                                      toy_solver(solver::Method::kRdpv), spec, 5);
  for (const auto method : {solver::Method::kRdpvTva, solver::Method::kRdpvTvi}) {
    const auto tv = solver::run_video(lr, toy_net(), toy_solver(method, 0.0), spec, 5);
    REQUIRE(tv.sr.size() == base.sr.size());
    for (std::size_t f = 0; f < base.sr.size(); ++f) {
      CHECK(tv.sr.frames[f].pixels() == base.sr.frames[f].pixels());
      CHECK(tv.traces[f].objective == base.traces[f].objective);
    }
  }
}

TEST_CASE("DPV consumes per-frame budgets from an RDPV run") {
  degrade::DegradationSpec spec;
  spec.magnification = 2;
  FrameSequence lr;
  for (int f = 0; f < 3; ++f) lr.frames.push_back(cellish_image(8, 20 + f));

  const auto rdpv = solver::run_video(lr, toy_net(),
                                      toy_solver(solver::Method::kRdpv), spec, 6);
  solver::SolverConfig dpv_cfg = toy_solver(solver::Method::kDpv);
  for (const auto& t : rdpv.traces) {
    dpv_cfg.dpv_frame_budgets.push_back(t.stop_iteration);
  }
  const auto dpv = solver::run_video(lr, toy_net(), dpv_cfg, spec, 6);
  for (std::size_t f = 0; f < dpv.traces.size(); ++f) {
    CHECK(dpv.traces[f].stop_iteration == rdpv.traces[f].stop_iteration);
    CHECK(dpv.traces[f].stop_reason == solver::StopReason::kMaxIters);
  }
}

TEST_CASE("full run_video is reproducible bit-for-bit") {
  degrade::DegradationSpec spec;
  spec.magnification = 2;
  FrameSequence lr;
  for (int f = 0; f < 2; ++f) lr.frames.push_back(cellish_image(8, 30 + f));
  const auto cfg = toy_solver(solver::Method::kRdpvTvi, 1e-3);

  const auto a = solver::run_video(lr, toy_net(), cfg, spec, 77);
  const auto b = solver::run_video(lr, toy_net(), cfg, spec, 77);
  for (std::size_t f = 0; f < a.sr.size(); ++f) {
    CHECK(a.sr.frames[f].pixels() == b.sr.frames[f].pixels());
  }
}

TEST_CASE("solver config validation") {
  solver::SolverConfig cfg;
  cfg.patience = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.early_stop_start_first = cfg.max_iters_first + 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  CHECK_NOTHROW(cfg.validate());
  // paper-profile defaults are pinned
  CHECK(cfg.max_iters_first == 1000);
  CHECK(cfg.early_stop_start_first == 500);
  CHECK(cfg.max_iters_rest == 500);
  CHECK(cfg.early_stop_start_rest == 300);
  CHECK(cfg.patience == 50);
}
