#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "rdpv/metrics.hpp"
#include "rdpv/sim.hpp"
#include "rdpv/tracking.hpp"

using namespace rdpv;

namespace {

sim::SimParams desk_params() {
  sim::SimParams p;
  p.frame_height = 64;
  p.frame_width = 64;
  p.n_immune = 6;
  p.n_frames = 30;
  p.drift_modulus = 0.4;
  p.diffusion = 0.6;
  p.t_eff = 30;
  p.immune_radius = 3.0;
  p.tumor_radius = 6.0;
  p.potential.repulsion_range = 11.0;
  p.potential.attraction_range = 24.0;
  p.potential.repulsion_strength = 60.0;
  p.potential.attraction_strength = 0.25;
  p.potential.max_step = 2.0;
  p.seed = 1;
  return p;
}

}  // namespace

TEST_CASE("zero dynamics leave every immune cell stationary") {
  sim::SimParams p = desk_params();
  p.drift_modulus = 0.0;
  p.diffusion = 0.0;
  p.potential_enabled = false;
  const auto tracks = sim::simulate_trajectories(p);
  for (const auto& t : tracks) {
    for (const auto& s : t.samples) {
      CHECK(s.x == t.samples.front().x);
      CHECK(s.y == t.samples.front().y);
    }
  }
}

TEST_CASE("default parameters produce 17 trajectories of length 100") {
  sim::SimParams p;  // paper-scale defaults
  p.seed = 3;
  const auto tracks = sim::simulate_trajectories(p);
  REQUIRE(tracks.size() == 17);
  for (const auto& t : tracks) {
    CHECK(t.samples.size() == 100);
    for (const auto& s : t.samples) {
      CHECK(s.x >= 0.0);
      CHECK(s.x <= 287.0);
      CHECK(s.y >= 0.0);
      CHECK(s.y <= 287.0);
    }
  }
  // tumor stationary at the frame center
  CHECK(tracks[0].samples.front().x == doctest::Approx(143.5));
  for (const auto& s : tracks[0].samples) {
    CHECK(s.x == tracks[0].samples.front().x);
    CHECK(s.y == tracks[0].samples.front().y);
  }
}

TEST_CASE("no two cells start closer than the sum of their radii") {
  sim::SimParams p = desk_params();
  p.seed = 9;
  const auto tracks = sim::simulate_trajectories(p);
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    for (std::size_t j = i + 1; j < tracks.size(); ++j) {
      const auto& a = tracks[i].samples.front();
      const auto& b = tracks[j].samples.front();
      const double d = std::hypot(a.x - b.x, a.y - b.y);
      CHECK(d >= tracks[i].radius + tracks[j].radius - 1e-9);
    }
  }
}

TEST_CASE("attraction regime: distance to the tumor is non-increasing") {
  sim::SimParams p = desk_params();
  p.frame_height = 288;
  p.frame_width = 288;
  p.n_immune = 1;
  p.n_frames = 120;
  p.t_eff = 120;
  p.diffusion = 0.0;
  p.drift_modulus = 0.2;
  p.potential.attraction_range = 400.0;  // pure attraction everywhere outside
  const auto tracks = sim::simulate_trajectories(p);
  const auto& tumor = tracks[0].samples;
  const auto& imm = tracks[1].samples;
  double prev = std::hypot(imm[0].x - tumor[0].x, imm[0].y - tumor[0].y);
  for (std::size_t t = 1; t < imm.size(); ++t) {
    const double d = std::hypot(imm[t].x - tumor[t].x, imm[t].y - tumor[t].y);
    if (prev > p.potential.repulsion_range + 1.0) {
      CHECK(d <= prev + 1e-9);
    }
    prev = d;
  }
}

TEST_CASE("pure diffusion gives a linear ensemble MSD") {
  sim::SimParams p;
  p.frame_height = 2200;
  p.frame_width = 2200;
  p.n_immune = 1000;
  p.n_frames = 40;
  p.t_eff = 0;
  p.potential_enabled = false;
  p.drift_modulus = 0.0;
  p.diffusion = 1.0;
  p.immune_radius = 1.0;
  p.tumor_radius = 2.0;
  p.seed = 17;
  const auto tracks = sim::simulate_trajectories(p);
  std::vector<Trajectory> immune(tracks.begin() + 1, tracks.end());
  const auto msd = metrics::msd_curve(immune);
  REQUIRE(msd.size() == 40);

  // least squares fit msd[t] ~ a + b t, expect R^2 > 0.95 and b near 2*D^2
  const int n = static_cast<int>(msd.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int t = 0; t < n; ++t) {
    sx += t;
    sy += msd[t];
    sxx += static_cast<double>(t) * t;
    sxy += t * msd[t];
  }
  const double b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double a = (sy - b * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean = sy / n;
  for (int t = 0; t < n; ++t) {
    const double fit = a + b * t;
    ss_res += (msd[t] - fit) * (msd[t] - fit);
    ss_tot += (msd[t] - mean) * (msd[t] - mean);
  }
  const double r2 = 1.0 - ss_res / ss_tot;
  MESSAGE("slope=" << b << " r2=" << r2);
  CHECK(r2 > 0.95);
  CHECK(b == doctest::Approx(2.0).epsilon(0.15));  // 2 sigma^2 per frame
}

TEST_CASE("pure drift gives the exact quadratic MSD") {
  sim::SimParams p;
  p.frame_height = 1024;
  p.frame_width = 1024;
  p.n_immune = 4;
  p.n_frames = 20;
  p.t_eff = 0;
  p.potential_enabled = false;
  p.drift_modulus = 0.5;
  p.diffusion = 0.0;
  p.seed = 23;
  const auto tracks = sim::simulate_trajectories(p);
  std::vector<Trajectory> immune(tracks.begin() + 1, tracks.end());
  const auto msd = metrics::msd_curve(immune);
  for (std::size_t t = 0; t < msd.size(); ++t) {
    const double expect = (0.5 * static_cast<double>(t)) * (0.5 * static_cast<double>(t));
    CHECK(msd[t] == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("render: empty trajectory list gives uniform background frames") {
  sim::SimParams p = desk_params();
  p.n_frames = 3;
  const auto frames = sim::render_frames({}, p);
  REQUIRE(frames.size() == 3);
  for (const auto& f : frames.frames) {
    for (double v : f.pixels()) CHECK(v == doctest::Approx(0.5));
  }
}

TEST_CASE("render: one stationary cell gives identical frames") {
  sim::SimParams p = desk_params();
  p.n_frames = 4;
  Trajectory t;
  t.track_id = 0;
  t.radius = 5.0;
  for (int f = 0; f < 4; ++f) t.samples.push_back({f, 30.0, 28.0});
  const auto frames = sim::render_frames({t}, p);
  for (std::size_t f = 1; f < frames.size(); ++f) {
    CHECK(frames.frames[f].pixels() == frames.frames[0].pixels());
  }
  // intensities stay in [0,1]
  for (double v : frames.frames[0].pixels()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("closed loop: a rendered disk is recovered by the localizer") {
  sim::SimParams p = desk_params();
  p.n_frames = 1;
  Trajectory t;
  t.track_id = 0;
  t.radius = 5.0;
  t.samples.push_back({0, 20.0, 30.0});
  const auto frames = sim::render_frames({t}, p);

  const auto detections = track::cht_localize(frames.frames[0], 3.0, 8.0, 1.0);
  REQUIRE(detections.size() == 1);
  CHECK(std::abs(detections[0].x - 20.0) <= 1.0);
  CHECK(std::abs(detections[0].y - 30.0) <= 1.0);
  CHECK(std::abs(detections[0].radius - 5.0) <= 1.0);
}

TEST_CASE("make_dataset writes frames and GT CSVs, deterministically") {
  namespace fs = std::filesystem;
  sim::SimParams p = desk_params();
  p.n_frames = 6;
  p.t_eff = 6;
  p.n_immune = 3;
  const fs::path base = fs::temp_directory_path() / "rdpv_sim_test";
  fs::remove_all(base);

  const auto dirs_a = sim::make_dataset(2, p, 555, base / "a");
  const auto dirs_b = sim::make_dataset(2, p, 555, base / "b");
  REQUIRE(dirs_a.size() == 2);

  // identical corpora byte for byte
  for (std::size_t v = 0; v < dirs_a.size(); ++v) {
    for (const auto& entry : fs::recursive_directory_iterator(dirs_a[v])) {
      if (!entry.is_regular_file()) continue;
      const fs::path rel = fs::relative(entry.path(), dirs_a[v]);
      std::ifstream fa(entry.path(), std::ios::binary);
      std::ifstream fb(dirs_b[v] / rel, std::ios::binary);
      REQUIRE(fb.good());
      std::string ca((std::istreambuf_iterator<char>(fa)), {});
      std::string cb((std::istreambuf_iterator<char>(fb)), {});
      CHECK(ca == cb);
    }
    CHECK(fs::exists(dirs_a[v] / "gt_tracks.csv"));
    CHECK(fs::exists(dirs_a[v] / "frames" / "frame_0000.pgm"));
  }
  // distinct videos get distinct seeds
  std::ifstream f0(dirs_a[0] / "gt_tracks.csv");
  std::ifstream f1(dirs_a[1] / "gt_tracks.csv");
  std::string c0((std::istreambuf_iterator<char>(f0)), {});
  std::string c1((std::istreambuf_iterator<char>(f1)), {});
  CHECK(c0 != c1);
  fs::remove_all(base);
}

TEST_CASE("parameter validation") {
  sim::SimParams p = desk_params();
  p.t_eff = p.n_frames + 1;
  CHECK_THROWS_AS(sim::simulate_trajectories(p), std::invalid_argument);
  p = desk_params();
  p.immune_radius = 0.0;
  CHECK_THROWS_AS(sim::simulate_trajectories(p), std::invalid_argument);
}
